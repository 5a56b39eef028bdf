//! Reference statistics per voltage class and parameter kind, and the
//! validation of observed grid statistics against them.
//!
//! The built-in profile holds transformer statistics for the 115, 138 and
//! 230 kV classes: own-base reactance summaries and the share inside
//! [0.05, 0.2] p.u., MVA rating and X/R summaries with their GEV fits.
//! Line entries name their distribution family only; line parameters come
//! from user profiles.

use serde::{Deserialize, Serialize};

use crate::distributions::{DistSpec, Family};
use crate::empirical_stats::{Histogram, SummaryStats};
use crate::error::{Error, Result};
use crate::fitting::kl_divergence;

/// Shipped copy of [`builtin_profile`] as JSON.
pub const BUILTIN_PROFILE_JSON: &str = include_str!("../data/builtin_profile.json");

const CLASS_MATCH_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterKind {
    TransformerReactanceOwnBase,
    TransformerMvaRating,
    TransformerXr,
    LineReactanceCommonBase,
    LineCapacity,
    LineXr,
}

impl ParameterKind {
    pub const ALL: [ParameterKind; 6] = [
        ParameterKind::TransformerReactanceOwnBase,
        ParameterKind::TransformerMvaRating,
        ParameterKind::TransformerXr,
        ParameterKind::LineReactanceCommonBase,
        ParameterKind::LineCapacity,
        ParameterKind::LineXr,
    ];

    /// Family that best describes this parameter in the reference data.
    pub fn reference_family(self) -> Family {
        match self {
            ParameterKind::TransformerReactanceOwnBase => Family::Tls,
            ParameterKind::TransformerMvaRating | ParameterKind::TransformerXr => Family::Gev,
            ParameterKind::LineReactanceCommonBase => Family::Exponential,
            ParameterKind::LineCapacity | ParameterKind::LineXr => Family::Normal,
        }
    }

    pub fn is_transformer(self) -> bool {
        matches!(
            self,
            ParameterKind::TransformerReactanceOwnBase
                | ParameterKind::TransformerMvaRating
                | ParameterKind::TransformerXr
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ParameterKind::TransformerReactanceOwnBase => "transformer_reactance_own_base",
            ParameterKind::TransformerMvaRating => "transformer_mva_rating",
            ParameterKind::TransformerXr => "transformer_xr",
            ParameterKind::LineReactanceCommonBase => "line_reactance_common_base",
            ParameterKind::LineCapacity => "line_capacity",
            ParameterKind::LineXr => "line_xr",
        }
    }
}

impl std::fmt::Display for ParameterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Summary-shaped reference; any field may be absent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSummary {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub median: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q10: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q90: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceEntry {
    pub kind: ParameterKind,
    pub class_kv: f64,
    /// Expected best-fitting family; defaults to the kind's reference family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Family>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<ReferenceSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<Band>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fitted: Option<DistSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_d_kl: Option<f64>,
}

impl ReferenceEntry {
    pub fn family(&self) -> Family {
        self.family.unwrap_or(self.kind.reference_family())
    }

    pub fn check(&self) -> Result<()> {
        let fail = |reason: &str| Error::Profile {
            kind: self.kind.to_string(),
            class_kv: self.class_kv,
            reason: reason.to_string(),
        };
        if !(self.class_kv.is_finite() && self.class_kv > 0.0) {
            return Err(fail("class voltage must be positive"));
        }
        if self.summary.is_none() && self.band.is_none() && self.fitted.is_none() && self.family.is_none() {
            return Err(fail("entry carries no reference data"));
        }
        if self.family() != self.kind.reference_family() {
            return Err(fail("family differs from the reference family for this kind"));
        }
        if let Some(d) = &self.fitted {
            d.validate()?;
            if d.family() != self.family() {
                return Err(fail("fitted distribution has the wrong family"));
            }
        }
        if let Some(b) = &self.band {
            if !(b.lo < b.hi) || !(0.0..=1.0).contains(&b.fraction) {
                return Err(fail("band must have lo < hi and a fraction in [0, 1]"));
            }
        }
        if let Some(s) = &self.summary {
            if let (Some(lo), Some(hi)) = (s.min, s.max) {
                if lo > hi {
                    return Err(fail("summary min exceeds max"));
                }
            }
        }
        Ok(())
    }
}

/// Reference entries with at most one entry per (kind, class).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ReferenceEntry>", into = "Vec<ReferenceEntry>")]
pub struct Profile {
    entries: Vec<ReferenceEntry>,
}

impl TryFrom<Vec<ReferenceEntry>> for Profile {
    type Error = Error;

    fn try_from(entries: Vec<ReferenceEntry>) -> Result<Self> {
        Profile::new(entries)
    }
}

impl From<Profile> for Vec<ReferenceEntry> {
    fn from(p: Profile) -> Self {
        p.entries
    }
}

impl Profile {
    pub fn new(entries: Vec<ReferenceEntry>) -> Result<Self> {
        for (i, e) in entries.iter().enumerate() {
            e.check()?;
            if entries[..i]
                .iter()
                .any(|o| o.kind == e.kind && (o.class_kv - e.class_kv).abs() < CLASS_MATCH_EPS)
            {
                return Err(Error::Profile {
                    kind: e.kind.to_string(),
                    class_kv: e.class_kv,
                    reason: "duplicate entry".into(),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }

    pub fn entries(&self) -> &[ReferenceEntry] {
        &self.entries
    }

    pub fn lookup(&self, kind: ParameterKind, class_kv: f64) -> Option<&ReferenceEntry> {
        self.entries
            .iter()
            .find(|e| e.kind == kind && (e.class_kv - class_kv).abs() < CLASS_MATCH_EPS)
    }

    pub fn classes(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for e in &self.entries {
            if !out.iter().any(|c| (c - e.class_kv).abs() < CLASS_MATCH_EPS) {
                out.push(e.class_kv);
            }
        }
        out.sort_by(f64::total_cmp);
        out
    }
}

fn summary(median: f64, mean: f64, range: (f64, f64), q: Option<(f64, f64)>) -> ReferenceSummary {
    ReferenceSummary {
        median: Some(median),
        mean: Some(mean),
        min: Some(range.0),
        max: Some(range.1),
        q10: q.map(|q| q.0),
        q90: q.map(|q| q.1),
    }
}

fn gev(mu: f64, sigma: f64, zeta: f64) -> Option<DistSpec> {
    Some(DistSpec::Gev { mu, sigma, zeta })
}

/// Reference statistics for the 115, 138 and 230 kV classes.
pub fn builtin_profile() -> Profile {
    use ParameterKind::*;
    let band = |fraction: f64| Band {
        lo: 0.05,
        hi: 0.2,
        fraction,
    };
    let mut entries = Vec::new();

    // own-base reactance: median, mean, range, share inside [0.05, 0.2] p.u.
    for (kv, med, mean, range, frac) in [
        (115.0, 0.1291, 0.1363, (3.92e-4, 1.0162), 0.8188),
        (138.0, 0.1246, 0.1381, (1.00e-4, 1.26), 0.8201),
        (230.0, 0.1260, 0.1392, (2.47e-4, 1.08), 0.8733),
    ] {
        entries.push(ReferenceEntry {
            kind: TransformerReactanceOwnBase,
            class_kv: kv,
            family: Some(Family::Tls),
            summary: Some(summary(med, mean, range, None)),
            band: Some(band(frac)),
            fitted: None,
            reference_d_kl: None,
        });
    }

    for (kv, med, mean, range, q, fit, dkl) in [
        (115.0, 53.0, 71.30, (3.0, 384.0), (22.0, 140.0), (41.08, 27.38, 0.3732), 0.1295),
        (138.0, 83.0, 117.24, (3.3, 616.0), (39.0, 239.0), (66.82, 42.31, 0.4166), 0.0990),
        (230.0, 203.0, 246.61, (10.0, 1380.0), (62.5, 470.0), (154.79, 105.61, 0.2433), 0.1148),
    ] {
        entries.push(ReferenceEntry {
            kind: TransformerMvaRating,
            class_kv: kv,
            family: Some(Family::Gev),
            summary: Some(summary(med, mean, range, Some(q))),
            band: None,
            fitted: gev(fit.0, fit.1, fit.2),
            reference_d_kl: Some(dkl),
        });
    }

    for (kv, med, mean, range, q, fit, dkl) in [
        (115.0, 25.39, 37.83, (0.0577, 5.41e3), (16.2, 47.5), (22.29, 10.70, 0.2135), 0.0918),
        (138.0, 29.58, 39.73, (0.2033, 1.92e3), (19.1, 54.0), (25.88, 12.34, 0.2167), 0.0949),
        (230.0, 44.37, 65.77, (0.1786, 4.03e3), (25.0, 84.0), (37.79, 19.67, 0.2594), 0.0984),
    ] {
        entries.push(ReferenceEntry {
            kind: TransformerXr,
            class_kv: kv,
            family: Some(Family::Gev),
            summary: Some(summary(med, mean, range, Some(q))),
            band: None,
            fitted: gev(fit.0, fit.1, fit.2),
            reference_d_kl: Some(dkl),
        });
    }

    for kind in [LineReactanceCommonBase, LineCapacity, LineXr] {
        for kv in [115.0, 138.0, 230.0] {
            entries.push(ReferenceEntry {
                kind,
                class_kv: kv,
                family: Some(kind.reference_family()),
                summary: None,
                band: None,
                fitted: None,
                reference_d_kl: None,
            });
        }
    }

    Profile::new(entries).expect("builtin profile is well formed")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationThresholds {
    /// Relative median tolerance.
    pub median_rel: f64,
    /// Absolute band-fraction tolerance.
    pub band_abs: f64,
    /// Reference range is widened to `[min / f, max * f]`.
    pub range_factor: f64,
    /// Maximum KL divergence (nats) against the reference fit.
    pub kl_max: f64,
    /// Maximum |Spearman| between own-base reactance and MVA rating.
    pub decorrelation_max: f64,
    /// Allowed KL gap (nats) between the reference family and the best family.
    pub family_rank_margin: f64,
}

impl Default for ValidationThresholds {
    fn default() -> Self {
        Self {
            median_rel: 0.25,
            band_abs: 0.10,
            range_factor: 1.5,
            kl_max: 0.3,
            decorrelation_max: 0.15,
            family_rank_margin: 0.05,
        }
    }
}

impl ValidationThresholds {
    pub fn check(&self) -> Result<()> {
        let all = [
            ("median_rel", self.median_rel),
            ("band_abs", self.band_abs),
            ("range_factor", self.range_factor),
            ("kl_max", self.kl_max),
            ("decorrelation_max", self.decorrelation_max),
            ("family_rank_margin", self.family_rank_margin),
        ];
        for (name, v) in all {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "threshold `{name}` must be finite and nonnegative, got {v}"
                )));
            }
        }
        if self.range_factor < 1.0 {
            return Err(Error::InvalidArgument(format!(
                "range_factor must be at least 1, got {}",
                self.range_factor
            )));
        }
        Ok(())
    }
}

/// Statistics observed for one (kind, class) of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedClass {
    pub kind: ParameterKind,
    pub class_kv: f64,
    pub summary: SummaryStats,
    /// Absent when every value is identical.
    pub histogram: Option<Histogram>,
    /// Share of values inside the reference band, when the entry has one.
    pub band_fraction: Option<f64>,
    /// Spearman correlation of own-base reactance with MVA rating.
    pub xown_mva_spearman: Option<f64>,
    /// `(family, d_kl)` ordered best first.
    pub family_ranking: Vec<(Family, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    NoData,
    MedianCheck,
    BandCheck,
    RangeCheck,
    KlCheck,
    DecorrelationCheck,
    FamilyRankCheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Quantity {
    Value(f64),
    Interval([f64; 2]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub kind: ParameterKind,
    pub class_kv: f64,
    pub check: CheckName,
    pub status: CheckStatus,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observed: Option<Quantity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected: Option<Quantity>,
    /// Name and value of the threshold that decided the check.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<(String, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub overall_pass: bool,
    pub thresholds: ValidationThresholds,
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn failures(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| !f.pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

struct FindingBuilder<'a> {
    entry: &'a ReferenceEntry,
    out: Vec<Finding>,
}

impl FindingBuilder<'_> {
    fn push(
        &mut self,
        check: CheckName,
        pass: Option<bool>,
        observed: Option<Quantity>,
        expected: Option<Quantity>,
        threshold: Option<(&str, f64)>,
        note: Option<String>,
    ) {
        let status = match pass {
            Some(true) => CheckStatus::Pass,
            Some(false) => CheckStatus::Fail,
            None => CheckStatus::Skipped,
        };
        self.out.push(Finding {
            kind: self.entry.kind,
            class_kv: self.entry.class_kv,
            check,
            status,
            pass: pass.unwrap_or(true),
            observed,
            expected,
            threshold: threshold.map(|(n, v)| (n.to_string(), v)),
            note,
        });
    }
}

/// Compares observed per-class statistics with every entry of `profile`.
/// Entries without observed data yield a skipped finding.
pub fn validate(
    observed: &[ObservedClass],
    profile: &Profile,
    thresholds: &ValidationThresholds,
) -> Result<ValidationReport> {
    thresholds.check()?;
    let mut findings = Vec::new();
    for entry in profile.entries() {
        let mut b = FindingBuilder {
            entry,
            out: Vec::new(),
        };
        let obs = observed
            .iter()
            .find(|o| o.kind == entry.kind && (o.class_kv - entry.class_kv).abs() < CLASS_MATCH_EPS);
        let Some(obs) = obs else {
            b.push(CheckName::NoData, None, None, None, None, Some("no observed data".into()));
            findings.extend(b.out);
            continue;
        };
        check_entry(&mut b, entry, obs, thresholds);
        findings.extend(b.out);
    }
    Ok(ValidationReport {
        overall_pass: findings.iter().all(|f| f.pass),
        thresholds: *thresholds,
        findings,
    })
}

fn check_entry(b: &mut FindingBuilder<'_>, entry: &ReferenceEntry, obs: &ObservedClass, t: &ValidationThresholds) {
    let summary = entry.summary.unwrap_or_default();

    if let Some(reference) = summary.median {
        let dev = (obs.summary.median / reference - 1.0).abs();
        b.push(
            CheckName::MedianCheck,
            Some(dev <= t.median_rel),
            Some(Quantity::Value(obs.summary.median)),
            Some(Quantity::Value(reference)),
            Some(("median_rel", t.median_rel)),
            None,
        );
    }

    if let Some(band) = entry.band {
        match obs.band_fraction {
            Some(f) => b.push(
                CheckName::BandCheck,
                Some((f - band.fraction).abs() <= t.band_abs),
                Some(Quantity::Value(f)),
                Some(Quantity::Value(band.fraction)),
                Some(("band_abs", t.band_abs)),
                None,
            ),
            None => b.push(
                CheckName::BandCheck,
                None,
                None,
                Some(Quantity::Value(band.fraction)),
                Some(("band_abs", t.band_abs)),
                Some("band fraction not observed".into()),
            ),
        }
    }

    if let (Some(lo), Some(hi)) = (summary.min, summary.max) {
        let (elo, ehi) = if lo >= 0.0 {
            (lo / t.range_factor, hi * t.range_factor)
        } else {
            let half = (hi - lo) * (t.range_factor - 1.0) / 2.0;
            (lo - half, hi + half)
        };
        let pass = obs.summary.min >= elo && obs.summary.max <= ehi;
        b.push(
            CheckName::RangeCheck,
            Some(pass),
            Some(Quantity::Interval([obs.summary.min, obs.summary.max])),
            Some(Quantity::Interval([elo, ehi])),
            Some(("range_factor", t.range_factor)),
            None,
        );
    }

    if let Some(fitted) = &entry.fitted {
        match &obs.histogram {
            Some(h) => {
                let d = kl_divergence(h, fitted).d_kl;
                b.push(
                    CheckName::KlCheck,
                    Some(d <= t.kl_max),
                    Some(Quantity::Value(d)),
                    Some(Quantity::Interval([0.0, t.kl_max])),
                    Some(("kl_max", t.kl_max)),
                    None,
                );
            }
            None => b.push(
                CheckName::KlCheck,
                None,
                None,
                None,
                Some(("kl_max", t.kl_max)),
                Some("degenerate sample has no histogram".into()),
            ),
        }
    }

    if entry.kind == ParameterKind::TransformerReactanceOwnBase {
        match obs.xown_mva_spearman {
            Some(rho) => b.push(
                CheckName::DecorrelationCheck,
                Some(rho.abs() <= t.decorrelation_max),
                Some(Quantity::Value(rho)),
                Some(Quantity::Interval([-t.decorrelation_max, t.decorrelation_max])),
                Some(("decorrelation_max", t.decorrelation_max)),
                None,
            ),
            None => b.push(
                CheckName::DecorrelationCheck,
                None,
                None,
                None,
                Some(("decorrelation_max", t.decorrelation_max)),
                Some("correlation not observed".into()),
            ),
        }
    }

    if !entry.kind.is_transformer() {
        let family = entry.family();
        let best = obs.family_ranking.first().map(|r| r.1);
        let own = obs.family_ranking.iter().find(|r| r.0 == family).map(|r| r.1);
        match (best, own) {
            (Some(best), Some(own)) => {
                let gap = own - best;
                b.push(
                    CheckName::FamilyRankCheck,
                    Some(gap <= t.family_rank_margin),
                    Some(Quantity::Value(gap)),
                    Some(Quantity::Interval([0.0, t.family_rank_margin])),
                    Some(("family_rank_margin", t.family_rank_margin)),
                    Some(format!(
                        "best family {}, reference family {family}",
                        obs.family_ranking[0].0
                    )),
                );
            }
            _ => b.push(
                CheckName::FamilyRankCheck,
                None,
                None,
                None,
                Some(("family_rank_margin", t.family_rank_margin)),
                Some(format!("reference family {family} was not ranked")),
            ),
        }
    }
}
