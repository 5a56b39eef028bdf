//! Synthetic transformer and line parameters drawn from a reference profile.
//!
//! Rating, reactance and X/R are drawn independently, each from its own
//! random stream, so reactance on the unit's own base is uncorrelated with
//! the rating while reactance on the system base falls as the rating grows.

use std::f64::consts::LN_10;
use std::fmt::Write as _;

use serde::Serialize;

use crate::distributions::DistSpec;
use crate::error::{Error, Result};
use crate::grid_ingest::{BranchKind, BranchRecord};
use crate::per_unit::to_common_base;
use crate::reference_profiles::{ParameterKind, Profile, ReferenceEntry};
use crate::rng::UniformStream;

pub const DEFAULT_TLS_NU: f64 = 3.0;
pub const DEFAULT_SYSTEM_MVA_BASE: f64 = 100.0;
/// Line reactance mean that puts 90% of the mass below 0.02 p.u.
pub const DEFAULT_LINE_REACTANCE_MEAN: f64 = 0.02 / LN_10;
pub const MAX_TRUNCATION_TRIES: usize = 1000;

pub const PARAMS_CSV_HEADER: &str = "kind,class_kv,mva_rating,x_pu_own,r_pu_own,x_pu_common,r_pu_common,xr";

const MVA_STREAM: u64 = 1;
const X_STREAM: u64 = 2;
const XR_STREAM: u64 = 3;
const CALIBRATION_TOLERANCE: f64 = 1e-9;
const LOW_SIDE_KV: f64 = 13.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SyntheticBranchParams {
    pub kind: BranchKind,
    pub class_kv: f64,
    pub mva_rating: f64,
    /// Transformers only.
    pub x_pu_own: Option<f64>,
    /// Transformers only.
    pub r_pu_own: Option<f64>,
    pub x_pu_common: f64,
    pub r_pu_common: f64,
    pub xr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibratedTls {
    pub dist: DistSpec,
    /// |achieved band mass − target band mass|.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformerOptions {
    pub system_mva_base: f64,
    pub nu: f64,
}

impl Default for TransformerOptions {
    fn default() -> Self {
        Self {
            system_mva_base: DEFAULT_SYSTEM_MVA_BASE,
            nu: DEFAULT_TLS_NU,
        }
    }
}

fn profile_err(entry: &ReferenceEntry, reason: &str) -> Error {
    Error::Profile {
        kind: entry.kind.to_string(),
        class_kv: entry.class_kv,
        reason: reason.to_string(),
    }
}

fn require(profile: &Profile, kind: ParameterKind, class_kv: f64) -> Result<&ReferenceEntry> {
    profile.lookup(kind, class_kv).ok_or_else(|| Error::Profile {
        kind: kind.to_string(),
        class_kv,
        reason: "missing from profile".into(),
    })
}

/// Bisection on ln σ for `mass(σ) = target`, where `mass` decreases in σ
/// from `sup` (σ → 0) to `inf` (σ → ∞).
fn solve_sigma(mass: impl Fn(f64) -> f64, target: f64, scale: f64) -> f64 {
    let (mut lo, mut hi) = ((scale * 1e-12).ln(), (scale * 1e9).ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let m = mass(mid.exp());
        if (m - target).abs() <= CALIBRATION_TOLERANCE * 1e-3 {
            return mid.exp();
        }
        if m > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    (0.5 * (lo + hi)).exp()
}

fn calibration_target(target: &ReferenceEntry, nu: f64) -> Result<(f64, f64, f64, f64)> {
    if target.kind != ParameterKind::TransformerReactanceOwnBase {
        return Err(profile_err(target, "calibration needs a transformer reactance entry"));
    }
    if !(nu.is_finite() && nu > 1.0) {
        return Err(Error::InvalidArgument(format!("TLS shape must exceed 1, got {nu}")));
    }
    let median = target
        .summary
        .and_then(|s| s.median)
        .ok_or_else(|| profile_err(target, "median required for calibration"))?;
    let band = target
        .band
        .ok_or_else(|| profile_err(target, "band required for calibration"))?;
    if !(band.lo <= median && median <= band.hi) {
        return Err(profile_err(target, "band must contain the median"));
    }
    if band.fraction <= 0.0 {
        return Err(profile_err(target, "band fraction must be positive"));
    }
    Ok((median, band.lo, band.hi, band.fraction))
}

fn finish(mu: f64, sigma: f64, nu: f64, achieved: impl Fn(&DistSpec) -> f64, fraction: f64) -> Result<CalibratedTls> {
    let dist = DistSpec::tls(mu, sigma, nu)?;
    let residual = (achieved(&dist) - fraction).abs();
    Ok(CalibratedTls { dist, residual })
}

/// TLS with location at the target median and scale chosen so the mass of
/// the target band equals the target fraction.
pub fn calibrate_reactance_tls(target: &ReferenceEntry, nu: f64) -> Result<CalibratedTls> {
    let (median, lo, hi, fraction) = calibration_target(target, nu)?;
    if fraction >= 1.0 {
        return Err(Error::Unachievable {
            target: fraction,
            supremum: 1.0,
        });
    }
    let mass = |d: &DistSpec| d.mass(lo, hi);
    let sigma = solve_sigma(
        |s| DistSpec::Tls { mu: median, sigma: s, nu }.mass(lo, hi),
        fraction,
        hi - lo,
    );
    finish(median, sigma, nu, mass, fraction)
}

/// Like [`calibrate_reactance_tls`], but matches the band mass of the
/// distribution conditioned on `[t_lo, t_hi]`, which is what truncated
/// sampling from it produces.
pub fn calibrate_reactance_tls_truncated(target: &ReferenceEntry, nu: f64, (t_lo, t_hi): (f64, f64)) -> Result<CalibratedTls> {
    let (median, lo, hi, fraction) = calibration_target(target, nu)?;
    if !(t_lo <= median && median <= t_hi) {
        return Err(profile_err(target, "truncation interval must contain the median"));
    }
    let (blo, bhi) = (lo.max(t_lo), hi.min(t_hi));
    let conditional = move |d: &DistSpec| d.mass(blo, bhi) / d.mass(t_lo, t_hi);
    if fraction >= 1.0 {
        return Err(Error::Unachievable {
            target: fraction,
            supremum: 1.0,
        });
    }
    // as σ grows the conditional density flattens over the truncation window
    let floor = (bhi - blo) / (t_hi - t_lo);
    if fraction <= floor {
        return Err(Error::Unachievable {
            target: fraction,
            supremum: floor,
        });
    }
    let sigma = solve_sigma(
        |s| conditional(&DistSpec::Tls { mu: median, sigma: s, nu }),
        fraction,
        hi - lo,
    );
    finish(median, sigma, nu, conditional, fraction)
}

struct Truncated {
    dist: DistSpec,
    lo: f64,
    hi: f64,
    what: String,
}

impl Truncated {
    fn draw(&self, u: &mut UniformStream) -> Result<f64> {
        for _ in 0..MAX_TRUNCATION_TRIES {
            let v = self.dist.draw(u);
            if v >= self.lo && v <= self.hi {
                return Ok(v);
            }
        }
        Err(Error::TruncationExhausted(self.what.clone()))
    }
}

/// Truncation window: the entry's reference range when present, else
/// the positive half-line.
fn window(entry: Option<&ReferenceEntry>) -> (f64, f64) {
    let s = entry.and_then(|e| e.summary).unwrap_or_default();
    let lo = s.min.filter(|&v| v > 0.0).unwrap_or(f64::MIN_POSITIVE);
    let hi = s.max.unwrap_or(f64::INFINITY);
    (lo, hi)
}

fn fitted(entry: &ReferenceEntry) -> Result<DistSpec> {
    entry
        .fitted
        .ok_or_else(|| profile_err(entry, "fitted distribution required for sampling"))
}

fn check_request(n: usize, system_mva_base: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if !(system_mva_base.is_finite() && system_mva_base > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "system MVA base must be positive, got {system_mva_base}"
        )));
    }
    Ok(())
}

pub fn generate_transformers(class_kv: f64, n: usize, seed: u64, profile: &Profile, system_mva_base: f64) -> Result<Vec<SyntheticBranchParams>> {
    generate_transformers_with(
        class_kv,
        n,
        seed,
        profile,
        &TransformerOptions {
            system_mva_base,
            ..TransformerOptions::default()
        },
    )
}

/// Transformers whose rating, own-base reactance and X/R are independent
/// draws, each truncated to the profile's reference range. The reactance
/// TLS is calibrated against the truncated band mass.
pub fn generate_transformers_with(class_kv: f64, n: usize, seed: u64, profile: &Profile, opts: &TransformerOptions) -> Result<Vec<SyntheticBranchParams>> {
    check_request(n, opts.system_mva_base)?;
    let mva_entry = require(profile, ParameterKind::TransformerMvaRating, class_kv)?;
    let x_entry = require(profile, ParameterKind::TransformerReactanceOwnBase, class_kv)?;
    let xr_entry = require(profile, ParameterKind::TransformerXr, class_kv)?;

    let x_window = window(Some(x_entry));
    let mva = Truncated {
        dist: fitted(mva_entry)?,
        lo: window(Some(mva_entry)).0,
        hi: window(Some(mva_entry)).1,
        what: format!("transformer MVA rating at {class_kv} kV"),
    };
    let x = Truncated {
        dist: calibrate_reactance_tls_truncated(x_entry, opts.nu, x_window)?.dist,
        lo: x_window.0,
        hi: x_window.1,
        what: format!("transformer reactance at {class_kv} kV"),
    };
    let xr = Truncated {
        dist: fitted(xr_entry)?,
        lo: window(Some(xr_entry)).0,
        hi: window(Some(xr_entry)).1,
        what: format!("transformer X/R at {class_kv} kV"),
    };

    let mut u_mva = UniformStream::new(seed, MVA_STREAM);
    let mut u_x = UniformStream::new(seed, X_STREAM);
    let mut u_xr = UniformStream::new(seed, XR_STREAM);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let rating = mva.draw(&mut u_mva)?;
        let x_own = x.draw(&mut u_x)?;
        let ratio = xr.draw(&mut u_xr)?;
        let r_own = x_own / ratio;
        out.push(SyntheticBranchParams {
            kind: BranchKind::Transformer,
            class_kv,
            mva_rating: rating,
            x_pu_own: Some(x_own),
            r_pu_own: Some(r_own),
            x_pu_common: to_common_base(x_own, opts.system_mva_base, rating)?,
            r_pu_common: to_common_base(r_own, opts.system_mva_base, rating)?,
            xr: x_own / r_own,
        });
    }
    Ok(out)
}

/// Lines on the system base. Reactance falls back to the default
/// exponential mean when the profile has no fitted entry; capacity and X/R
/// need fitted normal entries.
pub fn generate_lines(class_kv: f64, n: usize, seed: u64, profile: &Profile) -> Result<Vec<SyntheticBranchParams>> {
    check_request(n, DEFAULT_SYSTEM_MVA_BASE)?;
    let x_entry = profile.lookup(ParameterKind::LineReactanceCommonBase, class_kv);
    let cap_entry = require(profile, ParameterKind::LineCapacity, class_kv)?;
    let xr_entry = require(profile, ParameterKind::LineXr, class_kv)?;

    let x_dist = match x_entry.and_then(|e| e.fitted) {
        Some(d) => d,
        None => DistSpec::exponential(DEFAULT_LINE_REACTANCE_MEAN)?,
    };
    let part = |dist: DistSpec, entry: Option<&ReferenceEntry>, what: &str| {
        let (lo, hi) = window(entry);
        Truncated {
            dist,
            lo,
            hi,
            what: format!("line {what} at {class_kv} kV"),
        }
    };
    let x = part(x_dist, x_entry, "reactance");
    let cap = part(fitted(cap_entry)?, Some(cap_entry), "capacity");
    let xr = part(fitted(xr_entry)?, Some(xr_entry), "X/R");

    let mut u_cap = UniformStream::new(seed, MVA_STREAM);
    let mut u_x = UniformStream::new(seed, X_STREAM);
    let mut u_xr = UniformStream::new(seed, XR_STREAM);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let rating = cap.draw(&mut u_cap)?;
        let x_common = x.draw(&mut u_x)?;
        let ratio = xr.draw(&mut u_xr)?;
        let r_common = x_common / ratio;
        out.push(SyntheticBranchParams {
            kind: BranchKind::TransmissionLine,
            class_kv,
            mva_rating: rating,
            x_pu_own: None,
            r_pu_own: None,
            x_pu_common: x_common,
            r_pu_common: r_common,
            xr: x_common / r_common,
        });
    }
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Parameter table with a header; own-base columns are empty for lines.
pub fn params_csv(params: &[SyntheticBranchParams]) -> String {
    let mut out = String::from(PARAMS_CSV_HEADER);
    out.push('\n');
    for p in params {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            p.kind.as_str(),
            p.class_kv,
            p.mva_rating,
            opt(p.x_pu_own),
            opt(p.r_pu_own),
            p.x_pu_common,
            p.r_pu_common,
            p.xr
        );
    }
    out
}

/// Branch records for the parameters, each on its own pair of buses.
/// Transformers step down to a 13.8 kV terminal (half the class voltage
/// for classes at or below it) with a unit tap; lines join two buses of
/// the class voltage.
pub fn to_branch_records(params: &[SyntheticBranchParams], system_mva_base: f64) -> Vec<BranchRecord> {
    params
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let from_bus = 2 * i as i64 + 1;
            let transformer = p.kind.is_transformer();
            let to_kv = if !transformer {
                p.class_kv
            } else if p.class_kv > LOW_SIDE_KV {
                LOW_SIDE_KV
            } else {
                p.class_kv / 2.0
            };
            BranchRecord {
                id: format!("{}-{}-1", from_bus, from_bus + 1),
                from_bus,
                to_bus: from_bus + 1,
                from_kv: p.class_kv,
                to_kv,
                r_pu: p.r_pu_common,
                x_pu: p.x_pu_common,
                mva_rating: p.mva_rating,
                tap_ratio: if transformer { 1.0 } else { 0.0 },
                system_mva_base,
            }
        })
        .collect()
}
