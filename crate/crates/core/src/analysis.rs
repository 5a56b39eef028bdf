//! Per-class samples extracted from a grid case, and the observed statistics
//! that validation compares against a reference profile.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::distributions::Family;
use crate::empirical_stats::{band_fraction, histogram, spearman, summarize, Binning};
use crate::error::Result;
use crate::fitting::{select_best, FitOptions};
use crate::grid_ingest::{
    assign_voltage_class, filter_valid, BranchClassifier, BranchKind, BranchRecord, ClassTable,
    RejectReason, DEFAULT_RATING_BOUNDS,
};
use crate::per_unit::to_own_base;
use crate::reference_profiles::{ObservedClass, ParameterKind, Profile};

#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    pub rating_bounds: (f64, f64),
    pub classifier: BranchClassifier,
    pub classes: ClassTable,
    pub fit: FitOptions,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            rating_bounds: DEFAULT_RATING_BOUNDS,
            classifier: BranchClassifier::default(),
            classes: ClassTable::standard(),
            fit: FitOptions::default(),
        }
    }
}

/// Parameter samples of one voltage class. Transformer columns are aligned:
/// index `i` of each refers to the same branch, and likewise for lines.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ClassSamples {
    pub class_kv: f64,
    pub transformer_x_own: Vec<f64>,
    pub transformer_x_common: Vec<f64>,
    pub transformer_mva: Vec<f64>,
    pub transformer_xr: Vec<f64>,
    pub line_x: Vec<f64>,
    pub line_capacity: Vec<f64>,
    pub line_xr: Vec<f64>,
}

impl ClassSamples {
    fn new(class_kv: f64) -> Self {
        Self {
            class_kv,
            ..Self::default()
        }
    }

    pub fn values(&self, kind: ParameterKind) -> &[f64] {
        match kind {
            ParameterKind::TransformerReactanceOwnBase => &self.transformer_x_own,
            ParameterKind::TransformerMvaRating => &self.transformer_mva,
            ParameterKind::TransformerXr => &self.transformer_xr,
            ParameterKind::LineReactanceCommonBase => &self.line_x,
            ParameterKind::LineCapacity => &self.line_capacity,
            ParameterKind::LineXr => &self.line_xr,
        }
    }

    pub fn transformer_count(&self) -> usize {
        self.transformer_mva.len()
    }

    pub fn line_count(&self) -> usize {
        self.line_capacity.len()
    }
}

/// Bookkeeping of what happened to every record of a case.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CaseSummary {
    pub records: usize,
    pub rejected: BTreeMap<RejectReason, usize>,
    pub transmission_lines: usize,
    pub transformers: usize,
    pub autotransformer_suspects: usize,
    /// Kept records whose voltage falls in no class.
    pub unclassed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseSamples {
    pub summary: CaseSummary,
    /// One entry per class of the table, in ascending voltage.
    pub classes: Vec<ClassSamples>,
}

/// Filters, classifies and groups the records of a case. Autotransformer
/// suspects stay in the transformer samples; they are only counted apart.
pub fn collect_samples(records: &[BranchRecord], opts: &AnalysisOptions) -> Result<CaseSamples> {
    let outcome = filter_valid(records, opts.rating_bounds);
    let mut summary = CaseSummary {
        records: records.len(),
        ..CaseSummary::default()
    };
    for (_, reason) in &outcome.rejected {
        *summary.rejected.entry(*reason).or_default() += 1;
    }
    let mut classes: Vec<ClassSamples> = opts
        .classes
        .classes()
        .iter()
        .map(|c| ClassSamples::new(c.nominal_kv))
        .collect();

    for rec in &outcome.kept {
        let kind = opts.classifier.classify(rec);
        match kind {
            BranchKind::TransmissionLine => summary.transmission_lines += 1,
            BranchKind::Transformer => summary.transformers += 1,
            BranchKind::AutotransformerSuspect => summary.autotransformer_suspects += 1,
        }
        let Some(class) = assign_voltage_class(rec, kind, &opts.classes) else {
            summary.unclassed += 1;
            continue;
        };
        let slot = classes
            .iter_mut()
            .find(|c| c.class_kv == class.nominal_kv)
            .expect("class comes from the table");
        let xr = rec.x_pu / rec.r_pu;
        if kind.is_transformer() {
            slot.transformer_x_own
                .push(to_own_base(rec.x_pu, rec.system_mva_base, rec.mva_rating)?);
            slot.transformer_x_common.push(rec.x_pu);
            slot.transformer_mva.push(rec.mva_rating);
            slot.transformer_xr.push(xr);
        } else {
            slot.line_x.push(rec.x_pu);
            slot.line_capacity.push(rec.mva_rating);
            slot.line_xr.push(xr);
        }
    }
    Ok(CaseSamples { summary, classes })
}

/// Converged fits of every family, best (lowest divergence) first.
pub fn rank_families(values: &[f64], opts: &FitOptions) -> Vec<(Family, f64)> {
    select_best(values, &Family::ALL, opts)
        .map(|ranked| {
            ranked
                .into_iter()
                .filter(|r| r.fit.converged)
                .map(|r| (r.fit.dist.family(), r.kl.d_kl))
                .collect()
        })
        .unwrap_or_default()
}

/// Observed statistics for every non-empty (kind, class) pair. Band
/// fractions use the band of the matching profile entry; family rankings are
/// computed for line kinds only.
pub fn observe(samples: &CaseSamples, profile: &Profile, binning: Binning, fit: &FitOptions) -> Result<Vec<ObservedClass>> {
    let fit = FitOptions { binning, ..*fit };
    let mut out = Vec::new();
    for class in &samples.classes {
        for kind in ParameterKind::ALL {
            let values = class.values(kind);
            if values.is_empty() {
                continue;
            }
            let entry = profile.lookup(kind, class.class_kv);
            let band = match entry.and_then(|e| e.band) {
                Some(b) => Some(band_fraction(values, b.lo, b.hi)?),
                None => None,
            };
            let rho = if kind == ParameterKind::TransformerReactanceOwnBase {
                spearman(values, &class.transformer_mva).ok().filter(|r| r.is_finite())
            } else {
                None
            };
            let ranking = if kind.is_transformer() {
                Vec::new()
            } else {
                rank_families(values, &fit)
            };
            out.push(ObservedClass {
                kind,
                class_kv: class.class_kv,
                summary: summarize(values)?,
                histogram: histogram(values, binning).ok(),
                band_fraction: band,
                xown_mva_spearman: rho,
                family_ranking: ranking,
            });
        }
    }
    Ok(out)
}
