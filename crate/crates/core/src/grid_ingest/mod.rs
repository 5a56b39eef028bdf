//! Branch records, filtering, classification and voltage classes.

mod csv_format;
mod matpower;

pub use csv_format::{parse_branch_csv, serialize_branch_csv, BRANCH_CSV_HEADER};
pub use matpower::{parse_matpower_case, write_matpower_case, MatpowerCase};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default `(min, max)` MVA bounds outside which a rating is treated as a
/// placeholder rather than a real nameplate value.
pub const DEFAULT_RATING_BOUNDS: (f64, f64) = (1.0, 3000.0);

/// Transformers with X/R below this are flagged as likely autotransformers.
pub const DEFAULT_AUTOTRANSFORMER_XR: f64 = 4.0;

/// Relative terminal-voltage mismatch above which a branch is a transformer.
pub const DEFAULT_KV_MISMATCH: f64 = 0.02;

pub const DEFAULT_CLASS_TOLERANCE: f64 = 0.02;

/// One branch as found in a case. Impedances are per unit on the system base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    pub id: String,
    pub from_bus: i64,
    pub to_bus: i64,
    pub from_kv: f64,
    pub to_kv: f64,
    pub r_pu: f64,
    pub x_pu: f64,
    /// MVA; 0 means unreported.
    pub mva_rating: f64,
    /// 0 marks a line in MATPOWER convention.
    pub tap_ratio: f64,
    pub system_mva_base: f64,
}

impl BranchRecord {
    pub fn high_kv(&self) -> f64 {
        self.from_kv.max(self.to_kv)
    }

    fn all_finite(&self) -> bool {
        [
            self.from_kv,
            self.to_kv,
            self.r_pu,
            self.x_pu,
            self.mva_rating,
            self.tap_ratio,
            self.system_mva_base,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchKind {
    TransmissionLine,
    Transformer,
    AutotransformerSuspect,
}

impl BranchKind {
    pub fn is_transformer(self) -> bool {
        !matches!(self, BranchKind::TransmissionLine)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BranchKind::TransmissionLine => "transmission_line",
            BranchKind::Transformer => "transformer",
            BranchKind::AutotransformerSuspect => "autotransformer_suspect",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    NonPositiveR,
    NonPositiveX,
    ZeroRating,
    ExtremeRating,
    NonFinite,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterOutcome {
    pub kept: Vec<BranchRecord>,
    pub rejected: Vec<(BranchRecord, RejectReason)>,
}

fn reject_reason(rec: &BranchRecord, (min_mva, max_mva): (f64, f64)) -> Option<RejectReason> {
    if rec.r_pu <= 0.0 {
        Some(RejectReason::NonPositiveR)
    } else if rec.x_pu <= 0.0 {
        Some(RejectReason::NonPositiveX)
    } else if rec.mva_rating == 0.0 {
        Some(RejectReason::ZeroRating)
    } else if rec.mva_rating < min_mva || rec.mva_rating > max_mva {
        Some(RejectReason::ExtremeRating)
    } else if !rec.all_finite() {
        Some(RejectReason::NonFinite)
    } else {
        None
    }
}

/// Splits records into usable and rejected sets. Each rejected record carries
/// the first rule it fails, in the order of [`RejectReason`].
pub fn filter_valid(records: &[BranchRecord], rating_bounds: (f64, f64)) -> FilterOutcome {
    let mut out = FilterOutcome::default();
    for rec in records {
        match reject_reason(rec, rating_bounds) {
            None => out.kept.push(rec.clone()),
            Some(reason) => out.rejected.push((rec.clone(), reason)),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchClassifier {
    pub autotransformer_xr_threshold: f64,
    pub kv_mismatch_tolerance: f64,
}

impl Default for BranchClassifier {
    fn default() -> Self {
        Self {
            autotransformer_xr_threshold: DEFAULT_AUTOTRANSFORMER_XR,
            kv_mismatch_tolerance: DEFAULT_KV_MISMATCH,
        }
    }
}

impl BranchClassifier {
    pub fn classify(&self, rec: &BranchRecord) -> BranchKind {
        let hi = rec.high_kv();
        let mismatch = (rec.from_kv - rec.to_kv).abs() > self.kv_mismatch_tolerance * hi;
        if rec.tap_ratio != 0.0 || mismatch {
            if rec.x_pu / rec.r_pu < self.autotransformer_xr_threshold {
                BranchKind::AutotransformerSuspect
            } else {
                BranchKind::Transformer
            }
        } else {
            BranchKind::TransmissionLine
        }
    }
}

/// Classifies a filtered record using the default terminal-voltage tolerance.
pub fn classify_branch(rec: &BranchRecord, autotransformer_xr_threshold: f64) -> BranchKind {
    BranchClassifier {
        autotransformer_xr_threshold,
        ..BranchClassifier::default()
    }
    .classify(rec)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageClass {
    pub nominal_kv: f64,
    pub tolerance_frac: f64,
}

impl VoltageClass {
    pub fn new(nominal_kv: f64, tolerance_frac: f64) -> Result<Self> {
        if !(nominal_kv.is_finite() && nominal_kv > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "nominal voltage must be positive, got {nominal_kv}"
            )));
        }
        if !(0.0..=0.1).contains(&tolerance_frac) {
            return Err(Error::InvalidArgument(format!(
                "class tolerance must lie in [0, 0.1], got {tolerance_frac}"
            )));
        }
        Ok(Self {
            nominal_kv,
            tolerance_frac,
        })
    }

    fn bounds(&self) -> (f64, f64) {
        let d = self.nominal_kv * self.tolerance_frac;
        (self.nominal_kv - d, self.nominal_kv + d)
    }

    pub fn contains(&self, kv: f64) -> bool {
        let (lo, hi) = self.bounds();
        kv >= lo && kv <= hi
    }
}

/// Non-overlapping set of voltage classes, sorted by nominal voltage.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassTable {
    classes: Vec<VoltageClass>,
}

impl ClassTable {
    pub fn new(mut classes: Vec<VoltageClass>) -> Result<Self> {
        classes.sort_by(|a, b| a.nominal_kv.total_cmp(&b.nominal_kv));
        for pair in classes.windows(2) {
            if pair[0].bounds().1 >= pair[1].bounds().0 {
                return Err(Error::OverlappingClasses {
                    a: pair[0].nominal_kv,
                    b: pair[1].nominal_kv,
                });
            }
        }
        Ok(Self { classes })
    }

    pub fn from_nominals(nominals: &[f64], tolerance_frac: f64) -> Result<Self> {
        let classes = nominals
            .iter()
            .map(|&kv| VoltageClass::new(kv, tolerance_frac))
            .collect::<Result<Vec<_>>>()?;
        Self::new(classes)
    }

    /// The 115/138/230 kV classes at 2% tolerance.
    pub fn standard() -> Self {
        Self::from_nominals(&[115.0, 138.0, 230.0], DEFAULT_CLASS_TOLERANCE)
            .expect("standard classes do not overlap")
    }

    pub fn classes(&self) -> &[VoltageClass] {
        &self.classes
    }

    pub fn find(&self, kv: f64) -> Option<VoltageClass> {
        self.classes.iter().copied().find(|c| c.contains(kv))
    }
}

/// Transformers are grouped by their high-voltage terminal, lines by their
/// sending-end voltage.
pub fn assign_voltage_class(
    rec: &BranchRecord,
    kind: BranchKind,
    classes: &ClassTable,
) -> Option<VoltageClass> {
    let kv = if kind.is_transformer() {
        rec.high_kv()
    } else {
        rec.from_kv
    };
    classes.find(kv)
}

#[cfg(test)]
pub(crate) fn record(id: &str, from_kv: f64, to_kv: f64, r: f64, x: f64, mva: f64, tap: f64) -> BranchRecord {
    BranchRecord {
        id: id.to_string(),
        from_bus: 1,
        to_bus: 2,
        from_kv,
        to_kv,
        r_pu: r,
        x_pu: x,
        mva_rating: mva,
        tap_ratio: tap,
        system_mva_base: 100.0,
    }
}
