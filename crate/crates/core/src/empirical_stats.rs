//! Descriptive statistics per voltage class: quantile summaries, band
//! fractions, histograms and correlations.
//!
//! Quantiles use linear interpolation at rank `h = (n - 1) p + 1` on the
//! sorted sample (Hyndman–Fan type 7). The "80% range" is `[q10, q90]`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub n: usize,
    pub median: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub q10: f64,
    pub q90: f64,
}

fn sorted_finite(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite sample value {v}")));
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// Type-7 quantile of an already sorted, non-empty sample.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn quantile(values: &[f64], p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("quantile level {p} outside [0, 1]")));
    }
    Ok(quantile_sorted(&sorted_finite(values)?, p))
}

pub fn summarize(values: &[f64]) -> Result<SummaryStats> {
    let s = sorted_finite(values)?;
    let n = s.len();
    // summed in sorted order so the result does not depend on input order
    let mean = s.iter().sum::<f64>() / n as f64;
    Ok(SummaryStats {
        n,
        median: quantile_sorted(&s, 0.5),
        mean,
        min: s[0],
        max: s[n - 1],
        q10: quantile_sorted(&s, 0.1),
        q90: quantile_sorted(&s, 0.9),
    })
}

/// Fraction of values inside the closed interval `[lo, hi]`.
pub fn band_fraction(values: &[f64], lo: f64, hi: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!("band [{lo}, {hi}] is empty")));
    }
    let inside = values.iter().filter(|&&v| v >= lo && v <= hi).count();
    Ok(inside as f64 / values.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binning {
    FixedCount(usize),
    /// Freedman–Diaconis width `2 IQR n^(-1/3)`, bin count clamped to [10, 200].
    #[default]
    FreedmanDiaconis,
}

pub const FD_MIN_BINS: usize = 10;
pub const FD_MAX_BINS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub densities: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    /// `bin_lo,bin_hi,count,density` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count,density\n");
        for i in 0..self.bins() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                self.edges[i],
                self.edges[i + 1],
                self.counts[i],
                self.densities[i]
            );
        }
        out
    }
}

fn fd_bin_count(sorted: &[f64]) -> usize {
    let n = sorted.len() as f64;
    let iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    let range = sorted[sorted.len() - 1] - sorted[0];
    let width = 2.0 * iqr / n.cbrt();
    let bins = if width > 0.0 {
        (range / width).ceil()
    } else {
        f64::INFINITY
    };
    (bins.min(FD_MAX_BINS as f64) as usize).max(FD_MIN_BINS)
}

/// Equal-width histogram over `[min, max]`. Values equal to the maximum land
/// in the last bin.
pub fn histogram(values: &[f64], binning: Binning) -> Result<Histogram> {
    let s = sorted_finite(values)?;
    let (min, max) = (s[0], s[s.len() - 1]);
    if !(max > min) {
        return Err(Error::Degenerate(
            "all values are identical; histogram width is zero".into(),
        ));
    }
    let bins = match binning {
        Binning::FixedCount(k) if k < 2 => {
            return Err(Error::InvalidArgument(format!("need at least 2 bins, got {k}")))
        }
        Binning::FixedCount(k) => k,
        Binning::FreedmanDiaconis => fd_bin_count(&s),
    };
    let width = (max - min) / bins as f64;
    let mut edges: Vec<f64> = (0..=bins).map(|i| min + width * i as f64).collect();
    edges[bins] = max;
    let mut counts = vec![0u64; bins];
    for &v in &s {
        let mut i = (((v - min) / width) as usize).min(bins - 1);
        // guard against rounding at interior edges
        while i > 0 && v < edges[i] {
            i -= 1;
        }
        while i + 1 < bins && v >= edges[i + 1] {
            i += 1;
        }
        counts[i] += 1;
    }
    let n = s.len() as f64;
    let densities = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| c as f64 / (n * (edges[i + 1] - edges[i])))
        .collect();
    Ok(Histogram {
        edges,
        densities,
        counts,
    })
}

fn check_pair(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidArgument(format!(
            "series lengths differ ({} vs {})",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::InvalidArgument("correlation needs at least 2 points".into()));
    }
    Ok(())
}

/// Pearson product-moment correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair(xs, ys)?;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("correlation of a constant series".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the average of their ranks.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson on average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair(xs, ys)?;
    pearson(&average_ranks(xs), &average_ranks(ys))
}
