//! Maximum-likelihood fits of the four families and the binned
//! Kullback–Leibler goodness-of-fit score.
//!
//! Exponential and normal fits are closed form. TLS and GEV maximize the
//! log-likelihood with Nelder–Mead on standardized data, with `σ = e^s` and
//! `ν = e^t` so the simplex moves in an unconstrained space.

use serde::{Deserialize, Serialize};

use crate::distributions::{DistSpec, Family, MIN_ABS_GEV_SHAPE};
use crate::empirical_stats::{histogram, quantile_sorted, Binning, Histogram};
use crate::error::{Error, Result};
use crate::optimize::{nelder_mead, Minimum, NelderMeadOptions};

/// Floor applied to model bin masses so empty model bins stay finite.
pub const Q_FLOOR: f64 = 1e-12;

const EULER_GAMMA: f64 = 0.5772156649015329;
const MAX_TLS_NU: f64 = 1e7;
const MAX_RESTARTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub binning: Binning,
    pub max_iterations: usize,
    pub ll_tolerance: f64,
    pub tls_initial_nu: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            binning: Binning::FreedmanDiaconis,
            max_iterations: 2000,
            ll_tolerance: 1e-9,
            tls_initial_nu: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub dist: DistSpec,
    pub log_likelihood: f64,
    pub n: usize,
    pub converged: bool,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlScore {
    /// Natural-log divergence, in nats.
    pub d_kl: f64,
    pub bins_used: usize,
    pub empty_bins_skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFit {
    pub fit: FitResult,
    pub kl: KlScore,
}

pub fn log_likelihood(dist: &DistSpec, values: &[f64]) -> f64 {
    values.iter().map(|&x| dist.ln_pdf(x)).sum()
}

fn check_sample(family: Family, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite sample value {v}")));
    }
    if matches!(family, Family::Tls | Family::Gev) && values.len() < 5 {
        return Err(Error::InvalidArgument(format!(
            "{family} fit needs at least 5 values, got {}",
            values.len()
        )));
    }
    if family == Family::Exponential && values.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidArgument("exponential fit needs nonnegative values".into()));
    }
    if values.iter().all(|&v| v == values[0]) {
        return Err(Error::Degenerate("all sample values are equal".into()));
    }
    Ok(())
}

pub fn fit_mle(family: Family, values: &[f64], opts: &FitOptions) -> Result<FitResult> {
    check_sample(family, values)?;
    let n = values.len();
    let nf = n as f64;
    match family {
        Family::Exponential => {
            let mean = values.iter().sum::<f64>() / nf;
            let dist = DistSpec::exponential(mean)?;
            Ok(closed_form(dist, values))
        }
        Family::Normal => {
            let mean = values.iter().sum::<f64>() / nf;
            let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / nf;
            let dist = DistSpec::normal(mean, var.sqrt())?;
            Ok(closed_form(dist, values))
        }
        Family::Tls => Ok(fit_tls(values, opts)),
        Family::Gev => Ok(fit_gev(values, opts)),
    }
}

fn closed_form(dist: DistSpec, values: &[f64]) -> FitResult {
    FitResult {
        dist,
        log_likelihood: log_likelihood(&dist, values),
        n: values.len(),
        converged: true,
        iterations: 0,
        diagnostic: None,
    }
}

fn nm_options(opts: &FitOptions) -> NelderMeadOptions {
    NelderMeadOptions {
        max_iterations: opts.max_iterations,
        f_tolerance: opts.ll_tolerance,
        initial_step: 0.1,
    }
}

/// Nelder–Mead restarted from its own optimum until a restart no longer
/// improves the objective; a collapsed simplex can stall short of the
/// minimum. The iteration budget is shared across restarts.
fn minimize<F: Fn(&[f64]) -> f64>(f: F, start: &[f64], opts: &FitOptions) -> Minimum {
    let mut nm = nm_options(opts);
    let mut best = nelder_mead(&f, start, nm);
    for _ in 0..MAX_RESTARTS {
        if !best.converged || best.iterations >= opts.max_iterations {
            break;
        }
        nm.max_iterations = opts.max_iterations - best.iterations;
        nm.initial_step = 0.01;
        let again = nelder_mead(&f, &best.x, nm);
        let improved = best.f - again.f > opts.ll_tolerance;
        let total = best.iterations + again.iterations;
        if again.f <= best.f {
            best = Minimum { iterations: total, ..again };
        } else {
            best.iterations = total;
        }
        if !improved {
            break;
        }
    }
    best
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn fit_tls(values: &[f64], opts: &FitOptions) -> FitResult {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let center = quantile_sorted(&sorted, 0.5);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let scale = if iqr > 0.0 { iqr / 1.349 } else { mean_sd(values).1 };
    let ys: Vec<f64> = values.iter().map(|x| (x - center) / scale).collect();

    let unpack = |p: &[f64]| (p[0], p[1].exp(), p[2].exp().min(MAX_TLS_NU));
    let nll = |p: &[f64]| {
        let (mu, sigma, nu) = unpack(p);
        -log_likelihood(&DistSpec::Tls { mu, sigma, nu }, &ys)
    };
    let start = [0.0, 0.0, opts.tls_initial_nu.ln()];
    let m = minimize(nll, &start, opts);
    let (mu_y, sigma_y, nu) = unpack(&m.x);
    let dist = DistSpec::Tls {
        mu: center + scale * mu_y,
        sigma: scale * sigma_y,
        nu,
    };
    FitResult {
        dist,
        log_likelihood: log_likelihood(&dist, values),
        n: values.len(),
        converged: m.converged,
        iterations: m.iterations,
        diagnostic: (!m.converged).then(|| "iteration limit reached".to_string()),
    }
}

fn clamp_shape(zeta: f64) -> f64 {
    if zeta.abs() < MIN_ABS_GEV_SHAPE {
        if zeta < 0.0 {
            -MIN_ABS_GEV_SHAPE
        } else {
            MIN_ABS_GEV_SHAPE
        }
    } else {
        zeta
    }
}

fn fit_gev(values: &[f64], opts: &FitOptions) -> FitResult {
    let (mean, sd) = mean_sd(values);
    let ys: Vec<f64> = values.iter().map(|x| (x - mean) / sd).collect();

    let unpack = |p: &[f64]| (p[0], p[1].exp(), clamp_shape(p[2]));
    let nll = |p: &[f64]| {
        let (mu, sigma, zeta) = unpack(p);
        -log_likelihood(&DistSpec::Gev { mu, sigma, zeta }, &ys)
    };

    // Gumbel moment start in standardized units, then fallbacks that widen
    // the support when the data sit outside it
    let sigma0 = 6f64.sqrt() / std::f64::consts::PI;
    let mu0 = -EULER_GAMMA * sigma0;
    let starts = [
        [mu0, sigma0.ln(), 0.1],
        [mu0, sigma0.ln(), -0.1],
        [mu0, (10.0 * sigma0).ln(), 0.1],
        [mu0, (10.0 * sigma0).ln(), -0.1],
    ];
    let Some(start) = starts.iter().find(|s| nll(&s[..]).is_finite()) else {
        return FitResult {
            dist: DistSpec::Gev {
                mu: mean + sd * mu0,
                sigma: sd * sigma0,
                zeta: 0.1,
            },
            log_likelihood: f64::NEG_INFINITY,
            n: values.len(),
            converged: false,
            iterations: 0,
            diagnostic: Some("no starting point has the data inside the GEV support".into()),
        };
    };

    let m = minimize(nll, start, opts);
    let (mu_y, sigma_y, zeta) = unpack(&m.x);
    let dist = DistSpec::Gev {
        mu: mean + sd * mu_y,
        sigma: sd * sigma_y,
        zeta,
    };
    let log_likelihood = log_likelihood(&dist, values);
    let (converged, diagnostic) = if zeta <= -1.0 {
        (false, Some(format!("likelihood unbounded: shape {zeta} <= -1")))
    } else if !log_likelihood.is_finite() {
        (false, Some("fitted support excludes part of the data".into()))
    } else if !m.converged {
        (false, Some("iteration limit reached".into()))
    } else {
        (true, None)
    };
    FitResult {
        dist,
        log_likelihood,
        n: values.len(),
        converged,
        iterations: m.iterations,
        diagnostic,
    }
}

/// `Σ P(i) ln(P(i)/Q(i))` over bins with `P(i) > 0`; `Q(i)` is floored at
/// [`Q_FLOOR`].
pub fn kl_divergence_masses(p: &[f64], q: &[f64]) -> KlScore {
    assert_eq!(p.len(), q.len(), "mass vectors differ in length");
    let mut d = 0.0;
    let mut used = 0;
    let mut skipped = 0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            d += pi * (pi / qi.max(Q_FLOOR)).ln();
            used += 1;
        } else {
            skipped += 1;
        }
    }
    debug_assert!(d >= -1e-9, "negative divergence {d}");
    KlScore {
        d_kl: d.max(0.0),
        bins_used: used,
        empty_bins_skipped: skipped,
    }
}

/// Model mass of each histogram bin, from cdf differences.
pub fn bin_masses(edges: &[f64], q: &DistSpec) -> Vec<f64> {
    edges.windows(2).map(|w| q.mass(w[0], w[1])).collect()
}

pub fn kl_divergence(p_hist: &Histogram, q: &DistSpec) -> KlScore {
    let n = p_hist.total() as f64;
    let p: Vec<f64> = p_hist.counts.iter().map(|&c| c as f64 / n).collect();
    kl_divergence_masses(&p, &bin_masses(&p_hist.edges, q))
}

/// Fits each family and ranks them by divergence from the shared histogram
/// of `values`. Families that cannot describe the sample (an exponential
/// on negative data, too few points) are left out; an error is returned only
/// when none can. Non-converged fits go last; ties prefer fewer parameters,
/// then the family tag in lexicographic order.
pub fn select_best(values: &[f64], families: &[Family], opts: &FitOptions) -> Result<Vec<RankedFit>> {
    if families.is_empty() {
        return Err(Error::InvalidArgument("no families to compare".into()));
    }
    let hist = histogram(values, opts.binning)?;
    let mut ranked = Vec::with_capacity(families.len());
    let mut first_err = None;
    for &fam in families {
        match fit_mle(fam, values, opts) {
            Ok(fit) => {
                let kl = kl_divergence(&hist, &fit.dist);
                ranked.push(RankedFit { fit, kl });
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if ranked.is_empty() {
        return Err(first_err.expect("families is not empty"));
    }
    ranked.sort_by(|a, b| {
        let fa = a.fit.dist.family();
        let fb = b.fit.dist.family();
        b.fit
            .converged
            .cmp(&a.fit.converged)
            .then(a.kl.d_kl.total_cmp(&b.kl.d_kl))
            .then(fa.param_count().cmp(&fb.param_count()))
            .then(fa.tag().cmp(fb.tag()))
    });
    Ok(ranked)
}
