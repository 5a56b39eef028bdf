//! The four parametric families used to describe branch parameters:
//! t location-scale, generalized extreme value, exponential (mean
//! parameterization) and normal.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::rng::{UniformStream, SAMPLE_STREAM};

/// GEV shapes closer to zero than this are pushed out to it.
pub const MIN_ABS_GEV_SHAPE: f64 = 1e-6;

/// Initial half-width of the TLS quantile bracket, in units of scale.
const TLS_BRACKET: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Tls,
    Gev,
    Exponential,
    Normal,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Tls, Family::Gev, Family::Exponential, Family::Normal];

    pub fn tag(self) -> &'static str {
        match self {
            Family::Tls => "tls",
            Family::Gev => "gev",
            Family::Exponential => "exponential",
            Family::Normal => "normal",
        }
    }

    pub fn param_count(self) -> usize {
        match self {
            Family::Tls | Family::Gev => 3,
            Family::Normal => 2,
            Family::Exponential => 1,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown family `{s}`")))
    }
}

/// A fully parameterized distribution.
///
/// JSON form: `{"family": "gev", "params": {"mu": .., "sigma": .., "zeta": ..}}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistSpecRepr", into = "DistSpecRepr")]
pub enum DistSpec {
    Tls { mu: f64, sigma: f64, nu: f64 },
    Gev { mu: f64, sigma: f64, zeta: f64 },
    Exponential { mu: f64 },
    Normal { mu: f64, sigma: f64 },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "lowercase")]
enum DistSpecRepr {
    Tls { mu: f64, sigma: f64, nu: f64 },
    Gev { mu: f64, sigma: f64, zeta: f64 },
    Exponential { mu: f64 },
    Normal { mu: f64, sigma: f64 },
}

impl TryFrom<DistSpecRepr> for DistSpec {
    type Error = Error;

    fn try_from(r: DistSpecRepr) -> Result<Self> {
        let d = match r {
            DistSpecRepr::Tls { mu, sigma, nu } => DistSpec::Tls { mu, sigma, nu },
            DistSpecRepr::Gev { mu, sigma, zeta } => DistSpec::Gev { mu, sigma, zeta },
            DistSpecRepr::Exponential { mu } => DistSpec::Exponential { mu },
            DistSpecRepr::Normal { mu, sigma } => DistSpec::Normal { mu, sigma },
        };
        d.validate()?;
        Ok(d)
    }
}

impl From<DistSpec> for DistSpecRepr {
    fn from(d: DistSpec) -> Self {
        match d {
            DistSpec::Tls { mu, sigma, nu } => DistSpecRepr::Tls { mu, sigma, nu },
            DistSpec::Gev { mu, sigma, zeta } => DistSpecRepr::Gev { mu, sigma, zeta },
            DistSpec::Exponential { mu } => DistSpecRepr::Exponential { mu },
            DistSpec::Normal { mu, sigma } => DistSpecRepr::Normal { mu, sigma },
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be finite and positive, got {v}")))
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be finite, got {v}")))
    }
}

impl DistSpec {
    pub fn tls(mu: f64, sigma: f64, nu: f64) -> Result<Self> {
        let d = DistSpec::Tls { mu, sigma, nu };
        d.validate().map(|_| d)
    }

    pub fn gev(mu: f64, sigma: f64, zeta: f64) -> Result<Self> {
        let d = DistSpec::Gev { mu, sigma, zeta };
        d.validate().map(|_| d)
    }

    pub fn exponential(mu: f64) -> Result<Self> {
        let d = DistSpec::Exponential { mu };
        d.validate().map(|_| d)
    }

    pub fn normal(mu: f64, sigma: f64) -> Result<Self> {
        let d = DistSpec::Normal { mu, sigma };
        d.validate().map(|_| d)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DistSpec::Tls { mu, sigma, nu } => {
                finite("mu", mu)?;
                positive("sigma", sigma)?;
                positive("nu", nu)
            }
            DistSpec::Gev { mu, sigma, zeta } => {
                finite("mu", mu)?;
                positive("sigma", sigma)?;
                finite("zeta", zeta)?;
                if zeta == 0.0 {
                    Err(Error::InvalidArgument("GEV shape must be nonzero".into()))
                } else {
                    Ok(())
                }
            }
            DistSpec::Exponential { mu } => positive("mu", mu),
            DistSpec::Normal { mu, sigma } => {
                finite("mu", mu)?;
                positive("sigma", sigma)
            }
        }
    }

    pub fn family(&self) -> Family {
        match self {
            DistSpec::Tls { .. } => Family::Tls,
            DistSpec::Gev { .. } => Family::Gev,
            DistSpec::Exponential { .. } => Family::Exponential,
            DistSpec::Normal { .. } => Family::Normal,
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            DistSpec::Tls { mu, sigma, nu } => {
                let z = (x - mu) / sigma;
                let ln = ln_gamma((nu + 1.0) / 2.0)
                    - ln_gamma(nu / 2.0)
                    - sigma.ln()
                    - 0.5 * (nu * PI).ln()
                    - (nu + 1.0) / 2.0 * (z * z / nu).ln_1p();
                ln.exp()
            }
            DistSpec::Gev { mu, sigma, zeta } => {
                let t = 1.0 + zeta * (x - mu) / sigma;
                if !(t > 0.0) {
                    return 0.0;
                }
                let ln_t = t.ln();
                let s = (-ln_t / zeta).exp();
                // (1/σ) t^(-1/ζ - 1) e^(-t^(-1/ζ))
                ((-1.0 / zeta - 1.0) * ln_t - s).exp() / sigma
            }
            DistSpec::Exponential { mu } => {
                if x < 0.0 {
                    0.0
                } else {
                    (-x / mu).exp() / mu
                }
            }
            DistSpec::Normal { mu, sigma } => {
                let z = (x - mu) / sigma;
                (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt())
            }
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        match *self {
            DistSpec::Tls { mu, sigma, nu } => {
                let z = (x - mu) / sigma;
                ln_gamma((nu + 1.0) / 2.0)
                    - ln_gamma(nu / 2.0)
                    - sigma.ln()
                    - 0.5 * (nu * PI).ln()
                    - (nu + 1.0) / 2.0 * (z * z / nu).ln_1p()
            }
            DistSpec::Gev { mu, sigma, zeta } => {
                let t = 1.0 + zeta * (x - mu) / sigma;
                if !(t > 0.0) {
                    return f64::NEG_INFINITY;
                }
                let ln_t = t.ln();
                -sigma.ln() + (-1.0 / zeta - 1.0) * ln_t - (-ln_t / zeta).exp()
            }
            DistSpec::Exponential { mu } => {
                if x < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    -mu.ln() - x / mu
                }
            }
            DistSpec::Normal { mu, sigma } => {
                let z = (x - mu) / sigma;
                -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * PI).ln()
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            DistSpec::Tls { mu, sigma, nu } => student_t_cdf((x - mu) / sigma, nu),
            DistSpec::Gev { mu, sigma, zeta } => {
                let t = 1.0 + zeta * (x - mu) / sigma;
                if !(t > 0.0) {
                    return if zeta > 0.0 { 0.0 } else { 1.0 };
                }
                (-(-t.ln() / zeta).exp()).exp()
            }
            DistSpec::Exponential { mu } => {
                if x < 0.0 {
                    0.0
                } else {
                    -(-x / mu).exp_m1()
                }
            }
            DistSpec::Normal { mu, sigma } => 0.5 * erfc(-(x - mu) / (sigma * SQRT_2)),
        }
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidArgument(format!("probability {p} outside (0, 1)")));
        }
        Ok(match *self {
            DistSpec::Tls { mu, sigma, nu } => mu + sigma * student_t_quantile(p, nu),
            DistSpec::Gev { mu, sigma, zeta } => {
                mu + sigma * ((-zeta * (-p.ln()).ln()).exp_m1()) / zeta
            }
            DistSpec::Exponential { mu } => -mu * (-p).ln_1p(),
            DistSpec::Normal { mu, sigma } => mu + sigma * standard_normal_quantile(p),
        })
    }

    /// `n` draws by inverse-transform sampling from the seeded stream
    /// `(seed, SAMPLE_STREAM)`.
    pub fn sample(&self, seed: u64, n: usize) -> Vec<f64> {
        let mut u = UniformStream::new(seed, SAMPLE_STREAM);
        (0..n).map(|_| self.draw(&mut u)).collect()
    }

    pub fn draw(&self, u: &mut UniformStream) -> f64 {
        self.quantile(u.next_open01())
            .expect("uniform draws lie in (0, 1)")
    }

    /// Probability mass on `[lo, hi]`.
    pub fn mass(&self, lo: f64, hi: f64) -> f64 {
        (self.cdf(hi) - self.cdf(lo)).max(0.0)
    }
}

fn student_t_cdf(t: f64, nu: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let t2 = t * t;
    if t2 < nu {
        // near the center: P(|T| < |t|) = I_{t²/(ν+t²)}(1/2, ν/2)
        let inner = beta_reg(0.5, nu / 2.0, t2 / (nu + t2));
        0.5 + 0.5 * inner.copysign(t)
    } else {
        let tail = 0.5 * beta_reg(nu / 2.0, 0.5, nu / (nu + t2));
        if t < 0.0 {
            tail
        } else {
            1.0 - tail
        }
    }
}

fn student_t_pdf(t: f64, nu: f64) -> f64 {
    (ln_gamma((nu + 1.0) / 2.0)
        - ln_gamma(nu / 2.0)
        - 0.5 * (nu * PI).ln()
        - (nu + 1.0) / 2.0 * (t * t / nu).ln_1p())
    .exp()
}

/// Safeguarded Newton on the lower tail, bracketed by `[-TLS_BRACKET, 0]`
/// (widened if the target lies further out).
fn student_t_quantile(p: f64, nu: f64) -> f64 {
    if p == 0.5 {
        return 0.0;
    }
    // work in the lower half; 1 - p is exact for p in [0.5, 1)
    let (target, upper) = if p < 0.5 { (p, false) } else { (1.0 - p, true) };

    let mut lo = -TLS_BRACKET;
    while student_t_cdf(lo, nu) > target && lo > -1e300 {
        lo *= 1e3;
    }
    let mut hi = 0.0_f64;

    let zn = standard_normal_quantile(target);
    let mut z = (zn + (zn * zn * zn + zn) / (4.0 * nu)).clamp(lo, -f64::MIN_POSITIVE);
    for _ in 0..200 {
        let f = student_t_cdf(z, nu) - target;
        if f == 0.0 {
            break;
        }
        if f > 0.0 {
            hi = z;
        } else {
            lo = z;
        }
        let d = student_t_pdf(z, nu);
        let mut next = z - f / d;
        if !(next > lo && next < hi) || !next.is_finite() {
            // bisect, geometrically when the bracket spans many decades
            next = if hi < 0.0 && lo / hi > 16.0 {
                -((-lo).sqrt() * (-hi).sqrt())
            } else {
                0.5 * (lo + hi)
            };
        }
        if (next - z).abs() <= 4.0 * f64::EPSILON * z.abs() {
            z = next;
            break;
        }
        z = next;
    }
    if upper {
        -z
    } else {
        z
    }
}

/// Standard normal quantile from `erfc_inv`, polished by one Newton step.
fn standard_normal_quantile(p: f64) -> f64 {
    let mut z = -SQRT_2 * erfc_inv(2.0 * p);
    let phi = (-0.5 * z * z).exp() / (2.0 * PI).sqrt();
    if phi > 0.0 {
        let err = 0.5 * erfc(-z / SQRT_2) - p;
        z -= err / phi;
    }
    z
}
