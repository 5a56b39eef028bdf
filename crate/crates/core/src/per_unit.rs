//! Per-unit base conversions and the X/R ratio.

use crate::error::{Error, Result};

/// Voltage (kV) and power (MVA) base pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseSpec {
    v_base: f64,
    s_base: f64,
}

impl BaseSpec {
    pub fn new(v_base_kv: f64, s_base_mva: f64) -> Result<Self> {
        if !(v_base_kv.is_finite() && v_base_kv > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "voltage base must be finite and positive, got {v_base_kv}"
            )));
        }
        if !(s_base_mva.is_finite() && s_base_mva > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "power base must be finite and positive, got {s_base_mva}"
            )));
        }
        Ok(Self {
            v_base: v_base_kv,
            s_base: s_base_mva,
        })
    }

    pub fn v_base(&self) -> f64 {
        self.v_base
    }

    pub fn s_base(&self) -> f64 {
        self.s_base
    }
}

/// Re-expresses a per-unit impedance given on `given` bases on `new` bases:
/// `z · (V_given / V_new)² · (S_new / S_given)`.
pub fn rebase_impedance(z_pu_given: f64, given: BaseSpec, new: BaseSpec) -> Result<f64> {
    if !z_pu_given.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "impedance must be finite, got {z_pu_given}"
        )));
    }
    let v_ratio = given.v_base / new.v_base;
    Ok(z_pu_given * (v_ratio * v_ratio) * (new.s_base / given.s_base))
}

/// Converts a per-unit quantity on the system common MVA base to the
/// equipment's own MVA rating. Zone voltage bases are assumed equal to the
/// nominal terminal voltages, so only the power term remains.
pub fn to_own_base(x_pu_common: f64, system_mva_base: f64, mva_rating: f64) -> Result<f64> {
    check_mva(system_mva_base, "system MVA base")?;
    check_mva(mva_rating, "MVA rating")?;
    if !x_pu_common.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "impedance must be finite, got {x_pu_common}"
        )));
    }
    Ok(x_pu_common * (mva_rating / system_mva_base))
}

/// Inverse of [`to_own_base`].
pub fn to_common_base(x_pu_own: f64, system_mva_base: f64, mva_rating: f64) -> Result<f64> {
    check_mva(system_mva_base, "system MVA base")?;
    check_mva(mva_rating, "MVA rating")?;
    if !x_pu_own.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "impedance must be finite, got {x_pu_own}"
        )));
    }
    Ok(x_pu_own * (system_mva_base / mva_rating))
}

/// X/R ratio. Base-invariant, since both parts scale by the same factor.
pub fn xr_ratio(r_pu: f64, x_pu: f64) -> Result<f64> {
    if !(r_pu > 0.0) || !r_pu.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "resistance must be positive for an X/R ratio, got {r_pu}"
        )));
    }
    Ok(x_pu / r_pu)
}

fn check_mva(v: f64, what: &str) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{what} must be finite and positive, got {v}"
        )))
    }
}
