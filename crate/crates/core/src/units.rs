//! Quality-factor relations, power units and physical constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Speed of light in vacuum, m/s.
pub const C0: f64 = 299_792_458.0;

pub const TAU: f64 = std::f64::consts::TAU;

/// Angular frequency for a frequency in Hz. Frequencies are stored in Hz
/// everywhere; this is the only place the factor 2π is applied.
#[inline]
pub fn angular(f_hz: f64) -> f64 {
    TAU * f_hz
}

/// Power expressed in dBm.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct PowerLevel {
    pub dbm: f64,
}

impl PowerLevel {
    pub fn from_dbm(dbm: f64) -> Result<Self> {
        if !dbm.is_finite() {
            return Err(Error::InvalidInput(format!("power {dbm} dBm is not finite")));
        }
        Ok(PowerLevel { dbm })
    }

    pub fn from_watts(watts: f64) -> Result<Self> {
        Ok(PowerLevel { dbm: watts_to_dbm(watts)? })
    }

    pub fn watts(&self) -> f64 {
        1e-3 * 10f64.powf(self.dbm / 10.0)
    }
}

pub fn dbm_to_watts(dbm: f64) -> Result<f64> {
    PowerLevel::from_dbm(dbm).map(|p| p.watts())
}

pub fn watts_to_dbm(watts: f64) -> Result<f64> {
    if !(watts.is_finite() && watts > 0.0) {
        return Err(Error::InvalidInput(format!("power {watts} W must be finite and positive")));
    }
    Ok(10.0 * (watts / 1e-3).log10())
}

/// Internal Q from loaded and (real) external Q: `1/Qi = 1/Ql - 1/Qe`.
///
/// `q_external` may be `f64::INFINITY` (no coupling).
pub fn q_internal(q_loaded: f64, q_external: f64) -> Result<f64> {
    check_positive("q_loaded", q_loaded)?;
    if q_external.is_nan() || q_external <= 0.0 {
        return Err(Error::InvalidInput(format!("q_external = {q_external} must be positive")));
    }
    if q_external <= q_loaded {
        return Err(Error::NonPhysicalFit(format!("q_external {q_external} <= q_loaded {q_loaded}")));
    }
    Ok(1.0 / (1.0 / q_loaded - 1.0 / q_external))
}

/// Internal Q with the diameter correction for a complex external Q of
/// magnitude `q_external_mag` and phase `theta`:
/// `1/Qi = 1/Ql - cos(theta)/|Qe|`.
pub fn q_internal_from_fit(q_loaded: f64, q_external_mag: f64, theta: f64) -> Result<f64> {
    check_positive("q_loaded", q_loaded)?;
    check_positive("q_external_mag", q_external_mag)?;
    if !theta.is_finite() {
        return Err(Error::InvalidInput(format!("theta = {theta} is not finite")));
    }
    let inv = 1.0 / q_loaded - theta.cos() / q_external_mag;
    // Relative floor: an inverse Qi that is zero up to cancellation error is
    // treated as zero.
    let scale = 1.0 / q_loaded + theta.cos().abs() / q_external_mag;
    if inv <= 8.0 * f64::EPSILON * scale {
        return Err(Error::NonPhysicalFit(format!(
            "1/Qi = {inv:e} is not positive (Ql = {q_loaded}, |Qe| = {q_external_mag}, theta = {theta})"
        )));
    }
    Ok(1.0 / inv)
}

/// Loaded Q implied by internal and complex external Q (inverse of
/// [`q_internal_from_fit`]).
pub fn q_loaded_from(q_internal: f64, q_external_mag: f64, theta: f64) -> Result<f64> {
    check_positive("q_internal", q_internal)?;
    check_positive("q_external_mag", q_external_mag)?;
    let inv = 1.0 / q_internal + theta.cos() / q_external_mag;
    if inv <= 0.0 {
        return Err(Error::NonPhysicalFit(format!("1/Ql = {inv:e} is not positive")));
    }
    Ok(1.0 / inv)
}

/// Loaded, external and internal quality factors of one resonance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityFactors {
    pub q_loaded: f64,
    pub q_external_mag: f64,
    pub q_external_phase_theta: f64,
    pub q_internal: f64,
}

impl QualityFactors {
    pub fn from_fit(q_loaded: f64, q_external_mag: f64, theta: f64) -> Result<Self> {
        let q_internal = q_internal_from_fit(q_loaded, q_external_mag, theta)?;
        Ok(QualityFactors { q_loaded, q_external_mag, q_external_phase_theta: wrap_phase(theta), q_internal })
    }

    /// Real-part-corrected external Q, `|Qe| / cos(theta)`.
    pub fn q_external_eff(&self) -> f64 {
        self.q_external_mag / self.q_external_phase_theta.cos()
    }
}

/// Wraps an angle into (−π, π].
pub fn wrap_phase(x: f64) -> f64 {
    use std::f64::consts::PI;
    let mut y = x.rem_euclid(TAU);
    if y > PI {
        y -= TAU;
    }
    y
}

pub(crate) fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} = {v} must be finite and positive")))
    }
}
