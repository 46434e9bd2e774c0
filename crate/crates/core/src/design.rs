//! Forward design of quarter-wave CPW resonators.
//!
//! Line parameters use the quasi-static conformal mapping for a zero-thickness
//! CPW on an infinitely thick substrate. The coupled resonance follows the
//! lumped LC mapping of the line with the series coupling capacitor replaced
//! by its Norton equivalent `C* = Ck / (1 + ω²Ck²RL²)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::units::{angular, check_positive, C0, TAU};

/// Relative permittivity of high-resistivity silicon.
pub const EPS_R_SILICON: f64 = 11.68;

const AGM_TOL: f64 = 1e-12;
const COUPLING_TOL: f64 = 1e-12;
const COUPLING_MAX_ITER: usize = 100;

/// Complete elliptic integral of the first kind, `K(k)`, for modulus `k`.
pub fn elliptic_k(k: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&k) {
        return Err(Error::InvalidInput(format!("elliptic modulus {k} outside [0, 1)")));
    }
    let mut a = 1.0;
    let mut b = (1.0 - k * k).sqrt();
    for _ in 0..64 {
        if (a - b).abs() <= AGM_TOL * a {
            break;
        }
        let next = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = next;
    }
    Ok(std::f64::consts::PI / (a + b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CpwGeometry {
    pub center_width_s: f64,
    pub gap_g: f64,
    pub substrate_eps_r: f64,
    pub length_ell: f64,
}

impl CpwGeometry {
    pub fn new(center_width_s: f64, gap_g: f64, substrate_eps_r: f64, length_ell: f64) -> Result<Self> {
        check_positive("center width", center_width_s)?;
        check_positive("gap", gap_g)?;
        check_positive("substrate eps_r", substrate_eps_r)?;
        check_positive("length", length_ell)?;
        Ok(CpwGeometry { center_width_s, gap_g, substrate_eps_r, length_ell })
    }

    /// Conformal-mapping modulus `s / (s + 2g)`.
    pub fn modulus(&self) -> f64 {
        self.center_width_s / (self.center_width_s + 2.0 * self.gap_g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineParameters {
    pub z0: f64,
    pub eps_eff: f64,
    /// Inductance per unit length, H/m.
    pub l_per_len: f64,
    /// Capacitance per unit length, F/m.
    pub c_per_len: f64,
}

impl LineParameters {
    pub fn phase_velocity(&self) -> f64 {
        C0 / self.eps_eff.sqrt()
    }
}

pub fn line_parameters(geom: &CpwGeometry) -> Result<LineParameters> {
    let eps_eff = 0.5 * (geom.substrate_eps_r + 1.0);
    let k = geom.modulus();
    let kp = (1.0 - k * k).sqrt();
    let z0 = 30.0 * std::f64::consts::PI / eps_eff.sqrt() * elliptic_k(kp)? / elliptic_k(k)?;
    Ok(LineParameters { z0, eps_eff, l_per_len: z0 * eps_eff.sqrt() / C0, c_per_len: eps_eff.sqrt() / (z0 * C0) })
}

/// Open-circuit/short-circuit (λ/4) resonance of mode `n`:
/// `(2n − 1) c0 / (4 ℓ √εeff)`.
pub fn uncoupled_quarterwave_freq(line: &LineParameters, length: f64, n: u32) -> Result<f64> {
    check_mode(n)?;
    check_positive("length", length)?;
    Ok(f64::from(2 * n - 1) * line.phase_velocity() / (4.0 * length))
}

/// Length placing mode `n` of an uncoupled λ/4 line at `f_target`.
pub fn quarterwave_length(line: &LineParameters, f_target: f64, n: u32) -> Result<f64> {
    check_mode(n)?;
    check_positive("target frequency", f_target)?;
    Ok(f64::from(2 * n - 1) * line.phase_velocity() / (4.0 * f_target))
}

fn check_mode(n: u32) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidInput("mode index must be >= 1".into()));
    }
    Ok(())
}

/// Lumped-element description of a resonator coupled to a feedline through
/// `c_k` into a load `r_load`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingDesign {
    pub c_k: f64,
    pub r_load: f64,
    pub mode_index_n: u32,
    /// `C = Cℓ ℓ / 2`.
    pub c_equiv: f64,
    /// `Ln = 2 Lℓ ℓ / (nπ)²`.
    pub l_equiv_n: f64,
}

impl CouplingDesign {
    pub fn new(line: &LineParameters, length: f64, c_k: f64, r_load: f64, n: u32) -> Result<Self> {
        check_mode(n)?;
        check_positive("length", length)?;
        if !(c_k.is_finite() && c_k >= 0.0) {
            return Err(Error::InvalidInput(format!("coupling capacitance {c_k} must be >= 0")));
        }
        check_positive("load resistance", r_load)?;
        let npi = f64::from(n) * std::f64::consts::PI;
        Ok(CouplingDesign {
            c_k,
            r_load,
            mode_index_n: n,
            c_equiv: line.c_per_len * length / 2.0,
            l_equiv_n: 2.0 * line.l_per_len * length / (npi * npi),
        })
    }

    /// `ω²Ck²RL²` at angular frequency `omega`.
    pub fn loading(&self, omega: f64) -> f64 {
        let x = omega * self.c_k * self.r_load;
        x * x
    }

    pub fn norton_capacitance(&self, omega: f64) -> f64 {
        self.c_k / (1.0 + self.loading(omega))
    }

    /// Resonance of the lumped model without coupling, `1/√(Ln C)`, in Hz.
    pub fn lumped_uncoupled_freq(&self) -> f64 {
        1.0 / (self.l_equiv_n * self.c_equiv).sqrt() / TAU
    }
}

/// Solves `ω = 1/√(Ln (C + 2C*(ω)))` by fixed-point iteration from the
/// uncoupled value. Returns the coupled frequency in Hz.
pub fn coupled_resonance(coupling: &CouplingDesign) -> Result<f64> {
    let mut omega = angular(coupling.lumped_uncoupled_freq());
    for _ in 0..COUPLING_MAX_ITER {
        let c_total = coupling.c_equiv + 2.0 * coupling.norton_capacitance(omega);
        let next = 1.0 / (coupling.l_equiv_n * c_total).sqrt();
        if (next - omega).abs() <= COUPLING_TOL * next {
            return Ok(next / TAU);
        }
        omega = next;
    }
    Err(Error::ConvergenceFailure(format!("coupled resonance did not converge in {COUPLING_MAX_ITER} iterations")))
}

/// λ/4 resonance including the coupling shift: the odd-harmonic line
/// frequency scaled by the ratio of the coupled lumped resonance to its own
/// zero-coupling limit.
pub fn coupled_quarterwave_freq(line: &LineParameters, length: f64, coupling: &CouplingDesign) -> Result<f64> {
    let f_line = uncoupled_quarterwave_freq(line, length, coupling.mode_index_n)?;
    Ok(f_line * coupled_resonance(coupling)? / coupling.lumped_uncoupled_freq())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExternalQ {
    /// `C (1 + ω²Ck²RL²) / (2ω Ck² RL)`.
    pub exact: f64,
    /// `C / (2ω Ck² RL)`.
    pub approx: f64,
    /// `ω²Ck²RL²`.
    pub loading: f64,
}

pub fn external_q(coupling: &CouplingDesign, omega_n: f64) -> Result<ExternalQ> {
    check_positive("omega", omega_n)?;
    check_positive("coupling capacitance", coupling.c_k)?;
    let approx = coupling.c_equiv / (2.0 * omega_n * coupling.c_k * coupling.c_k * coupling.r_load);
    let loading = coupling.loading(omega_n);
    Ok(ExternalQ { exact: approx * (1.0 + loading), approx, loading })
}
