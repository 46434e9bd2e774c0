use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::circle::fit_circle;
use super::delay::{check_wings, estimate_delay, wing_amplitude_slope};
use super::phase::fit_phase;
use crate::error::{Error, Result, Stage};
use crate::lm::{self, LmConfig};
use crate::model::{BackgroundParams, ComplexSweep, ResonanceParams, MIN_FIT_POINTS};
use crate::units::{q_internal as q_internal_scalar, q_internal_from_fit, wrap_phase, TAU};

pub const METHOD_TAG: &str = "circle+phase+lm";

/// Minimum dip diameter, in units of the residual RMS, for a fit to count
/// as a detected resonance.
const MIN_DIP_SNR: f64 = 5.0;
/// Minimum number of grid points inside one linewidth.
const MIN_POINTS_PER_LINEWIDTH: f64 = 2.0;

/// Parameter keys of [`ResonanceFit::sigma`].
pub mod keys {
    pub const F_R: &str = "f_r";
    pub const Q_LOADED: &str = "q_loaded";
    pub const Q_EXTERNAL_MAG: &str = "q_external_mag";
    pub const THETA: &str = "theta";
    pub const Q_INTERNAL: &str = "q_internal";
    pub const AMP_DB: &str = "amp_db_at_fref";
    pub const AMP_SLOPE: &str = "amp_slope_db_per_hz";
    pub const ALPHA: &str = "phase_offset_alpha";
    pub const TAU: &str = "cable_delay_tau";
}

/// Thresholds a resonance fit must pass to enter a power series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitGates {
    pub max_rel_sigma_qi: f64,
    pub min_series_points: usize,
    pub min_series_span_db: f64,
}

impl Default for FitGates {
    fn default() -> Self {
        FitGates { max_rel_sigma_qi: 0.5, min_series_points: 4, min_series_span_db: 20.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceFit {
    pub params: ResonanceParams,
    pub background: BackgroundParams,
    /// Diameter-corrected internal Q, `1/(1/Ql − cosθ/|Qe|)`. Used for all
    /// downstream analysis.
    pub q_internal: f64,
    /// Internal Q with the scalar relation `1/(1/Ql − 1/|Qe|)`, when that is
    /// positive. Reported for comparison only.
    pub q_internal_scalar: Option<f64>,
    /// One-sigma uncertainties keyed by [`keys`].
    pub sigma: BTreeMap<String, f64>,
    pub residual_rms: f64,
    pub n_points_used: usize,
    pub converged: bool,
    pub method_tag: String,
    pub f_start: f64,
    pub f_stop: f64,
    pub iterations: usize,
}

impl ResonanceFit {
    pub fn sigma_of(&self, key: &str) -> f64 {
        self.sigma.get(key).copied().unwrap_or(f64::NAN)
    }

    /// Why the fit fails `gates`, if it does.
    pub fn gate_failure(&self, gates: &FitGates) -> Option<String> {
        if !self.converged {
            return Some("not converged".into());
        }
        let rel = self.sigma_of(keys::Q_INTERNAL) / self.q_internal;
        if !(rel < gates.max_rel_sigma_qi) {
            return Some(format!("sigma(Qi)/Qi = {rel:.3} not below {}", gates.max_rel_sigma_qi));
        }
        let f = self.params.f_r;
        if !(self.f_start < f && f < self.f_stop) {
            return Some(format!("f_r = {f} outside the sweep window"));
        }
        None
    }

    pub fn passes(&self, gates: &FitGates) -> bool {
        self.gate_failure(gates).is_none()
    }

    /// Dip depth relative to the background, `Ql/|Qe|`.
    pub fn depth(&self) -> f64 {
        self.params.depth()
    }
}

/// Internal parametrization for the joint refinement, scaled so every entry
/// is O(1):
///
/// 0. `(fr − fc)/span`
/// 1. `ln Ql`
/// 2. `ln |Qe|`
/// 3. `θ`
/// 4. amplitude at `fc` in dB
/// 5. amplitude slope in dB per span
/// 6. phase at `fc`
/// 7. delay phase across the span, `2π τ span`
struct Frame {
    fc: f64,
    span: f64,
}

impl Frame {
    fn model(&self, p: &[f64], f: f64) -> Complex64 {
        let u = (f - self.fc) / self.span;
        let f_r = self.fc + p[0] * self.span;
        let ql = p[1].exp();
        let qe = p[2].exp();
        let x = 2.0 * ql * (f - f_r) / f_r;
        let lineshape = Complex64::new(1.0, 0.0) - Complex64::from_polar(ql / qe, p[3]) / Complex64::new(1.0, x);
        let mag = 10f64.powf((p[4] + p[5] * u) / 20.0);
        Complex64::from_polar(mag, p[6] - p[7] * u) * lineshape
    }

    fn pack(&self, res: &ResonanceParams, bg: &BackgroundParams) -> [f64; 8] {
        [
            (res.f_r - self.fc) / self.span,
            res.q_loaded.ln(),
            res.q_external_mag.ln(),
            res.theta,
            bg.amp_db_at_fref + bg.amp_slope_db_per_hz * (self.fc - bg.f_ref),
            bg.amp_slope_db_per_hz * self.span,
            bg.phase_offset_alpha - TAU * self.fc * bg.cable_delay_tau,
            TAU * bg.cable_delay_tau * self.span,
        ]
    }

    fn unpack(&self, p: &[f64]) -> (ResonanceParams, BackgroundParams) {
        let tau = p[7] / (TAU * self.span);
        let res = ResonanceParams {
            f_r: self.fc + p[0] * self.span,
            q_loaded: p[1].exp(),
            q_external_mag: p[2].exp(),
            theta: wrap_phase(p[3]),
        };
        let bg = BackgroundParams {
            amp_db_at_fref: p[4],
            amp_slope_db_per_hz: p[5] / self.span,
            phase_offset_alpha: wrap_phase(p[6] + TAU * self.fc * tau),
            cable_delay_tau: tau,
            f_ref: self.fc,
        };
        (res, bg)
    }
}

/// Initial resonance and background parameters from the delay estimate,
/// circle fit and phase fit.
pub fn initial_estimate(sweep: &ComplexSweep) -> Result<(ResonanceParams, BackgroundParams)> {
    let w = check_wings(sweep).map_err(Error::at(Stage::Delay))?;
    let tau = estimate_delay(sweep).map_err(Error::at(Stage::Delay))?;
    let fc = sweep.center();
    let derotated = sweep.map_samples(|f, z| z * Complex64::from_polar(1.0, TAU * f * tau));
    let slope = wing_amplitude_slope(&derotated, w);
    let flat = derotated.map_samples(|f, z| z / 10f64.powf(slope * (f - fc) / 20.0));

    let circle = fit_circle(&flat.s21).map_err(Error::at(Stage::Circle))?;
    let phase = fit_phase(&flat, circle.center).map_err(Error::at(Stage::Phase))?;

    // The off-resonant point sits opposite the resonant one on the circle.
    let a0 = circle.center + Complex64::from_polar(circle.radius, phase.phi0 + std::f64::consts::PI);
    if a0.norm() == 0.0 {
        return Err(Error::Stage {
            stage: Stage::Circle,
            source: Box::new(Error::DegenerateGeometry("zero off-resonant amplitude".into())),
        });
    }
    let depth = 2.0 * circle.radius / a0.norm();
    let theta = (Complex64::new(1.0, 0.0) - circle.center / a0).arg();
    let res =
        ResonanceParams { f_r: phase.f_r, q_loaded: phase.q_loaded, q_external_mag: phase.q_loaded / depth, theta };
    let bg = BackgroundParams {
        amp_db_at_fref: 20.0 * a0.norm().log10(),
        amp_slope_db_per_hz: slope,
        phase_offset_alpha: wrap_phase(a0.arg()),
        cable_delay_tau: tau,
        f_ref: fc,
    };
    Ok((res, bg))
}

/// Extracts resonance and background parameters with uncertainties.
///
/// The delay estimate, wing normalization, circle fit and phase fit seed a
/// joint Levenberg–Marquardt refinement of all parameters against the complex
/// residuals. `f_ref` of the returned background is the window centre.
pub fn fit_resonance(sweep: &ComplexSweep) -> Result<ResonanceFit> {
    fit_resonance_with(sweep, &LmConfig::default())
}

pub fn fit_resonance_with(sweep: &ComplexSweep, cfg: &LmConfig) -> Result<ResonanceFit> {
    let n = sweep.len();
    if n < MIN_FIT_POINTS {
        return Err(Error::Stage {
            stage: Stage::Validate,
            source: Box::new(Error::InvalidInput(format!(
                "sweep has {n} points, fitting needs at least {MIN_FIT_POINTS}"
            ))),
        });
    }
    let (res0, bg0) = initial_estimate(sweep)?;

    let frame = Frame { fc: sweep.center(), span: sweep.span() };
    let x0 = frame.pack(&res0, &bg0);
    let residual = |p: &[f64], r: &mut [f64]| {
        if !(p[1].exp().is_finite() && p[2].exp().is_finite()) || frame.fc + p[0] * frame.span <= 0.0 {
            return false;
        }
        for i in 0..n {
            let d = sweep.s21[i] - frame.model(p, sweep.freqs[i]);
            r[2 * i] = d.re;
            r[2 * i + 1] = d.im;
        }
        true
    };
    let rep = lm::minimize(residual, &x0, 2 * n, cfg);
    let refine_err = |e: Error| Error::Stage { stage: Stage::Refine, source: Box::new(e) };
    if !rep.converged() {
        return Err(refine_err(Error::ConvergenceFailure(format!(
            "refinement stopped after {} iterations ({:?})",
            rep.iterations, rep.termination
        ))));
    }
    let (params, background) = frame.unpack(&rep.x);
    let q_internal = q_internal_from_fit(params.q_loaded, params.q_external_mag, params.theta).map_err(refine_err)?;
    let residual_rms = (2.0 * rep.cost / n as f64).sqrt();

    if !(sweep.f_start() < params.f_r && params.f_r < sweep.f_stop()) {
        return Err(refine_err(Error::WindowMismatch(format!("refined f_r = {} outside the window", params.f_r))));
    }
    let diameter = params.depth() * background.eval(params.f_r).norm();
    if !(diameter > MIN_DIP_SNR * residual_rms) {
        return Err(refine_err(Error::DegenerateGeometry(format!(
            "no resolvable resonance: dip diameter {diameter:.3e} vs residual rms {residual_rms:.3e}"
        ))));
    }
    let step = frame.span / (n - 1) as f64;
    if params.f_r / params.q_loaded < MIN_POINTS_PER_LINEWIDTH * step {
        return Err(refine_err(Error::DegenerateGeometry(format!(
            "linewidth {:.3e} Hz is narrower than {MIN_POINTS_PER_LINEWIDTH} grid steps",
            params.f_r / params.q_loaded
        ))));
    }

    let sigma = uncertainties(&frame, &rep.x, &rep.covariance(), &params, q_internal);
    Ok(ResonanceFit {
        params,
        background,
        q_internal,
        q_internal_scalar: q_internal_scalar(params.q_loaded, params.q_external_mag).ok(),
        sigma,
        residual_rms,
        n_points_used: n,
        converged: true,
        method_tag: METHOD_TAG.to_string(),
        f_start: sweep.f_start(),
        f_stop: sweep.f_stop(),
        iterations: rep.iterations,
    })
}

/// Propagates the internal covariance to physical parameters through the
/// gradient of each output.
fn uncertainties(
    frame: &Frame,
    p: &[f64],
    cov: &DMatrix<f64>,
    res: &ResonanceParams,
    q_internal: f64,
) -> BTreeMap<String, f64> {
    let propagate = |grad: &[(usize, f64)]| -> f64 {
        let mut v = 0.0;
        for &(i, gi) in grad {
            for &(j, gj) in grad {
                if gi != 0.0 && gj != 0.0 {
                    v += gi * gj * cov[(i, j)];
                }
            }
        }
        v.max(0.0).sqrt()
    };
    let ql = res.q_loaded;
    let qe = res.q_external_mag;
    let qi2 = q_internal * q_internal;
    let mut out = BTreeMap::new();
    out.insert(keys::F_R.into(), propagate(&[(0, frame.span)]));
    out.insert(keys::Q_LOADED.into(), propagate(&[(1, ql)]));
    out.insert(keys::Q_EXTERNAL_MAG.into(), propagate(&[(2, qe)]));
    out.insert(keys::THETA.into(), propagate(&[(3, 1.0)]));
    // Qi = 1/(1/Ql − cosθ/|Qe|) with Ql = e^{p1}, |Qe| = e^{p2}
    out.insert(
        keys::Q_INTERNAL.into(),
        propagate(&[(1, qi2 / ql), (2, -qi2 * p[3].cos() / qe), (3, -qi2 * p[3].sin() / qe)]),
    );
    out.insert(keys::AMP_DB.into(), propagate(&[(4, 1.0)]));
    out.insert(keys::AMP_SLOPE.into(), propagate(&[(5, 1.0 / frame.span)]));
    out.insert(keys::TAU.into(), propagate(&[(7, 1.0 / (TAU * frame.span))]));
    // α = φ(fc) + fc·(2πτ span)/span
    out.insert(keys::ALPHA.into(), propagate(&[(6, 1.0), (7, frame.fc / frame.span)]));
    out
}
