//! Notch-type resonance lineshape with instrumental background.
//!
//! ```text
//! S21(f) = a(f) · [1 − (Ql/|Qe|) e^{iθ} / (1 + 2i Ql (f − fr)/fr)]
//! a(f)   = 10^((A + s·(f − f_ref))/20) · e^{i(α − 2π f τ)}
//! ```

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{check_positive, q_internal_from_fit, TAU};

/// Sweeps shorter than this are rejected by the fitter.
pub const MIN_FIT_POINTS: usize = 32;
/// Recommended minimum for reliable fits.
pub const RECOMMENDED_POINTS: usize = 201;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceParams {
    pub f_r: f64,
    pub q_loaded: f64,
    pub q_external_mag: f64,
    pub theta: f64,
}

impl ResonanceParams {
    pub fn new(f_r: f64, q_loaded: f64, q_external_mag: f64, theta: f64) -> Result<Self> {
        let p = ResonanceParams { f_r, q_loaded, q_external_mag, theta };
        p.validate()?;
        Ok(p)
    }

    /// Parameters from internal Q instead of loaded Q.
    pub fn from_internal(f_r: f64, q_internal: f64, q_external_mag: f64, theta: f64) -> Result<Self> {
        let q_loaded = crate::units::q_loaded_from(q_internal, q_external_mag, theta)?;
        Self::new(f_r, q_loaded, q_external_mag, theta)
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("f_r", self.f_r)?;
        self.q_internal().map(|_| ())
    }

    /// Circle diameter `Ql/|Qe|` for a unit background.
    pub fn depth(&self) -> f64 {
        self.q_loaded / self.q_external_mag
    }

    pub fn q_internal(&self) -> Result<f64> {
        q_internal_from_fit(self.q_loaded, self.q_external_mag, self.theta)
    }

    /// Lineshape without background.
    pub fn eval_normalized(&self, f: f64) -> Complex64 {
        let x = 2.0 * self.q_loaded * (f - self.f_r) / self.f_r;
        let coupling = Complex64::from_polar(self.depth(), self.theta);
        Complex64::new(1.0, 0.0) - coupling / Complex64::new(1.0, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundParams {
    pub amp_db_at_fref: f64,
    pub amp_slope_db_per_hz: f64,
    pub phase_offset_alpha: f64,
    pub cable_delay_tau: f64,
    pub f_ref: f64,
}

impl BackgroundParams {
    /// `a(f) ≡ 1`.
    pub fn unit(f_ref: f64) -> Self {
        BackgroundParams {
            amp_db_at_fref: 0.0,
            amp_slope_db_per_hz: 0.0,
            phase_offset_alpha: 0.0,
            cable_delay_tau: 0.0,
            f_ref,
        }
    }

    pub fn eval(&self, f: f64) -> Complex64 {
        let mag = 10f64.powf((self.amp_db_at_fref + self.amp_slope_db_per_hz * (f - self.f_ref)) / 20.0);
        Complex64::from_polar(mag, self.phase_offset_alpha - TAU * f * self.cable_delay_tau)
    }
}

pub fn eval_s21(res: &ResonanceParams, bg: &BackgroundParams, f: f64) -> Complex64 {
    bg.eval(f) * res.eval_normalized(f)
}

/// One frequency sweep of complex transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSweep {
    pub freqs: Vec<f64>,
    pub s21: Vec<Complex64>,
    pub power_dbm_at_source: f64,
    pub metadata: BTreeMap<String, String>,
}

impl ComplexSweep {
    /// Checks equal lengths, strictly increasing frequencies and finite
    /// samples. The minimum length for fitting is enforced by the fitter.
    pub fn new(freqs: Vec<f64>, s21: Vec<Complex64>, power_dbm_at_source: f64) -> Result<Self> {
        if freqs.len() != s21.len() {
            return Err(Error::MalformedSweep(format!("{} frequencies but {} samples", freqs.len(), s21.len())));
        }
        if freqs.is_empty() {
            return Err(Error::MalformedSweep("empty sweep".into()));
        }
        if let Some(i) = freqs.iter().position(|f| !f.is_finite()) {
            return Err(Error::MalformedSweep(format!("non-finite frequency at row {i}")));
        }
        if let Some(i) = freqs.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::MalformedSweep(format!("frequencies not strictly increasing at row {}", i + 1)));
        }
        if let Some(i) = s21.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::MalformedSweep(format!("non-finite sample at row {i}")));
        }
        Ok(ComplexSweep { freqs, s21, power_dbm_at_source, metadata: BTreeMap::new() })
    }

    pub fn with_power(mut self, dbm: f64) -> Self {
        self.power_dbm_at_source = dbm;
        self
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<String>) -> Self {
        self.metadata.insert(key.to_string(), value.into());
        self
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn f_start(&self) -> f64 {
        self.freqs[0]
    }

    pub fn f_stop(&self) -> f64 {
        self.freqs[self.freqs.len() - 1]
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.f_start() + self.f_stop())
    }

    pub fn span(&self) -> f64 {
        self.f_stop() - self.f_start()
    }

    pub fn resonator_id(&self) -> Option<&str> {
        self.metadata.get("resonator_id").map(String::as_str)
    }

    /// A copy with every sample multiplied by `g(f)`.
    pub fn map_samples(&self, g: impl Fn(f64, Complex64) -> Complex64) -> ComplexSweep {
        ComplexSweep { s21: self.freqs.iter().zip(&self.s21).map(|(&f, &z)| g(f, z)).collect(), ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepWindow {
    pub f_start: f64,
    pub f_stop: f64,
    pub n_points: usize,
}

impl SweepWindow {
    /// Window of `n_points` centred on `f_r`, `linewidths · f_r/Ql` wide.
    pub fn around(res: &ResonanceParams, linewidths: f64, n_points: usize) -> Self {
        let half = 0.5 * linewidths * res.f_r / res.q_loaded;
        SweepWindow { f_start: res.f_r - half, f_stop: res.f_r + half, n_points }
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = self.n_points;
        if n == 1 {
            return vec![self.f_start];
        }
        let step = (self.f_stop - self.f_start) / (n - 1) as f64;
        (0..n).map(|i| if i + 1 == n { self.f_stop } else { self.f_start + step * i as f64 }).collect()
    }
}

/// Evaluates the lineshape on `window` and adds independent Gaussian noise of
/// standard deviation `noise_sigma` to each quadrature. Deterministic in
/// `seed`. A window that does not contain `f_r` is recorded as a
/// `warning` metadata entry.
pub fn synthesize_sweep(
    res: &ResonanceParams,
    bg: &BackgroundParams,
    window: &SweepWindow,
    noise_sigma: f64,
    seed: u64,
) -> Result<ComplexSweep> {
    res.validate()?;
    if window.n_points < 2 || !(window.f_stop > window.f_start) {
        return Err(Error::InvalidInput(format!("bad sweep window {window:?}")));
    }
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(Error::InvalidInput(format!("noise sigma {noise_sigma} must be >= 0")));
    }
    let freqs = window.grid();
    let mut s21: Vec<Complex64> = freqs.iter().map(|&f| eval_s21(res, bg, f)).collect();
    if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_sigma).expect("sigma checked above");
        for z in s21.iter_mut() {
            let re = normal.sample(&mut rng);
            let im = normal.sample(&mut rng);
            *z += Complex64::new(re, im);
        }
    }
    let mut sweep = ComplexSweep::new(freqs, s21, 0.0)?;
    if !(window.f_start < res.f_r && res.f_r < window.f_stop) {
        sweep.metadata.insert(
            "warning".into(),
            format!("WindowMismatch: f_r = {} outside [{}, {}]", res.f_r, window.f_start, window.f_stop),
        );
    }
    Ok(sweep)
}

/// Circle traced by the normalized lineshape: centre `1 − (d/2) e^{iθ}`,
/// radius `d/2` with `d = Ql/|Qe|`.
pub fn ideal_circle(res: &ResonanceParams) -> (Complex64, f64) {
    let r = 0.5 * res.depth();
    (Complex64::new(1.0, 0.0) - Complex64::from_polar(r, res.theta), r)
}
