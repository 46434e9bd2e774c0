//! Phase-versus-frequency fit about the circle centre:
//! `φ(f) = φ₀ + 2·atan(2Ql(1 − f/fr))`.

use num_complex::Complex64;

use super::delay::unwrap_phase;
use crate::error::{Error, Result};
use crate::lm::{self, LmConfig};
use crate::model::ComplexSweep;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseFit {
    pub f_r: f64,
    pub q_loaded: f64,
    /// Angle of the on-resonance point seen from the circle centre.
    pub phi0: f64,
}

pub fn phase_model(f: f64, f_r: f64, q_loaded: f64, phi0: f64) -> f64 {
    phi0 + 2.0 * (2.0 * q_loaded * (1.0 - f / f_r)).atan()
}

/// Fits the phase of `S21 − center`. Returns `(f_r, Q_l)` plus the offset.
pub fn fit_phase(sweep_translated: &ComplexSweep, center: Complex64) -> Result<PhaseFit> {
    let sweep = sweep_translated;
    let n = sweep.len();
    let shifted: Vec<Complex64> = sweep.s21.iter().map(|z| z - center).collect();
    let phase = unwrap_phase(&shifted);
    let fc = sweep.center();
    let span = sweep.span();

    // Initial guesses from where the phase crosses the midpoint of its end
    // values and from the ±π/2 crossings that bound the FWHM.
    let k = (n / 10).max(1);
    let head = phase[..k].iter().sum::<f64>() / k as f64;
    let tail = phase[n - k..].iter().sum::<f64>() / k as f64;
    let mid = 0.5 * (head + tail);
    let crossing = |level: f64| -> Option<f64> {
        (1..n).find_map(|i| {
            let (a, b) = (phase[i - 1] - level, phase[i] - level);
            if a == 0.0 {
                Some(sweep.freqs[i - 1])
            } else if a * b < 0.0 {
                let t = a / (a - b);
                Some(sweep.freqs[i - 1] + t * (sweep.freqs[i] - sweep.freqs[i - 1]))
            } else {
                None
            }
        })
    };
    let sign = if head >= tail { 1.0 } else { -1.0 };
    let f0 = crossing(mid).unwrap_or(fc);
    let fwhm = match (
        crossing(mid + sign * std::f64::consts::FRAC_PI_2),
        crossing(mid - sign * std::f64::consts::FRAC_PI_2),
    ) {
        (Some(a), Some(b)) if b > a => b - a,
        _ => {
            // slope at the crossing: dφ/df = −4Ql/fr
            let i = sweep.freqs.partition_point(|&f| f < f0).clamp(2, n - 3);
            let slope = (phase[i + 2] - phase[i - 2]) / (sweep.freqs[i + 2] - sweep.freqs[i - 2]);
            if slope < 0.0 {
                4.0 / -slope
            } else {
                span / 4.0
            }
        }
    };
    let ql0 = (f0 / fwhm.max(f64::MIN_POSITIVE)).max(1.0);

    let residual = |p: &[f64], r: &mut [f64]| {
        let f_r = fc + p[2] * span;
        let ql = p[1].exp();
        if !(f_r > 0.0 && ql.is_finite()) {
            return false;
        }
        for i in 0..n {
            r[i] = phase[i] - phase_model(sweep.freqs[i], f_r, ql, p[0]);
        }
        true
    };
    let cfg = LmConfig::default();
    let mut best: Option<lm::LmReport> = None;
    for scale in [1.0, 0.5, 2.0] {
        let x0 = [mid, (ql0 * scale).ln(), (f0 - fc) / span];
        let rep = lm::minimize(residual, &x0, n, &cfg);
        if rep.converged() && best.as_ref().is_none_or(|b| rep.cost < b.cost) {
            best = Some(rep);
        }
        if best.as_ref().is_some_and(|b| b.cost < 1e-20 * n as f64) {
            break;
        }
    }
    let rep = best.ok_or_else(|| Error::ConvergenceFailure("phase fit did not converge".into()))?;
    let f_r = fc + rep.x[2] * span;
    let fit = PhaseFit { f_r, q_loaded: rep.x[1].exp(), phi0: rep.x[0] };
    if !(sweep.f_start() < f_r && f_r < sweep.f_stop()) {
        return Err(Error::WindowMismatch(format!(
            "phase fit placed f_r = {f_r} outside [{}, {}]",
            sweep.f_start(),
            sweep.f_stop()
        )));
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ideal_circle, synthesize_sweep, BackgroundParams, ResonanceParams, SweepWindow};

    fn setup(theta: f64, noise: f64, seed: u64) -> (ResonanceParams, ComplexSweep) {
        let r = ResonanceParams::new(5.5e9, 9.5e4, 9.5e4 / 0.9, theta).unwrap();
        let s = synthesize_sweep(&r, &BackgroundParams::unit(r.f_r), &SweepWindow::around(&r, 10.0, 201), noise, seed)
            .unwrap();
        (r, s)
    }

    #[test]
    fn noiseless_recovery() {
        let (r, s) = setup(0.1, 0.0, 0);
        let (c, _) = ideal_circle(&r);
        let p = fit_phase(&s, c).unwrap();
        assert!((p.f_r - r.f_r).abs() / r.f_r < 1e-6);
        assert!((p.q_loaded - r.q_loaded).abs() / r.q_loaded < 1e-6);
    }

    #[test]
    fn symmetric_dip_minimum() {
        let (r, s) = setup(0.0, 0.0, 0);
        let (c, _) = ideal_circle(&r);
        let p = fit_phase(&s, c).unwrap();
        let imin = (0..s.len()).min_by(|&a, &b| s.s21[a].norm().total_cmp(&s.s21[b].norm())).unwrap();
        let step = s.freqs[1] - s.freqs[0];
        assert!((p.f_r - s.freqs[imin]).abs() <= step);
    }

    #[test]
    fn noisy_q_loaded() {
        for seed in 0..100 {
            let (r, s) = setup(0.0, 1e-3, seed);
            let c = crate::fit::circle::fit_circle(&s.s21).unwrap().center;
            let p = fit_phase(&s, c).unwrap();
            assert!((p.q_loaded - r.q_loaded).abs() / r.q_loaded < 0.02, "seed {seed}");
        }
    }
}
