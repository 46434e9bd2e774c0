//! Cable-delay estimate.
//!
//! A first estimate comes from the unwrapped phase in the outer wings of the
//! window: one common slope with a separate offset per wing, so the phase
//! step the resonance puts between the wings does not bias it. It is then
//! refined by choosing the delay that makes the de-rotated samples most
//! circular, since only the true delay maps the lineshape onto a circle.

use num_complex::Complex64;

use super::circle::fit_circle;
use crate::error::{Error, Result};
use crate::model::ComplexSweep;
use crate::units::TAU;

/// Fraction of the window on each side treated as off-resonant wing.
pub const WING_FRACTION: f64 = 0.2;
pub const MIN_WING_POINTS: usize = 6;

const REFINE_GRID: usize = 41;
const GOLDEN_ITERS: usize = 80;

/// Number of samples in each wing.
pub fn wing_len(n: usize) -> usize {
    (WING_FRACTION * n as f64).floor() as usize
}

pub(crate) fn check_wings(sweep: &ComplexSweep) -> Result<usize> {
    let w = wing_len(sweep.len());
    if w < MIN_WING_POINTS {
        return Err(Error::InsufficientWings(format!("{w} points per wing, need {MIN_WING_POINTS}")));
    }
    Ok(w)
}

pub fn unwrap_phase(z: &[Complex64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(z.len());
    let mut offset = 0.0;
    let mut prev: Option<f64> = None;
    for v in z {
        let a = v.arg();
        if let Some(p) = prev {
            let d = a - p;
            if d > std::f64::consts::PI {
                offset -= TAU;
            } else if d < -std::f64::consts::PI {
                offset += TAU;
            }
        }
        prev = Some(a);
        out.push(a + offset);
    }
    out
}

/// Common-slope fit over both wings, each with its own intercept. Returns
/// the slope in rad/Hz.
fn wing_phase_slope(sweep: &ComplexSweep, w: usize) -> f64 {
    let n = sweep.len();
    let left = unwrap_phase(&sweep.s21[..w]);
    let right = unwrap_phase(&sweep.s21[n - w..]);
    let lf = &sweep.freqs[..w];
    let rf = &sweep.freqs[n - w..];
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (lfm, rfm) = (mean(lf), mean(rf));
    let (lpm, rpm) = (mean(&left), mean(&right));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (f, p) in lf.iter().zip(&left) {
        sxy += (f - lfm) * (p - lpm);
        sxx += (f - lfm) * (f - lfm);
    }
    for (f, p) in rf.iter().zip(&right) {
        sxy += (f - rfm) * (p - rpm);
        sxx += (f - rfm) * (f - rfm);
    }
    sxy / sxx
}

/// Wing-based linear trend of `20·log10|z|`, in dB/Hz.
pub(crate) fn wing_amplitude_slope(sweep: &ComplexSweep, w: usize) -> f64 {
    let n = sweep.len();
    let idx = (0..w).chain(n - w..n);
    let pts: Vec<(f64, f64)> = idx.map(|i| (sweep.freqs[i], 20.0 * sweep.s21[i].norm().log10())).collect();
    let m = pts.len() as f64;
    let fm = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let am = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - fm) * (p.1 - am)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - fm) * (p.0 - fm)).sum();
    let s = sxy / sxx;
    if s.is_finite() {
        s
    } else {
        0.0
    }
}

fn circle_misfit(sweep: &ComplexSweep, tau: f64, buf: &mut Vec<Complex64>) -> f64 {
    let fc = sweep.center();
    buf.clear();
    buf.extend(sweep.freqs.iter().zip(&sweep.s21).map(|(&f, &z)| z * Complex64::from_polar(1.0, TAU * (f - fc) * tau)));
    match fit_circle(buf) {
        Ok(c) => c.rms_distance(buf),
        _ => f64::INFINITY,
    }
}

/// Estimated cable delay τ in seconds, such that `S21 · e^{+2πifτ}` has the
/// linear phase trend removed.
pub fn estimate_delay(sweep: &ComplexSweep) -> Result<f64> {
    let w = check_wings(sweep)?;
    let tau0 = -wing_phase_slope(sweep, w) / TAU;
    if !tau0.is_finite() {
        return Err(Error::InsufficientWings("wing phase slope is not finite".into()));
    }

    // One radian of phase tilt across the window either side of the wing
    // estimate.
    let half = 1.0 / (TAU * sweep.span());
    let mut buf = Vec::with_capacity(sweep.len());
    let step = 2.0 * half / (REFINE_GRID - 1) as f64;
    let mut best = (f64::INFINITY, tau0);
    for i in 0..REFINE_GRID {
        let t = tau0 - half + step * i as f64;
        let m = circle_misfit(sweep, t, &mut buf);
        if m < best.0 {
            best = (m, t);
        }
    }
    if !best.0.is_finite() {
        return Ok(tau0);
    }

    // golden-section refinement inside the bracketing grid cell
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (best.1 - step, best.1 + step);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc_ = circle_misfit(sweep, c, &mut buf);
    let mut fd = circle_misfit(sweep, d, &mut buf);
    for _ in 0..GOLDEN_ITERS {
        if fc_ < fd {
            b = d;
            d = c;
            fd = fc_;
            c = b - phi * (b - a);
            fc_ = circle_misfit(sweep, c, &mut buf);
        } else {
            a = c;
            c = d;
            fc_ = fd;
            d = a + phi * (b - a);
            fd = circle_misfit(sweep, d, &mut buf);
        }
        if (b - a).abs() <= 1e-15 * (a.abs() + b.abs()) {
            break;
        }
    }
    Ok(0.5 * (a + b))
}
