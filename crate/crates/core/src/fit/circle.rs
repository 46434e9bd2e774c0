//! Algebraic circle fit (Taubin), solved with Chernov's Newton iteration on
//! the characteristic polynomial of centred moments.

use crate::error::{Error, Result};
use num_complex::Complex64;

pub const MIN_CIRCLE_POINTS: usize = 8;
const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: Complex64,
    pub radius: f64,
}

impl Circle {
    /// RMS of `|z − c| − r` over `points`.
    pub fn rms_distance(&self, points: &[Complex64]) -> f64 {
        let s: f64 = points
            .iter()
            .map(|z| {
                let d = (z - self.center).norm() - self.radius;
                d * d
            })
            .sum();
        (s / points.len() as f64).sqrt()
    }
}

pub fn fit_circle(points: &[Complex64]) -> Result<Circle> {
    let n = points.len();
    if n < MIN_CIRCLE_POINTS {
        return Err(Error::DegenerateGeometry(format!(
            "circle fit needs at least {MIN_CIRCLE_POINTS} points, got {n}"
        )));
    }
    let nf = n as f64;
    let centroid = points.iter().sum::<Complex64>() / nf;

    let (mut mxx, mut myy, mut mxy, mut mxz, mut myz, mut mzz) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points {
        let x = p.re - centroid.re;
        let y = p.im - centroid.im;
        let z = x * x + y * y;
        mxx += x * x;
        myy += y * y;
        mxy += x * y;
        mxz += x * z;
        myz += y * z;
        mzz += z * z;
    }
    mxx /= nf;
    myy /= nf;
    mxy /= nf;
    mxz /= nf;
    myz /= nf;
    mzz /= nf;

    // Spread of the points: collinear or coincident data make the 2x2
    // scatter matrix singular.
    let tr = mxx + myy;
    let det = mxx * myy - mxy * mxy;
    let disc = (0.25 * (mxx - myy).powi(2) + mxy * mxy).sqrt();
    let lmax = 0.5 * tr + disc;
    let lmin = det / lmax;
    if !(lmax > 0.0) || !(lmin > lmax / MAX_CONDITION) {
        return Err(Error::DegenerateGeometry(format!(
            "point scatter condition number {:.3e} exceeds {MAX_CONDITION:e}",
            lmax / lmin.max(0.0)
        )));
    }

    let mz = mxx + myy;
    let cov_xy = mxx * myy - mxy * mxy;
    let var_z = mzz - mz * mz;
    let a3 = 4.0 * mz;
    let a2 = -3.0 * mz * mz - mzz;
    let a1 = var_z * mz + 4.0 * cov_xy * mz - mxz * mxz - myz * myz;
    let a0 = mxz * (mxz * myy - myz * mxy) + myz * (myz * mxx - mxz * mxy) - var_z * cov_xy;
    let a22 = a2 + a2;
    let a33 = a3 + a3 + a3;

    let mut x = 0.0;
    let mut y = a0;
    for _ in 0..99 {
        let dy = a1 + x * (a22 + a33 * x);
        let xnew = x - y / dy;
        if xnew == x || !xnew.is_finite() {
            break;
        }
        let ynew = a0 + xnew * (a1 + xnew * (a2 + xnew * a3));
        if ynew.abs() >= y.abs() {
            break;
        }
        x = xnew;
        y = ynew;
    }

    let det = x * x - x * mz + cov_xy;
    if det == 0.0 || !det.is_finite() {
        return Err(Error::DegenerateGeometry("singular Taubin system".into()));
    }
    let cx = (mxz * (myy - x) - myz * mxy) / det / 2.0;
    let cy = (myz * (mxx - x) - mxz * mxy) / det / 2.0;
    let radius = (cx * cx + cy * cy + mz).sqrt();
    let center = Complex64::new(cx, cy) + centroid;
    if !(radius.is_finite() && center.re.is_finite() && center.im.is_finite()) {
        return Err(Error::DegenerateGeometry("non-finite circle".into()));
    }
    Ok(Circle { center, radius })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn on_circle(c: Complex64, r: f64, n: usize, arc: f64) -> Vec<Complex64> {
        (0..n).map(|i| c + Complex64::from_polar(r, arc * i as f64 / n as f64)).collect()
    }

    #[test]
    fn exact_points() {
        let c = Complex64::new(0.5, 0.0);
        let fit = fit_circle(&on_circle(c, 0.5, 16, std::f64::consts::TAU)).unwrap();
        assert!((fit.center - c).norm() < 1e-12);
        assert!((fit.radius - 0.5).abs() < 1e-12);

        // partial arc, off-origin, small scale
        let c = Complex64::new(-3e-3, 2e-3);
        let fit = fit_circle(&on_circle(c, 1e-3, 40, 1.0)).unwrap();
        assert!((fit.center - c).norm() < 1e-12);
        assert!((fit.radius - 1e-3).abs() < 1e-12);
    }

    #[test]
    fn collinear_and_too_few() {
        let line: Vec<_> = (0..8).map(|i| Complex64::new(i as f64, 2.0 * i as f64)).collect();
        assert!(matches!(fit_circle(&line), Err(Error::DegenerateGeometry(_))));
        let same = vec![Complex64::new(1.0, 1.0); 10];
        assert!(matches!(fit_circle(&same), Err(Error::DegenerateGeometry(_))));
        let few = on_circle(Complex64::new(0.0, 0.0), 1.0, 7, 6.0);
        assert!(matches!(fit_circle(&few), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn noisy_radius_monte_carlo() {
        let c = Complex64::new(0.5, 0.0);
        let normal = Normal::new(0.0, 1e-3).unwrap();
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<_> = on_circle(c, 0.5, 201, std::f64::consts::TAU)
                .into_iter()
                .map(|z| z + Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng)))
                .collect();
            let fit = fit_circle(&pts).unwrap();
            assert!((fit.radius - 0.5).abs() / 0.5 < 0.01, "seed {seed}: {}", fit.radius);
        }
    }
}
