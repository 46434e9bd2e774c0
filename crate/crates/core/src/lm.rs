//! Levenberg–Marquardt for small dense problems with a forward-difference
//! Jacobian.
//!
//! Minimizes `½‖r(x)‖²`. The damping term is scaled by `diag(JᵀJ)` and
//! updated with the gain-ratio rule of Nielsen.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct LmConfig {
    pub max_iter: usize,
    /// Converged when an accepted step lowers the cost by less than this
    /// fraction.
    pub ftol: f64,
    /// Converged when `‖Jᵀr‖∞` falls below this.
    pub gtol: f64,
    /// Converged when the step is this small relative to `‖x‖`.
    pub xtol: f64,
    /// Forward-difference step, relative to `max(|x_j|, 1)`.
    pub rel_step: f64,
    pub initial_damping: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig { max_iter: 200, ftol: 1e-12, gtol: 1e-10, xtol: 1e-14, rel_step: 1e-6, initial_damping: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    CostChange,
    Gradient,
    StepSize,
    /// The damped model predicts no further decrease.
    Stationary,
    MaxIterations,
    /// Residuals could not be evaluated at the starting point.
    InvalidStart,
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub x: Vec<f64>,
    pub residuals: Vec<f64>,
    pub cost: f64,
    /// Jacobian at `x`.
    pub jacobian: DMatrix<f64>,
    pub iterations: usize,
    pub termination: Termination,
}

impl LmReport {
    pub fn converged(&self) -> bool {
        !matches!(self.termination, Termination::MaxIterations | Termination::InvalidStart)
    }

    /// Residual variance `‖r‖² / (m − n)`.
    pub fn residual_variance(&self) -> f64 {
        let m = self.residuals.len();
        let n = self.x.len();
        if m <= n {
            return f64::NAN;
        }
        2.0 * self.cost / (m - n) as f64
    }

    /// `(JᵀJ)⁻¹` scaled by the residual variance. Directions the data do not
    /// constrain get infinite variance.
    pub fn covariance(&self) -> DMatrix<f64> {
        let jtj = self.jacobian.transpose() * &self.jacobian;
        inverse_psd(&jtj) * self.residual_variance()
    }

    /// `(JᵀJ)⁻¹` without residual scaling, for residuals already weighted by
    /// their standard deviations.
    pub fn unscaled_covariance(&self) -> DMatrix<f64> {
        let jtj = self.jacobian.transpose() * &self.jacobian;
        inverse_psd(&jtj)
    }
}

/// Inverse of a symmetric positive semidefinite matrix. Eigen-directions with
/// eigenvalues below `1e-14·λmax` get infinite variance.
fn inverse_psd(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    // Equilibrate so parameter scaling does not masquerade as singularity.
    let d: Vec<f64> = (0..n)
        .map(|i| {
            let v = a[(i, i)];
            if v > 0.0 {
                1.0 / v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let scaled = DMatrix::from_fn(n, n, |i, j| a[(i, j)] * d[i] * d[j]);
    let eig = scaled.symmetric_eigen();
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let mut inv = DMatrix::zeros(n, n);
    // parameters touched by an unconstrained direction
    let mut free = vec![false; n];
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        if lam <= 1e-14 * lmax || lam <= 0.0 {
            for (i, f) in free.iter_mut().enumerate() {
                *f |= v[i].abs() > 1e-8;
            }
        } else {
            inv += (v * v.transpose()) / lam;
        }
    }
    DMatrix::from_fn(n, n, |i, j| if free[i] && free[j] { f64::INFINITY } else { inv[(i, j)] * d[i] * d[j] })
}

/// Runs LM on `residual`, which fills `r` (length `m`) for parameters `x` and
/// returns `false` where the model is undefined.
pub fn minimize<F>(residual: F, x0: &[f64], m: usize, cfg: &LmConfig) -> LmReport
where
    F: Fn(&[f64], &mut [f64]) -> bool,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r = vec![0.0; m];
    if !residual(&x, &mut r) || r.iter().any(|v| !v.is_finite()) {
        return LmReport {
            x,
            residuals: r,
            cost: f64::INFINITY,
            jacobian: DMatrix::zeros(m, n),
            iterations: 0,
            termination: Termination::InvalidStart,
        };
    }
    let mut cost = half_norm2(&r);
    let mut jac = jacobian(&residual, &x, &r, cfg.rel_step);
    let mut mu = cfg.initial_damping;
    let mut nu = 2.0;
    let mut r_trial = vec![0.0; m];
    let mut x_trial = vec![0.0; n];

    let finish = |x: Vec<f64>, r: Vec<f64>, cost, jac, it, t| LmReport {
        x,
        residuals: r,
        cost,
        jacobian: jac,
        iterations: it,
        termination: t,
    };

    for it in 0..cfg.max_iter {
        let jt = jac.transpose();
        let a = &jt * &jac;
        let g = &jt * DVector::from_column_slice(&r);
        if g.amax() < cfg.gtol || cost == 0.0 {
            return finish(x, r, cost, jac, it, Termination::Gradient);
        }
        let diag: Vec<f64> = (0..n).map(|i| a[(i, i)].max(1e-300)).collect();
        let mut damped = a.clone();
        for i in 0..n {
            damped[(i, i)] += mu * diag[i];
        }
        let h = match damped.cholesky() {
            Some(ch) => ch.solve(&(-&g)),
            None => {
                mu *= nu;
                nu *= 2.0;
                continue;
            }
        };
        let xnorm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if h.norm() <= cfg.xtol * (xnorm + cfg.xtol) {
            return finish(x, r, cost, jac, it, Termination::StepSize);
        }
        // predicted decrease ½ hᵀ(μ D h − g)
        let predicted = 0.5 * (0..n).map(|i| h[i] * (mu * diag[i] * h[i] - g[i])).sum::<f64>();
        for i in 0..n {
            x_trial[i] = x[i] + h[i];
        }
        let ok = residual(&x_trial, &mut r_trial) && r_trial.iter().all(|v| v.is_finite());
        let trial_cost = if ok { half_norm2(&r_trial) } else { f64::INFINITY };
        let rho = (cost - trial_cost) / predicted;
        if ok && rho > 0.0 && trial_cost < cost {
            let decrease = (cost - trial_cost) / cost;
            std::mem::swap(&mut x, &mut x_trial);
            std::mem::swap(&mut r, &mut r_trial);
            cost = trial_cost;
            jac = jacobian(&residual, &x, &r, cfg.rel_step);
            mu *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
            nu = 2.0;
            if decrease < cfg.ftol {
                return finish(x, r, cost, jac, it + 1, Termination::CostChange);
            }
        } else {
            if predicted <= cfg.ftol * cost * 1e-3 || mu > 1e30 {
                return finish(x, r, cost, jac, it, Termination::Stationary);
            }
            mu *= nu;
            nu *= 2.0;
        }
    }
    let it = cfg.max_iter;
    finish(x, r, cost, jac, it, Termination::MaxIterations)
}

fn half_norm2(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

fn jacobian<F>(residual: &F, x: &[f64], r0: &[f64], rel_step: f64) -> DMatrix<f64>
where
    F: Fn(&[f64], &mut [f64]) -> bool,
{
    let m = r0.len();
    let n = x.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.to_vec();
    let mut rp = vec![0.0; m];
    for j in 0..n {
        let mut h = rel_step * x[j].abs().max(1.0);
        // Step backwards if the forward point is outside the model's domain.
        let mut ok = false;
        for _ in 0..2 {
            xp[j] = x[j] + h;
            h = xp[j] - x[j];
            if residual(&xp, &mut rp) && rp.iter().all(|v| v.is_finite()) {
                ok = true;
                break;
            }
            h = -h;
        }
        if ok {
            for i in 0..m {
                jac[(i, j)] = (rp[i] - r0[i]) / h;
            }
        }
        xp[j] = x[j];
    }
    jac
}
