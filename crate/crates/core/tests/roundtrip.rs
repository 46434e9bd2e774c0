//! Full lineshape fit against the forward model over a grid of coupling
//! regimes, with a realistic background.

use resq::fit::fit_resonance;
use resq::model::{synthesize_sweep, BackgroundParams, ResonanceParams, SweepWindow};

const QI: [f64; 3] = [1e5, 1e6, 1e7];
const QE: [f64; 3] = [3e4, 1e5, 3e5];
const THETA: [f64; 3] = [-0.2, 0.0, 0.2];

fn background(f_r: f64) -> BackgroundParams {
    BackgroundParams {
        amp_db_at_fref: -3.0,
        amp_slope_db_per_hz: 1e-6,
        phase_offset_alpha: 0.7,
        cable_delay_tau: 40e-9,
        f_ref: f_r,
    }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

#[test]
fn zero_noise_grid() {
    for qi in QI {
        for qe in QE {
            for th in THETA {
                let r = ResonanceParams::from_internal(5.5e9, qi, qe, th).unwrap();
                let bg = background(r.f_r);
                let s = synthesize_sweep(&r, &bg, &SweepWindow::around(&r, 10.0, 201), 0.0, 0).unwrap();
                let fit = fit_resonance(&s).unwrap_or_else(|e| panic!("{qi:e}/{qe:e}/{th}: {e}"));
                let p = fit.params;
                let errs = [
                    rel(p.f_r, r.f_r),
                    rel(p.q_loaded, r.q_loaded),
                    rel(p.q_external_mag, r.q_external_mag),
                    rel(fit.q_internal, qi),
                    (p.theta - th).abs(),
                    rel(fit.background.cable_delay_tau, 40e-9),
                ];
                let worst = errs.iter().cloned().fold(0.0, f64::max);
                assert!(worst < 1e-5, "{qi:e}/{qe:e}/{th}: {errs:?}");
            }
        }
    }
}

#[test]
fn noisy_grid_internal_q() {
    for qi in QI {
        for qe in QE {
            if qi / qe > 100.0 {
                continue;
            }
            for th in THETA {
                let r = ResonanceParams::from_internal(5.5e9, qi, qe, th).unwrap();
                let bg = background(r.f_r);
                let w = SweepWindow::around(&r, 10.0, 201);
                // a third of the seeds per angle keeps the test quick; the
                // acceptance suite runs all 100
                for seed in 0..34 {
                    let s = synthesize_sweep(&r, &bg, &w, 1e-3, seed).unwrap();
                    let fit = fit_resonance(&s).unwrap_or_else(|e| panic!("{qi:e}/{qe:e}/{th}/{seed}: {e}"));
                    let e = rel(fit.q_internal, qi);
                    assert!(e < 0.15, "{qi:e}/{qe:e}/{th}/{seed}: {e}");
                }
            }
        }
    }
}
