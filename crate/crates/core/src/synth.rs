//! Synthetic resonator chips with known TLS parameters, used as an
//! end-to-end oracle for the analysis pipeline.
//!
//! Each resonator gets a background `Q0`, a low-power TLS fraction and a
//! saturation photon number. For every source power the photon number and
//! loaded Q are solved self-consistently (Qi depends on n̄, n̄ on Ql) and a
//! noisy sweep is drawn from the full lineshape.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::batch;
use crate::error::{Error, Result};
use crate::io::{meta, report::fmt9, write_sweep, FormatTag, RunConfig};
use crate::model::{synthesize_sweep, BackgroundParams, ComplexSweep, ResonanceParams, SweepWindow};
use crate::power::{chip_power, photon_number, AttenuationBudget};
use crate::tls::tls_model;
use crate::units::{dbm_to_watts, q_loaded_from};

/// File format choice for a written chip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChipFormat {
    Single(FormatTag),
    /// Resonators alternate between `csv-ri` and `csv-magphase`.
    MixedCsv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChipSpec {
    pub n_resonators: usize,
    pub f_first: f64,
    pub f_step: f64,
    pub q_external_range: (f64, f64),
    pub theta_max: f64,
    pub q0_range: (f64, f64),
    pub frac_tls_range: (f64, f64),
    /// Drawn log-uniformly.
    pub n_c_range: (f64, f64),
    pub powers_dbm: Vec<f64>,
    pub budget: AttenuationBudget,
    /// Per-quadrature noise standard deviation.
    pub noise_sigma: f64,
    pub n_points: usize,
    pub linewidths: f64,
    pub amp_db: f64,
    pub cable_delay: f64,
    pub temperature_mk: f64,
    pub seed: u64,
}

impl Default for ChipSpec {
    /// Eight resonators from 5.0 to 6.4 GHz, TLS fractions in [0.2, 0.4],
    /// eleven source powers from −30 to −80 dBm.
    fn default() -> Self {
        ChipSpec {
            n_resonators: 8,
            f_first: 5.0e9,
            f_step: 200e6,
            q_external_range: (0.8e5, 1.2e5),
            theta_max: 0.1,
            q0_range: (2e6, 4e6),
            frac_tls_range: (0.2, 0.4),
            n_c_range: (3e2, 3e3),
            powers_dbm: (0..11).map(|k| -30.0 - 5.0 * k as f64).collect(),
            budget: AttenuationBudget::reference_input_line(),
            noise_sigma: 5e-4,
            n_points: 401,
            linewidths: 10.0,
            amp_db: -3.0,
            cable_delay: 40e-9,
            temperature_mk: 10.0,
            seed: 1,
        }
    }
}

/// Ground truth of one synthetic resonator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResonatorTruth {
    pub resonator_id: String,
    pub f_r: f64,
    pub q_external_mag: f64,
    pub theta: f64,
    pub q0: f64,
    pub q_tls: f64,
    pub n_c: f64,
    pub frac_tls_lowpower: f64,
}

impl ResonatorTruth {
    /// Internal Q at photon number `n_bar`.
    pub fn q_internal(&self, n_bar: f64) -> f64 {
        1.0 / tls_model(n_bar, self.q0, self.q_tls, self.n_c)
    }

    /// Self-consistent photon number and resonance at chip power `p_chip_dbm`.
    pub fn operating_point(&self, p_chip_dbm: f64) -> Result<(f64, ResonanceParams)> {
        let p = dbm_to_watts(p_chip_dbm)?;
        let mut n = 1.0;
        for _ in 0..200 {
            let ql = q_loaded_from(self.q_internal(n), self.q_external_mag, self.theta)?;
            let next = photon_number(p, self.f_r, ql, self.q_external_mag);
            let done = ((next - n) / next).abs() < 1e-14;
            n = next;
            if done {
                break;
            }
        }
        let res = ResonanceParams::from_internal(self.f_r, self.q_internal(n), self.q_external_mag, self.theta)?;
        Ok((n, res))
    }
}

#[derive(Debug, Clone)]
pub struct SynthResonator {
    pub truth: ResonatorTruth,
    /// One sweep per source power, in the order of [`ChipSpec::powers_dbm`].
    pub sweeps: Vec<ComplexSweep>,
    pub n_bar: Vec<f64>,
}

fn uniform(rng: &mut ChaCha8Rng, (a, b): (f64, f64)) -> f64 {
    if b > a {
        rng.random_range(a..b)
    } else {
        a
    }
}

pub fn draw_truth(spec: &ChipSpec) -> Vec<ResonatorTruth> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.n_resonators)
        .map(|k| {
            let q0 = uniform(&mut rng, spec.q0_range);
            let frac = uniform(&mut rng, spec.frac_tls_range);
            // frac = (1/qt) / (1/q0 + 1/qt)
            let q_tls = q0 * (1.0 - frac) / frac;
            let n_c = uniform(&mut rng, (spec.n_c_range.0.ln(), spec.n_c_range.1.ln())).exp();
            let q_external_mag = uniform(&mut rng, spec.q_external_range);
            let theta = uniform(&mut rng, (-spec.theta_max, spec.theta_max));
            ResonatorTruth {
                resonator_id: format!("R{}", k + 1),
                f_r: spec.f_first + spec.f_step * k as f64,
                q_external_mag,
                theta,
                q0,
                q_tls,
                n_c,
                frac_tls_lowpower: frac,
            }
        })
        .collect()
}

/// Draws a chip: truth parameters and one sweep per resonator and power.
pub fn generate_chip(spec: &ChipSpec) -> Result<Vec<SynthResonator>> {
    if spec.n_resonators == 0 || spec.powers_dbm.is_empty() {
        return Err(Error::InvalidInput("chip needs resonators and powers".into()));
    }
    if !(spec.noise_sigma >= 0.0) {
        return Err(Error::InvalidInput(format!("noise sigma {}", spec.noise_sigma)));
    }
    let truths = draw_truth(spec);
    let np = spec.powers_dbm.len();
    let units: Vec<(usize, usize)> = (0..truths.len()).flat_map(|k| (0..np).map(move |j| (k, j))).collect();
    let made = batch::map(&units, |&(k, j)| -> Result<(f64, ComplexSweep)> {
        let t = &truths[k];
        let p_source = spec.powers_dbm[j];
        let (n_bar, res) = t.operating_point(chip_power(p_source, &spec.budget))?;
        let bg = BackgroundParams {
            amp_db_at_fref: spec.amp_db,
            amp_slope_db_per_hz: 0.0,
            phase_offset_alpha: 0.3 + 0.4 * k as f64,
            cable_delay_tau: spec.cable_delay,
            f_ref: t.f_r,
        };
        let window = SweepWindow::around(&res, spec.linewidths, spec.n_points);
        let seed = spec.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((k as u64) << 32 | j as u64);
        let sweep = synthesize_sweep(&res, &bg, &window, spec.noise_sigma, seed)?
            .with_power(p_source)
            .with_meta(meta::RESONATOR_ID, t.resonator_id.clone())
            .with_meta(meta::TEMPERATURE_MK, spec.temperature_mk.to_string());
        Ok((n_bar, sweep))
    });
    let mut made = made.into_iter();
    let mut out = Vec::with_capacity(truths.len());
    for t in truths {
        let mut sweeps = Vec::with_capacity(np);
        let mut n_bar = Vec::with_capacity(np);
        for _ in 0..np {
            let (n, s) = made.next().expect("one result per unit")?;
            sweeps.push(s);
            n_bar.push(n);
        }
        out.push(SynthResonator { truth: t, sweeps, n_bar });
    }
    Ok(out)
}

/// Writes a generated chip to `dir`: one file per sweep under `data/`,
/// `truth.csv` and a ready-to-run `config.toml`. Returns the config path.
pub fn write_chip(dir: &Path, spec: &ChipSpec, format: ChipFormat) -> Result<PathBuf> {
    let chip = generate_chip(spec)?;
    let data = dir.join(DATA_DIR);
    std::fs::create_dir_all(&data).map_err(|e| Error::io(&data, e))?;
    for (k, r) in chip.iter().enumerate() {
        let tag = match format {
            ChipFormat::Single(t) => t,
            ChipFormat::MixedCsv if k % 2 == 1 => FormatTag::CsvMagPhase,
            ChipFormat::MixedCsv => FormatTag::CsvRi,
        };
        for s in &r.sweeps {
            let name = format!("{}_{}dBm.{}", r.truth.resonator_id, s.power_dbm_at_source, tag.extension());
            write_sweep(&data.join(name), s, tag)?;
        }
    }
    write_truth(&dir.join("truth.csv"), &chip)?;
    let globs = vec![format!("{DATA_DIR}/*.csv"), format!("{DATA_DIR}/*.s2p")];
    let mut cfg = RunConfig::new(globs, spec.budget.clone(), "out");
    cfg.cohort_label = "synthetic".into();
    cfg.seed = spec.seed;
    let toml = cfg.to_toml_string()?;
    let path = dir.join("config.toml");
    std::fs::write(&path, toml).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub const DATA_DIR: &str = "data";

pub const TRUTH_COLUMNS: [&str; 8] =
    ["resonator_id", "f_r_hz", "q_external_mag", "theta_rad", "q0", "q_tls", "n_c", "frac_tls_lowpower"];

fn write_truth(path: &Path, chip: &[SynthResonator]) -> Result<()> {
    let err = |e: csv::Error| Error::InvalidInput(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(TRUTH_COLUMNS).map_err(err)?;
    for r in chip {
        let t = &r.truth;
        w.write_record([
            t.resonator_id.clone(),
            fmt9(t.f_r),
            fmt9(t.q_external_mag),
            fmt9(t.theta),
            fmt9(t.q0),
            fmt9(t.q_tls),
            fmt9(t.n_c),
            fmt9(t.frac_tls_lowpower),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truth_is_in_range_and_deterministic() {
        let spec = ChipSpec::default();
        let a = draw_truth(&spec);
        assert_eq!(a, draw_truth(&spec));
        assert_eq!(a.len(), 8);
        assert_eq!(a[7].f_r, 6.4e9);
        for t in &a {
            assert!((0.2..0.4).contains(&t.frac_tls_lowpower));
            let f = (1.0 / t.q_tls) / (1.0 / t.q0 + 1.0 / t.q_tls);
            assert!((f - t.frac_tls_lowpower).abs() < 1e-12);
        }
    }

    #[test]
    fn operating_point_is_self_consistent() {
        let t = &draw_truth(&ChipSpec::default())[0];
        for p in [-99.0, -149.0] {
            let (n, res) = t.operating_point(p).unwrap();
            let back = photon_number(dbm_to_watts(p).unwrap(), t.f_r, res.q_loaded, t.q_external_mag);
            assert!((back - n).abs() / n < 1e-12);
            assert!((res.q_internal().unwrap() - t.q_internal(n)).abs() / t.q_internal(n) < 1e-9);
        }
    }
}
