//! Acceptance checks for the toolkit as a whole.
//!
//! Runs as a plain binary (no libtest harness) so the verdict lines are
//! always printed: one `PASS`/`FAIL` line per check, then a non-zero exit
//! status if any check failed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use resq::batch;
use resq::fit::fit_resonance;
use resq::model::{synthesize_sweep, BackgroundParams, ResonanceParams, SweepWindow};
use resq::power::{build_power_series, AttenuationBudget, PowerPoint, PowerSeries};
use resq::synth::{generate_chip, ChipSpec};
use resq::tls::{compare_cohorts, fit_tls, tls_model, CohortSummary};

const R5: (f64, f64, f64) = (2.88e6, 1.07e7, 1.72e3);

type Check = Result<String, String>;
type CheckFn = fn() -> Check;

fn resq() -> Command {
    Command::new(env!("CARGO_BIN_EXE_resq"))
}

fn run(cmd: &mut Command) -> Result<(i32, String), String> {
    let out = cmd.output().map_err(|e| format!("spawn: {e}"))?;
    let code = out.status.code().unwrap_or(-1);
    if code != 0 {
        return Err(format!("exit {code}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok((code, String::from_utf8_lossy(&out.stdout).into_owned()))
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn within_time(t0: Instant, limit: Duration) -> Result<(), String> {
    let t = t0.elapsed();
    if t > limit {
        return Err(format!("took {t:.2?}, limit {limit:?}"));
    }
    Ok(())
}

/// Reads `key value ...` lines printed by `resq design`.
fn design_value(stdout: &str, key: &str) -> Result<f64, String> {
    stdout
        .lines()
        .find_map(|l| {
            let mut it = l.split_whitespace();
            (it.next() == Some(key)).then(|| it.next()).flatten()
        })
        .ok_or_else(|| format!("no '{key}' line in output"))?
        .parse()
        .map_err(|e| format!("{key}: {e}"))
}

fn cpw_design() -> Check {
    let t0 = Instant::now();
    let (_, out) = run(resq().args(["design", "--s", "15e-6", "--g", "7.5e-6", "--eps-r", "11.68"]))?;
    within_time(t0, Duration::from_secs(1))?;
    let z0 = design_value(&out, "z0")?;
    let eps = design_value(&out, "eps_eff")?;
    let msg = format!("z0 = {z0:.3} ohm, eps_eff = {eps:.4}");
    if (z0 - 47.9).abs() <= 0.1 && (eps - 6.34).abs() <= 0.01 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn attenuation_budget() -> Check {
    let b = AttenuationBudget::reference_input_line();
    let losses: Vec<f64> = b.items.iter().map(|i| i.loss_db).collect();
    let msg = format!("items {losses:?}, total {} dB, used {} dB", b.total_db, b.used_db);
    if losses == [62.0, 0.35, 2.0, 3.0, 2.0] && b.total_db == 69.35 && b.used_db == 69.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn single_photon_qi() -> Check {
    let qi = 1.0 / tls_model(1.0, R5.0, R5.1, R5.2);
    let msg = format!("Qi(n=1) = {qi:.4e}");
    if rel(qi, 2.27e6) <= 0.005 && qi <= 2.4e6 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn lineshape_roundtrip() -> Check {
    let t0 = Instant::now();
    let background = |f_r: f64| BackgroundParams {
        amp_db_at_fref: -3.0,
        amp_slope_db_per_hz: 1e-6,
        phase_offset_alpha: 0.7,
        cable_delay_tau: 40e-9,
        f_ref: f_r,
    };
    let mut worst_exact = 0.0f64;
    let mut worst_noisy = 0.0f64;
    let mut noisy_fits = 0;
    for qi in [1e5, 1e6, 1e7] {
        for qe in [3e4, 1e5, 3e5] {
            for th in [-0.2, 0.0, 0.2] {
                let tag = format!("Qi {qi:e}, |Qe| {qe:e}, theta {th}");
                let r = ResonanceParams::from_internal(5.5e9, qi, qe, th).map_err(|e| format!("{tag}: {e}"))?;
                let bg = background(r.f_r);
                let w = SweepWindow::around(&r, 10.0, 201);
                let s = synthesize_sweep(&r, &bg, &w, 0.0, 0).map_err(|e| e.to_string())?;
                let fit = fit_resonance(&s).map_err(|e| format!("{tag}: {e}"))?;
                let p = fit.params;
                for e in [
                    rel(p.f_r, r.f_r),
                    rel(p.q_loaded, r.q_loaded),
                    rel(p.q_external_mag, qe),
                    rel(fit.q_internal, qi),
                    (p.theta - th).abs(),
                    rel(fit.background.cable_delay_tau, 40e-9),
                ] {
                    worst_exact = worst_exact.max(e);
                }
                if qi / qe > 100.0 {
                    continue;
                }
                let seeds: Vec<u64> = (0..100).collect();
                let errors = batch::map(&seeds, |&seed| {
                    let s = synthesize_sweep(&r, &bg, &w, 1e-3, seed).map_err(|e| e.to_string())?;
                    let fit = fit_resonance(&s).map_err(|e| format!("{tag}, seed {seed}: {e}"))?;
                    Ok::<_, String>(rel(fit.q_internal, qi))
                });
                for e in errors {
                    worst_noisy = worst_noisy.max(e?);
                    noisy_fits += 1;
                }
            }
        }
    }
    within_time(t0, Duration::from_secs(120))?;
    let msg = format!(
        "zero noise: worst rel. error {worst_exact:.1e}; noisy: worst Qi error {:.1}% over {noisy_fits} fits",
        100.0 * worst_noisy
    );
    if worst_exact < 1e-5 && worst_noisy < 0.15 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

/// R5-like loss with multiplicative Gaussian noise of relative size `rel`.
fn noisy_series(rel: f64, seed: u64) -> PowerSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Normal::new(0.0, 1.0).unwrap();
    let pts = log_grid(1.0, 1e6, 12).into_iter().map(|n| {
        let loss = tls_model(n, R5.0, R5.1, R5.2) * (1.0 + rel * z.sample(&mut rng));
        PowerPoint::from_loss(n, 1.0 / loss, None)
    });
    PowerSeries::from_points("R5", pts)
}

fn tls_roundtrip() -> Check {
    let t0 = Instant::now();
    let mut q0 = Vec::new();
    let mut qt = Vec::new();
    let mut nc = Vec::new();
    for seed in 0..100 {
        let f = fit_tls(&noisy_series(0.02, seed)).map_err(|e| format!("seed {seed}: {e}"))?;
        q0.push(f.q0);
        qt.push(f.q_tls);
        nc.push(f.n_c);
    }
    within_time(t0, Duration::from_secs(30))?;
    let (e0, et, en) = (rel(median(q0), R5.0), rel(median(qt), R5.1), rel(median(nc), R5.2));
    let msg = format!("median errors: q0 {:.1}%, q_tls {:.1}%, n_c {:.1}%", 100.0 * e0, 100.0 * et, 100.0 * en);
    if e0 <= 0.10 && et <= 0.20 && en <= 0.50 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn rrsd_behaviour() -> Check {
    let exact = fit_tls(&noisy_series(0.0, 0)).map_err(|e| e.to_string())?.rrsd_percent;
    let mut rr = Vec::new();
    for seed in 0..100 {
        rr.push(fit_tls(&noisy_series(0.02, seed)).map_err(|e| format!("seed {seed}: {e}"))?.rrsd_percent);
    }
    let m = median(rr);
    let msg = format!("exact data {exact:.1e}%, 2% noise median {m:.2}%");
    if exact < 1e-6 && (m - 2.0).abs() <= 0.3 * 2.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn read_csv_column(path: &Path, column: &str) -> Result<BTreeMap<String, f64>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let k =
        header.iter().position(|h| *h == column).ok_or_else(|| format!("{}: no column {column}", path.display()))?;
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let v = f[k].parse::<f64>().map_err(|e| format!("{}: {e}", path.display()))?;
            Ok((f[0].to_string(), v))
        })
        .collect()
}

fn synth_and_analyze(dir: &Path, seed: u64, out: &Path) -> Result<PathBuf, String> {
    run(resq().args(["synth", "--seed", &seed.to_string(), "--out"]).arg(dir))?;
    let config = dir.join("config.toml");
    run(resq().arg("analyze").arg("--config").arg(&config).env("RESQ_OUTPUT_DIR", out))?;
    Ok(config)
}

fn decomposition_fractions() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    let mut n = 0;
    for seed in 1..=3 {
        let dir = tmp.path().join(format!("chip{seed}"));
        let out = dir.join("out");
        synth_and_analyze(&dir, seed, &out)?;
        let truth = read_csv_column(&dir.join("truth.csv"), "frac_tls_lowpower")?;
        let got = read_csv_column(&out.join("summary.csv"), "frac_tls_lowpower")?;
        if got.len() != truth.len() {
            return Err(format!("seed {seed}: {} of {} resonators reported", got.len(), truth.len()));
        }
        for (id, t) in &truth {
            let g = got.get(id).ok_or_else(|| format!("seed {seed}: {id} missing"))?;
            if !(0.2..=0.4).contains(t) {
                return Err(format!("seed {seed}: truth {t} outside [0.2, 0.4]"));
            }
            worst = worst.max((g - t).abs());
            n += 1;
        }
    }
    let msg = format!("{n} resonators on 3 chips, worst |fraction error| {worst:.4}");
    if worst <= 0.05 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn cohort_comparison() -> Check {
    let cohorts = [
        CohortSummary::new("fresh", vec![4e6, 1e7]),
        CohortSummary::new("aged", vec![3.5e6]),
        CohortSummary::new("Nb", vec![2.3e6]),
    ]
    .into_iter()
    .collect::<Result<Vec<_>, _>>()
    .map_err(|e| e.to_string())?;
    let cmp = compare_cohorts(&cohorts).map_err(|e| e.to_string())?;
    let order: Vec<&str> = cmp.ordered.iter().map(|c| c.cohort_label.as_str()).collect();
    let ratio = cmp.ratio("aged", "Nb").ok_or("no aged/Nb ratio")?;
    let msg = format!("order {order:?}, aged/Nb = {ratio:.3}");
    if order == ["fresh", "aged", "Nb"] && (ratio - 1.52).abs() <= 0.01 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn calibration_shift() -> Check {
    let spec = ChipSpec { n_resonators: 2, ..ChipSpec::default() };
    let chip = generate_chip(&spec).map_err(|e| e.to_string())?;
    let base = AttenuationBudget::reference_input_line();
    let mut worst_n = 0.0f64;
    let mut qi_changed = 0;
    for r in &chip {
        let fits = r
            .sweeps
            .iter()
            .map(|s| Ok((s.power_dbm_at_source, fit_resonance(s)?)))
            .collect::<resq::Result<Vec<_>>>()
            .map_err(|e| e.to_string())?;
        let id = &r.truth.resonator_id;
        let s0 = build_power_series(&fits, &base, id).map_err(|e| e.to_string())?;
        for delta in [3.0, -3.0] {
            let b = base.shifted(delta).map_err(|e| e.to_string())?;
            let s1 = build_power_series(&fits, &b, id).map_err(|e| e.to_string())?;
            let expected = 10f64.powf(-delta / 10.0);
            for (a, b) in s0.points().iter().zip(s1.points()) {
                worst_n = worst_n.max(rel(b.n_bar / a.n_bar, expected));
                if a.q_internal != b.q_internal || a.p_source_dbm != b.p_source_dbm {
                    qi_changed += 1;
                }
            }
        }
    }
    let msg = format!("worst n_bar ratio error {worst_n:.1e}, {qi_changed} Qi values changed");
    if worst_n < 1e-12 && qi_changed == 0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn files_in(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))? {
        let p = e.map_err(|e| e.to_string())?.path();
        let name = p.file_name().unwrap().to_string_lossy().into_owned();
        out.insert(name, std::fs::read(&p).map_err(|e| e.to_string())?);
    }
    Ok(out)
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("run_a"), tmp.path().join("run_b"));
    let config = synth_and_analyze(&tmp.path().join("chip"), 1, &a)?;
    run(resq().arg("analyze").arg("--config").arg(&config).env("RESQ_OUTPUT_DIR", &b))?;
    let (fa, fb) = (files_in(&a)?, files_in(&b)?);
    let kinds = |ext: &str| fa.keys().filter(|k| k.ends_with(ext)).count();
    if kinds(".json") != 8 || kinds(".svg") == 0 || !fa.contains_key("summary.csv") {
        return Err(format!("unexpected outputs {:?}", fa.keys().collect::<Vec<_>>()));
    }
    let differing: Vec<&String> = fa.keys().filter(|k| fa.get(*k) != fb.get(*k)).collect();
    if fa.len() == fb.len() && differing.is_empty() {
        Ok(format!("{} files identical ({} JSON, {} SVG)", fa.len(), kinds(".json"), kinds(".svg")))
    } else {
        Err(format!("differing: {differing:?}"))
    }
}

fn main() {
    let checks: [(&str, CheckFn); 10] = [
        ("CPW design reproduction", cpw_design),
        ("attenuation budget", attenuation_budget),
        ("single-photon Qi", single_photon_qi),
        ("resonance-fit round trip", lineshape_roundtrip),
        ("TLS-fit round trip", tls_roundtrip),
        ("RRSD behaviour", rrsd_behaviour),
        ("loss-decomposition fractions", decomposition_fractions),
        ("cohort comparison", cohort_comparison),
        ("calibration-shift invariance", calibration_shift),
        ("end-to-end determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let t0 = Instant::now();
        let (verdict, detail) = match check() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{:>2}. {verdict} {name} ({:.2?}): {detail}", i + 1, t0.elapsed());
    }
    println!("{} of {} acceptance checks passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
