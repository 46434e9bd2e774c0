//! End-to-end analysis of a directory of sweeps.
//!
//! Files are parsed and every (resonator, power) sweep is fitted in
//! parallel; results are then merged per resonator in sorted order, so
//! outputs do not depend on scheduling. Per resonator: power series, TLS
//! fit, decomposition at n̄ = 0 and 1, RRSD. A failure stays with its
//! resonator and never changes another resonator's outputs.
//!
//! Artifacts written to the output directory:
//!
//! - `fit_<id>.json` per resonator
//! - `summary.csv`, `decomposition.csv`, `errors.csv`
//! - `qi_vs_nbar.svg`, `decomp_<id>.svg`, `loss_fractions.svg`,
//!   `cohort_qtls.svg`

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::batch;
use crate::error::{Error, Result};
use crate::fit::{fit_resonance, ResonanceFit};
use crate::io::report::{self, ErrorRow, ResonatorReport, SummaryRow};
use crate::io::svg::{self, Axis, LossBar, Panel, Scale, Series, Style};
use crate::io::{load_sweep, sniff_resonator_id, RunConfig, SweepFileHeader};
use crate::model::ComplexSweep;
use crate::power::{build_power_series_with, PowerSeries, RejectedFit};
use crate::tls::{decompose_loss, fit_tls, relative_residuals, CohortSummary, TlsFit};

#[derive(Debug, Clone)]
pub struct ResonatorOutcome {
    pub resonator_id: String,
    pub series: Option<PowerSeries>,
    pub tls: Option<TlsFit>,
    pub report: Option<ResonatorReport>,
    pub errors: Vec<ErrorRow>,
}

impl ResonatorOutcome {
    pub fn ok(&self) -> bool {
        self.errors.is_empty() && self.tls.as_ref().is_some_and(|t| t.converged)
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub output_dir: PathBuf,
    pub n_files: usize,
    /// Sorted by resonator id.
    pub resonators: Vec<ResonatorOutcome>,
}

impl PipelineOutcome {
    pub fn errors(&self) -> impl Iterator<Item = &ErrorRow> {
        self.resonators.iter().flat_map(|r| r.errors.iter())
    }

    /// 0 when every resonator produced a converged TLS fit, else 1.
    pub fn exit_code(&self) -> i32 {
        if self.resonators.iter().all(ResonatorOutcome::ok) {
            0
        } else {
            1
        }
    }

    pub fn summary_rows(&self) -> Vec<SummaryRow> {
        self.resonators.iter().filter_map(|r| r.report.as_ref().map(SummaryRow::from)).collect()
    }
}

type LoadedSweep = (PathBuf, SweepFileHeader, ComplexSweep);

struct Loaded {
    path: PathBuf,
    result: Result<(SweepFileHeader, ComplexSweep)>,
}

fn file_label(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

/// Characters safe in file names; everything else becomes `_`.
fn file_safe(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect()
}

/// Runs the analysis described by `cfg`. Errors are returned only when the
/// run cannot start: no input files, or an unusable output directory.
pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineOutcome> {
    let files = cfg.input_files()?;
    if files.is_empty() {
        return Err(Error::Config(format!("no input files match {:?}", cfg.data_globs)));
    }
    let out_dir = cfg.prepare_output_dir()?;
    log::info!("{} input files, writing to {}", files.len(), out_dir.display());

    let loaded = batch::map(&files, |p| Loaded {
        path: p.clone(),
        result: load_sweep(p).and_then(|s| Ok((SweepFileHeader::of(&s)?, s))),
    });

    let mut groups: BTreeMap<String, (Vec<LoadedSweep>, Vec<ErrorRow>)> = BTreeMap::new();
    for l in loaded {
        match l.result {
            Ok((h, s)) => groups.entry(h.resonator_id.clone()).or_default().0.push((l.path, h, s)),
            Err(e) => {
                let id = sniff_resonator_id(&l.path).unwrap_or_else(|| {
                    l.path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
                });
                log::error!("{}: {e}", l.path.display());
                groups.entry(id.clone()).or_default().1.push(ErrorRow {
                    resonator_id: id,
                    file: file_label(&l.path),
                    message: e.to_string(),
                });
            }
        }
    }
    for (sweeps, _) in groups.values_mut() {
        sweeps.sort_by(|a, b| a.1.power_dbm.total_cmp(&b.1.power_dbm).then_with(|| a.0.cmp(&b.0)));
    }

    // one fit per (resonator, power), flattened so the pool sees every unit
    let units: Vec<(&str, usize, &ComplexSweep)> = groups
        .iter()
        .flat_map(|(id, (sweeps, _))| sweeps.iter().enumerate().map(move |(i, s)| (id.as_str(), i, &s.2)))
        .collect();
    let fitted = batch::map(&units, |(_, _, s)| fit_resonance(s));
    let mut fits: BTreeMap<&str, Vec<Result<ResonanceFit>>> = BTreeMap::new();
    for ((id, _, _), f) in units.iter().zip(fitted) {
        fits.entry(id).or_default().push(f);
    }

    let ids: Vec<&String> = groups.keys().collect();
    let resonators = batch::map(&ids, |id| {
        let (sweeps, load_errors) = &groups[*id];
        let no_fits = Vec::new();
        let fits = fits.get(id.as_str()).unwrap_or(&no_fits);
        analyze_resonator(id, sweeps, fits, load_errors.clone(), cfg)
    });

    let outcome = PipelineOutcome { output_dir: out_dir.clone(), n_files: files.len(), resonators };
    write_artifacts(&outcome, cfg)?;
    Ok(outcome)
}

fn analyze_resonator(
    id: &str,
    sweeps: &[(PathBuf, SweepFileHeader, ComplexSweep)],
    fits: &[Result<ResonanceFit>],
    mut errors: Vec<ErrorRow>,
    cfg: &RunConfig,
) -> ResonatorOutcome {
    let mut ok_fits = Vec::new();
    let mut failed = Vec::new();
    for ((path, h, _), f) in sweeps.iter().zip(fits) {
        match f {
            Ok(fit) => ok_fits.push((h.power_dbm, fit.clone())),
            Err(e) => {
                log::warn!("{id}: fit of {} failed: {e}", path.display());
                failed.push(RejectedFit { p_source_dbm: h.power_dbm, reason: format!("{}: {e}", file_label(path)) });
            }
        }
    }
    let mut outcome =
        ResonatorOutcome { resonator_id: id.to_string(), series: None, tls: None, report: None, errors: Vec::new() };
    let fail = |errors: &mut Vec<ErrorRow>, e: Error| {
        log::error!("{id}: {e}");
        errors.push(ErrorRow { resonator_id: id.to_string(), file: String::new(), message: e.to_string() });
    };
    if sweeps.is_empty() {
        outcome.errors = errors;
        return outcome;
    }
    let mut series = match build_power_series_with(&ok_fits, &cfg.budget, id, &cfg.fit_gates) {
        Ok(s) => s,
        Err(e) => {
            fail(&mut errors, e);
            outcome.errors = errors;
            return outcome;
        }
    };
    series.rejected.extend(failed);
    series.rejected.sort_by(|a, b| a.p_source_dbm.total_cmp(&b.p_source_dbm).then_with(|| a.reason.cmp(&b.reason)));
    match fit_tls(&series) {
        Ok(tls) => {
            let mut rep = ResonatorReport::new(&series, &tls, &cfg.budget, &cfg.cohort_label);
            rep.file_errors = errors
                .iter()
                .map(|e| report::FileErrorReport { file: e.file.clone(), error: e.message.clone() })
                .collect();
            outcome.report = Some(rep);
            outcome.tls = Some(tls);
        }
        Err(e) => fail(&mut errors, e),
    }
    outcome.series = Some(series);
    outcome.errors = errors;
    outcome
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<std::fs::File> {
    std::fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn write_artifacts(o: &PipelineOutcome, cfg: &RunConfig) -> Result<()> {
    let dir = &o.output_dir;
    for r in &o.resonators {
        if let Some(rep) = &r.report {
            report::write_json(&dir.join(format!("fit_{}.json", file_safe(&r.resonator_id))), rep)?;
        }
    }
    report::write_summary_csv(create(&dir.join("summary.csv"))?, &o.summary_rows())?;
    let errors: Vec<ErrorRow> = o.errors().cloned().collect();
    report::write_errors_csv(create(&dir.join("errors.csv"))?, &errors)?;
    write_decomposition_csv(&dir.join("decomposition.csv"), o)?;

    let done: Vec<(&PowerSeries, &TlsFit)> =
        o.resonators.iter().filter_map(|r| Some((r.series.as_ref()?, r.tls.as_ref()?))).collect();
    write_text(&dir.join("qi_vs_nbar.svg"), &qi_vs_nbar_figure(&done))?;
    for (s, t) in &done {
        write_text(&dir.join(format!("decomp_{}.svg", file_safe(&s.resonator_id))), &decomposition_figure(s, t))?;
    }
    let bars: Vec<LossBar> = done
        .iter()
        .map(|(s, t)| {
            let d = decompose_loss(t, 0.0);
            LossBar { label: s.resonator_id.clone(), background: d.background, tls: d.tls }
        })
        .collect();
    write_text(
        &dir.join("loss_fractions.svg"),
        &svg::stacked_fraction_bars("Low-power internal loss by channel", &bars),
    )?;
    let q_tls: Vec<f64> = done.iter().map(|(_, t)| t.q_tls).collect();
    let cohorts: Vec<CohortSummary> = CohortSummary::new(&cohort_name(cfg), q_tls).into_iter().collect();
    write_text(&dir.join("cohort_qtls.svg"), &svg::cohort_strip("Q_TLS by cohort", &cohorts))?;
    Ok(())
}

fn cohort_name(cfg: &RunConfig) -> String {
    if cfg.cohort_label.is_empty() {
        "this run".into()
    } else {
        cfg.cohort_label.clone()
    }
}

fn write_decomposition_csv(path: &Path, o: &PipelineOutcome) -> Result<()> {
    let err = |e: csv::Error| Error::InvalidInput(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["resonator_id", "loss_background", "loss_tls_n0", "frac_tls_n0", "loss_tls_n1", "frac_tls_n1"])
        .map_err(err)?;
    for r in &o.resonators {
        let Some(t) = &r.tls else { continue };
        let (d0, d1) = (decompose_loss(t, 0.0), decompose_loss(t, 1.0));
        w.write_record([
            r.resonator_id.clone(),
            report::fmt9(d0.background),
            report::fmt9(d0.tls),
            report::fmt9(d0.fraction_tls),
            report::fmt9(d1.tls),
            report::fmt9(d1.fraction_tls),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn model_curve(t: &TlsFit, lo: f64, hi: f64, f: impl Fn(&TlsFit, f64) -> f64) -> Vec<(f64, f64)> {
    (0..=120)
        .map(|i| {
            let n = lo * (hi / lo).powf(i as f64 / 120.0);
            (n, f(t, n))
        })
        .collect()
}

fn qi_vs_nbar_figure(done: &[(&PowerSeries, &TlsFit)]) -> String {
    let mut series = Vec::new();
    let all = || done.iter().flat_map(|(s, _)| s.points().iter());
    let x = Axis::covering("mean photon number n", Scale::Log, all().map(|p| p.n_bar));
    for (k, (s, t)) in done.iter().enumerate() {
        let c = svg::color(k);
        series.push(Series::new(
            &s.resonator_id,
            s.points().iter().map(|p| (p.n_bar, p.q_internal)).collect(),
            Style::Markers,
            c,
        ));
        series.push(Series::new("", model_curve(t, x.lo, x.hi, |t, n| 1.0 / t.eval(n)), Style::Line, c));
    }
    let y = Axis::covering("internal quality factor Qi", Scale::Log, all().map(|p| p.q_internal));
    let panel = Panel { title: "Qi versus photon number".into(), x, y, series, zero_line: false };
    svg::render_panels(&[panel], &[360.0])
}

fn decomposition_figure(s: &PowerSeries, t: &TlsFit) -> String {
    let pts = s.points();
    let x = Axis::covering("mean photon number n", Scale::Log, pts.iter().map(|p| p.n_bar));
    let background = 1.0 / t.q0;
    let y = Axis::covering(
        "internal loss 1/Qi",
        Scale::Log,
        pts.iter().map(|p| 1.0 / p.q_internal).chain([background, t.eval(x.lo), decompose_loss(t, x.lo).tls]),
    );
    let top = Panel {
        title: format!("{}: loss decomposition", s.resonator_id),
        series: vec![
            Series::new(
                "measured",
                pts.iter().map(|p| (p.n_bar, 1.0 / p.q_internal)).collect(),
                Style::Markers,
                "#333333",
            ),
            Series::new("total", model_curve(t, x.lo, x.hi, TlsFit::eval), Style::Line, svg::color(0)),
            Series::new("1/Q0", vec![(x.lo, background), (x.hi, background)], Style::Dashed, svg::color(1)),
            Series::new(
                "TLS",
                model_curve(t, x.lo, x.hi, |t, n| decompose_loss(t, n).tls),
                Style::Dotted,
                svg::color(2),
            ),
        ],
        x: x.clone(),
        y,
        zero_line: false,
    };
    let res: Vec<(f64, f64)> = pts.iter().zip(relative_residuals(s, t)).map(|(p, r)| (p.n_bar, 100.0 * r)).collect();
    let bottom = Panel {
        title: format!("relative residuals (RRSD {:.2} %)", t.rrsd_percent),
        y: Axis::covering("residual (%)", Scale::Linear, res.iter().map(|r| r.1).chain([0.0])),
        series: vec![Series::new("", res, Style::Markers, "#333333")],
        x,
        zero_line: true,
    };
    svg::render_panels(&[top, bottom], &[300.0, 140.0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn safe_names() {
        assert_eq!(file_safe("R1"), "R1");
        assert_eq!(file_safe("chip A/R 2"), "chip_A_R_2");
    }
}
