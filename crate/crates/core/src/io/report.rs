//! JSON and CSV reports.
//!
//! Floating-point values are rounded to nine significant digits and printed
//! in their shortest form, so reports are byte-identical across runs and
//! platforms and diff cleanly.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::METHOD_TAG;
use crate::power::{AttenuationBudget, PowerSeries};
use crate::tls::{decompose_loss, keys as tls_keys, TlsFit};

pub const SIG_DIGITS: usize = 9;

pub const Q_INTERNAL_CONVENTION: &str = "1/Qi = 1/Ql - cos(theta)/|Qe| (diameter-corrected)";
pub const BACKGROUND_MODEL: &str = "a(f) = 10^((A + s (f - f_ref))/20) exp(i (alpha - 2 pi f tau))";

/// `x` rounded to [`SIG_DIGITS`] significant digits. Non-finite values pass
/// through.
pub fn sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIG_DIGITS - 1, x).parse().unwrap_or(x)
}

/// [`sig9`] printed in exponent form, e.g. `2.88e6`.
pub fn fmt9(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{:e}", sig9(x))
}

fn opt9(x: Option<f64>) -> Option<f64> {
    x.map(sig9)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointReport {
    pub p_source_dbm: f64,
    pub p_chip_dbm: f64,
    pub n_bar: f64,
    pub f_r_hz: f64,
    pub q_loaded: f64,
    pub q_external_mag: f64,
    pub theta_rad: Option<f64>,
    pub q_internal: f64,
    pub q_internal_sigma: Option<f64>,
    pub q_internal_scalar: Option<f64>,
    pub cable_delay_s: Option<f64>,
    pub residual_rms: Option<f64>,
    pub relative_residual_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectedReport {
    pub p_source_dbm: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileErrorReport {
    pub file: String,
    pub error: String,
}

/// Per-resonator report, written as `fit_<id>.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResonatorReport {
    pub resonator_id: String,
    pub cohort_label: String,
    pub fit_method: String,
    pub q_internal_convention: String,
    pub background_model: String,
    pub budget_total_db: f64,
    pub budget_used_db: f64,
    pub f_r_hz: f64,
    pub q0: f64,
    pub q0_sigma: f64,
    pub q_tls: f64,
    pub q_tls_sigma: f64,
    pub n_c: f64,
    pub n_c_sigma: f64,
    pub rrsd_percent: f64,
    pub mean_residual_percent: f64,
    pub frac_tls_lowpower: f64,
    pub frac_background_lowpower: f64,
    pub loss_background: f64,
    pub loss_tls_n0: f64,
    pub loss_tls_n1: f64,
    pub frac_tls_n1: f64,
    pub n_bar_min: f64,
    pub n_bar_max: f64,
    pub tls_converged: bool,
    pub tls_degenerate: bool,
    pub tls_weighted: bool,
    pub insufficient_dynamic_range: bool,
    pub n_points: usize,
    pub points: Vec<PointReport>,
    pub rejected: Vec<RejectedReport>,
    pub file_errors: Vec<FileErrorReport>,
}

impl ResonatorReport {
    pub fn new(series: &PowerSeries, fit: &TlsFit, budget: &AttenuationBudget, cohort_label: &str) -> Self {
        let d0 = decompose_loss(fit, 0.0);
        let d1 = decompose_loss(fit, 1.0);
        let (n_lo, n_hi) = series.n_bar_range().unwrap_or((f64::NAN, f64::NAN));
        let points = series
            .points()
            .iter()
            .map(|p| {
                let meas = 1.0 / p.q_internal;
                let f = p.fit.as_ref();
                PointReport {
                    p_source_dbm: sig9(p.p_source_dbm),
                    p_chip_dbm: sig9(p.p_chip_dbm),
                    n_bar: sig9(p.n_bar),
                    f_r_hz: sig9(p.f_r),
                    q_loaded: sig9(p.q_loaded),
                    q_external_mag: sig9(p.q_external_mag),
                    theta_rad: opt9(f.map(|f| f.params.theta)),
                    q_internal: sig9(p.q_internal),
                    q_internal_sigma: opt9(p.q_internal_sigma),
                    q_internal_scalar: opt9(f.and_then(|f| f.q_internal_scalar)),
                    cable_delay_s: opt9(f.map(|f| f.background.cable_delay_tau)),
                    residual_rms: opt9(f.map(|f| f.residual_rms)),
                    relative_residual_percent: sig9(100.0 * (meas - fit.eval(p.n_bar)) / meas),
                }
            })
            .collect();
        ResonatorReport {
            resonator_id: series.resonator_id.clone(),
            cohort_label: cohort_label.to_string(),
            fit_method: METHOD_TAG.to_string(),
            q_internal_convention: Q_INTERNAL_CONVENTION.to_string(),
            background_model: BACKGROUND_MODEL.to_string(),
            budget_total_db: sig9(budget.total_db),
            budget_used_db: sig9(budget.used_db),
            f_r_hz: sig9(series.f_r_median),
            q0: sig9(fit.q0),
            q0_sigma: sig9(fit.sigma_of(tls_keys::Q0)),
            q_tls: sig9(fit.q_tls),
            q_tls_sigma: sig9(fit.sigma_of(tls_keys::Q_TLS)),
            n_c: sig9(fit.n_c),
            n_c_sigma: sig9(fit.sigma_of(tls_keys::N_C)),
            rrsd_percent: sig9(fit.rrsd_percent),
            mean_residual_percent: sig9(fit.mean_residual_percent),
            frac_tls_lowpower: sig9(fit.frac_tls_lowpower),
            frac_background_lowpower: sig9(fit.frac_background_lowpower),
            loss_background: sig9(d0.background),
            loss_tls_n0: sig9(d0.tls),
            loss_tls_n1: sig9(d1.tls),
            frac_tls_n1: sig9(d1.fraction_tls),
            n_bar_min: sig9(n_lo),
            n_bar_max: sig9(n_hi),
            tls_converged: fit.converged,
            tls_degenerate: fit.degenerate,
            tls_weighted: fit.weighted,
            insufficient_dynamic_range: fit.insufficient_dynamic_range,
            n_points: series.len(),
            points,
            rejected: series
                .rejected
                .iter()
                .map(|r| RejectedReport { p_source_dbm: sig9(r.p_source_dbm), reason: r.reason.clone() })
                .collect(),
            file_errors: Vec::new(),
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub resonator_id: String,
    pub f_r_hz: f64,
    pub q0: f64,
    pub q_tls: f64,
    pub n_c: f64,
    pub rrsd_percent: f64,
    pub frac_tls_lowpower: f64,
}

impl From<&ResonatorReport> for SummaryRow {
    fn from(r: &ResonatorReport) -> Self {
        SummaryRow {
            resonator_id: r.resonator_id.clone(),
            f_r_hz: r.f_r_hz,
            q0: r.q0,
            q_tls: r.q_tls,
            n_c: r.n_c,
            rrsd_percent: r.rrsd_percent,
            frac_tls_lowpower: r.frac_tls_lowpower,
        }
    }
}

pub const SUMMARY_COLUMNS: [&str; 7] =
    ["resonator_id", "f_r_hz", "q0", "q_tls", "n_c", "rrsd_percent", "frac_tls_lowpower"];

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidInput(e.to_string())
}

pub fn write_summary_csv<W: Write>(out: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_COLUMNS).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.resonator_id.clone(),
            fmt9(r.f_r_hz),
            fmt9(r.q0),
            fmt9(r.q_tls),
            fmt9(r.n_c),
            fmt9(r.rrsd_percent),
            fmt9(r.frac_tls_lowpower),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<summary output>", e))
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let headers = r.headers().map_err(csv_err)?.clone();
    if headers.iter().ne(SUMMARY_COLUMNS) {
        return Err(Error::MalformedSweep(format!("{}: unexpected columns", path.display())));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let num = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| Error::MalformedSweep(format!("{}: bad number '{}'", path.display(), &rec[i])))
        };
        rows.push(SummaryRow {
            resonator_id: rec[0].to_string(),
            f_r_hz: num(1)?,
            q0: num(2)?,
            q_tls: num(3)?,
            n_c: num(4)?,
            rrsd_percent: num(5)?,
            frac_tls_lowpower: num(6)?,
        });
    }
    Ok(rows)
}

/// A failure attributed to a resonator, for `errors.csv` and the terminal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRow {
    pub resonator_id: String,
    pub file: String,
    pub message: String,
}

pub fn write_errors_csv<W: Write>(out: W, rows: &[ErrorRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["resonator_id", "file", "message"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([&r.resonator_id, &r.file, &r.message]).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<errors output>", e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_digits() {
        assert_eq!(sig9(1.0 / 3.0), 0.333333333);
        assert_eq!(fmt9(2.88e6), "2.88e6");
        assert_eq!(fmt9(5_499_999_999.999), "5.5e9");
        assert_eq!(fmt9(-3.472222222222e-7), "-3.47222222e-7");
        assert_eq!(fmt9(0.0), "0e0");
        assert_eq!(fmt9(f64::NAN), "nan");
    }

    #[test]
    fn summary_round_trip() {
        let rows = vec![SummaryRow {
            resonator_id: "R1".into(),
            f_r_hz: 5.0e9,
            q0: 2.88e6,
            q_tls: 1.07e7,
            n_c: 1720.0,
            rrsd_percent: 1.5,
            frac_tls_lowpower: 0.212,
        }];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("summary.csv");
        write_summary_csv(std::fs::File::create(&p).unwrap(), &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("resonator_id,f_r_hz,q0,q_tls,n_c,rrsd_percent,frac_tls_lowpower\n"));
        assert_eq!(read_summary_csv(&p).unwrap(), rows);
    }
}
