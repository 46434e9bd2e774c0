//! CSV sweeps.
//!
//! Comment lines start with `#`; those of the form `# key=value` carry
//! metadata (`resonator_id`, `power_dbm`, `temperature_mk`, `format`). Data
//! rows are `frequency_hz,re_s21,im_s21` (`csv-ri`, the default) or
//! `frequency_hz,mag_db,phase_deg` (`csv-magphase`). A non-numeric first row
//! is taken as a column header.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use super::{meta, parse_meta_line, FormatTag};
use crate::error::{Error, Result};
use crate::model::ComplexSweep;

pub fn parse_csv_sweep(path: &Path) -> Result<ComplexSweep> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(bytes).map_err(|_| Error::MalformedSweep(format!("{}: not UTF-8", path.display())))?;
    parse_csv_str(&text).map_err(|e| match e {
        Error::MalformedSweep(m) => Error::MalformedSweep(format!("{}: {m}", path.display())),
        Error::MetadataMissing(m) => Error::MetadataMissing(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_csv_str(text: &str) -> Result<ComplexSweep> {
    let mut metadata = std::collections::BTreeMap::new();
    let mut body = String::with_capacity(text.len());
    // (line number in the file) for each data line handed to the reader
    let mut line_no = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(c) = t.strip_prefix('#') {
            if let Some((k, v)) = parse_meta_line(c) {
                metadata.insert(k, v);
            }
        } else if !t.is_empty() {
            body.push_str(t);
            body.push('\n');
            line_no.push(i + 1);
        }
    }
    let format: FormatTag = match metadata.get(meta::FORMAT) {
        Some(f) => f.parse()?,
        None => FormatTag::CsvRi,
    };
    if format == FormatTag::TouchstoneS2p {
        return Err(Error::UnsupportedFormat("touchstone data in a CSV file".into()));
    }
    let power = metadata.get(meta::POWER_DBM).ok_or_else(|| Error::MetadataMissing("no '# power_dbm=' line".into()))?;
    let power: f64 =
        power.parse().map_err(|_| Error::MalformedSweep(format!("power_dbm '{power}' is not a number")))?;

    let mut reader =
        csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(body.as_bytes());
    let mut freqs = Vec::new();
    let mut s21 = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::MalformedSweep(e.to_string()))?;
        let line = line_no[k];
        if rec.len() != 3 {
            return Err(Error::MalformedSweep(format!("line {line}: {} columns, expected 3", rec.len())));
        }
        let nums: Option<Vec<f64>> = rec.iter().map(|f| f.parse().ok()).collect();
        let Some(v) = nums else {
            if k == 0 {
                continue;
            }
            return Err(Error::MalformedSweep(format!("line {line}: non-numeric field")));
        };
        freqs.push(v[0]);
        s21.push(match format {
            FormatTag::CsvMagPhase => Complex64::from_polar(10f64.powf(v[1] / 20.0), v[2].to_radians()),
            _ => Complex64::new(v[1], v[2]),
        });
    }
    let mut sweep = ComplexSweep::new(freqs, s21, power)?;
    metadata.insert(meta::FORMAT.to_string(), format.as_str().to_string());
    sweep.metadata = metadata;
    Ok(sweep)
}

/// Writes `sweep` as CSV. Values use the shortest representation that reads
/// back to the same `f64`.
pub fn write_csv_sweep<W: Write>(out: W, sweep: &ComplexSweep, format: FormatTag) -> Result<()> {
    let io = |e: std::io::Error| Error::io("<csv output>", e);
    let mut out = std::io::BufWriter::new(out);
    writeln!(out, "# {}={}", meta::FORMAT, format.as_str()).map_err(io)?;
    if sweep.power_dbm_at_source.is_finite() {
        writeln!(out, "# {}={}", meta::POWER_DBM, sweep.power_dbm_at_source).map_err(io)?;
    }
    for (k, v) in &sweep.metadata {
        if k != meta::FORMAT && k != meta::POWER_DBM && k != meta::SOURCE {
            writeln!(out, "# {k}={v}").map_err(io)?;
        }
    }
    let mut w = csv::Writer::from_writer(out);
    let header = match format {
        FormatTag::CsvMagPhase => ["frequency_hz", "mag_db", "phase_deg"],
        _ => ["frequency_hz", "re_s21", "im_s21"],
    };
    let csv_err = |e: csv::Error| Error::MalformedSweep(e.to_string());
    w.write_record(header).map_err(csv_err)?;
    for (f, z) in sweep.freqs.iter().zip(&sweep.s21) {
        let (a, b) = match format {
            FormatTag::CsvMagPhase => (20.0 * z.norm().log10(), z.arg().to_degrees()),
            _ => (z.re, z.im),
        };
        w.write_record([f.to_string(), a.to_string(), b.to_string()]).map_err(csv_err)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}
