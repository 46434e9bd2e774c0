//! Sweep file formats, run configuration, reports and plots.

pub mod config;
pub mod report;
pub mod svg;
pub mod sweep_csv;
pub mod touchstone;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ComplexSweep;

pub use config::RunConfig;
pub use sweep_csv::{parse_csv_str, parse_csv_sweep, write_csv_sweep};
pub use touchstone::{parse_touchstone, parse_touchstone_str, write_touchstone};

/// Metadata keys understood in sweep files.
pub mod meta {
    pub const RESONATOR_ID: &str = "resonator_id";
    pub const POWER_DBM: &str = "power_dbm";
    pub const TEMPERATURE_MK: &str = "temperature_mk";
    pub const FORMAT: &str = "format";
    pub const SOURCE: &str = "source_file";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FormatTag {
    #[serde(rename = "csv-ri")]
    CsvRi,
    #[serde(rename = "csv-magphase")]
    CsvMagPhase,
    #[serde(rename = "touchstone-s2p")]
    TouchstoneS2p,
}

impl FormatTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            FormatTag::CsvRi => "csv-ri",
            FormatTag::CsvMagPhase => "csv-magphase",
            FormatTag::TouchstoneS2p => "touchstone-s2p",
        }
    }

    pub fn extension(&self) -> &'static str {
        match self {
            FormatTag::CsvRi | FormatTag::CsvMagPhase => "csv",
            FormatTag::TouchstoneS2p => "s2p",
        }
    }
}

impl fmt::Display for FormatTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FormatTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv-ri" => Ok(FormatTag::CsvRi),
            "csv-magphase" => Ok(FormatTag::CsvMagPhase),
            "touchstone-s2p" | "s2p" => Ok(FormatTag::TouchstoneS2p),
            other => Err(Error::UnsupportedFormat(format!("unknown format tag '{other}'"))),
        }
    }
}

/// The identifying metadata of a parsed sweep file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepFileHeader {
    pub resonator_id: String,
    pub power_dbm: f64,
    pub temperature_mk: Option<f64>,
    pub format_tag: FormatTag,
}

impl SweepFileHeader {
    /// Header of a sweep headed for analysis: resonator id and source power
    /// must be present.
    pub fn of(sweep: &ComplexSweep) -> Result<Self> {
        let resonator_id = sweep
            .resonator_id()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::MetadataMissing("resonator_id".into()))?
            .to_string();
        if !sweep.power_dbm_at_source.is_finite() {
            return Err(Error::MetadataMissing("power_dbm".into()));
        }
        let format_tag = sweep.metadata.get(meta::FORMAT).map(|s| s.parse()).transpose()?.unwrap_or(FormatTag::CsvRi);
        let temperature_mk = sweep.metadata.get(meta::TEMPERATURE_MK).and_then(|t| t.parse().ok());
        Ok(SweepFileHeader { resonator_id, power_dbm: sweep.power_dbm_at_source, temperature_mk, format_tag })
    }
}

/// Parses a sweep file, choosing the reader by extension.
pub fn load_sweep(path: &Path) -> Result<ComplexSweep> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).unwrap_or_default();
    let mut sweep = match ext.as_str() {
        "csv" => parse_csv_sweep(path)?,
        "s2p" => parse_touchstone(path)?,
        "s1p" => return Err(Error::UnsupportedFormat(format!("{}: one-port Touchstone has no S21", path.display()))),
        _ => return Err(Error::UnsupportedFormat(format!("{}: unknown extension '{ext}'", path.display()))),
    };
    sweep.metadata.insert(meta::SOURCE.to_string(), path.display().to_string());
    Ok(sweep)
}

/// Writes `sweep` in `format`.
pub fn write_sweep(path: &Path, sweep: &ComplexSweep, format: FormatTag) -> Result<()> {
    let mut out = Vec::new();
    match format {
        FormatTag::CsvRi | FormatTag::CsvMagPhase => write_csv_sweep(&mut out, sweep, format)?,
        FormatTag::TouchstoneS2p => write_touchstone(&mut out, sweep)?,
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// The resonator id a file declares, found by scanning its comment lines
/// without parsing the body, so unreadable files can still be attributed.
pub fn sniff_resonator_id(path: &Path) -> Option<String> {
    let text = std::fs::read(path).ok()?;
    let text = String::from_utf8_lossy(&text);
    text.lines()
        .filter_map(|l| l.trim().strip_prefix(['#', '!']))
        .filter_map(|l| l.split_once('='))
        .find(|(k, _)| k.trim() == meta::RESONATOR_ID)
        .map(|(_, v)| v.trim().to_string())
        .filter(|v| !v.is_empty())
}

/// `key=value` from a comment body, if it is one.
pub(crate) fn parse_meta_line(body: &str) -> Option<(String, String)> {
    let (k, v) = body.split_once('=')?;
    let k = k.trim();
    if k.is_empty() || k.contains(char::is_whitespace) {
        return None;
    }
    Some((k.to_string(), v.trim().to_string()))
}
