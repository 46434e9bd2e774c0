//! Version-1 Touchstone two-port files.
//!
//! The option line `# <unit> <param> <format> R <ohms>` defaults to
//! `# GHZ S MA R 50`. Each data line holds the frequency and four pairs in
//! the order S11 S21 S12 S22. Metadata comes from `! key=value` comments.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use super::{meta, parse_meta_line, FormatTag};
use crate::error::{Error, Result};
use crate::model::ComplexSweep;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Pair {
    Ri,
    Ma,
    Db,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Options {
    freq_scale: f64,
    pair: Pair,
    r_ref: f64,
}

impl Default for Options {
    fn default() -> Self {
        Options { freq_scale: 1e9, pair: Pair::Ma, r_ref: 50.0 }
    }
}

fn parse_options(line: &str) -> Result<Options> {
    let mut o = Options::default();
    let mut toks = line.split_whitespace().map(str::to_ascii_uppercase);
    while let Some(t) = toks.next() {
        match t.as_str() {
            "HZ" => o.freq_scale = 1.0,
            "KHZ" => o.freq_scale = 1e3,
            "MHZ" => o.freq_scale = 1e6,
            "GHZ" => o.freq_scale = 1e9,
            "S" => {}
            "Y" | "Z" | "H" | "G" => return Err(Error::UnsupportedFormat(format!("{t}-parameters; only S is read"))),
            "RI" => o.pair = Pair::Ri,
            "MA" => o.pair = Pair::Ma,
            "DB" => o.pair = Pair::Db,
            "R" => {
                let r = toks.next().and_then(|r| r.parse().ok());
                o.r_ref = r.ok_or_else(|| Error::MalformedSweep("option line: R without a value".into()))?;
            }
            other => return Err(Error::UnsupportedFormat(format!("option token '{other}'"))),
        }
    }
    Ok(o)
}

pub fn parse_touchstone(path: &Path) -> Result<ComplexSweep> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_touchstone_str(&text).map_err(|e| match e {
        Error::MalformedSweep(m) => Error::MalformedSweep(format!("{}: {m}", path.display())),
        Error::UnsupportedFormat(m) => Error::UnsupportedFormat(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Parses Touchstone text. A missing `power_dbm` comment leaves the source
/// power as NaN; analysis rejects such sweeps.
pub fn parse_touchstone_str(text: &str) -> Result<ComplexSweep> {
    let mut opts: Option<Options> = None;
    let mut metadata = std::collections::BTreeMap::new();
    let mut freqs = Vec::new();
    let mut s21 = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let (data, comment) = match raw.split_once('!') {
            Some((d, c)) => (d, Some(c)),
            None => (raw, None),
        };
        if let Some((k, v)) = comment.and_then(parse_meta_line) {
            metadata.insert(k, v);
        }
        let data = data.trim();
        if data.is_empty() {
            continue;
        }
        if let Some(o) = data.strip_prefix('#') {
            // only the first option line counts
            if opts.is_none() {
                opts = Some(parse_options(o)?);
            }
            continue;
        }
        if data.starts_with('[') {
            return Err(Error::UnsupportedFormat("Touchstone version 2 keywords".into()));
        }
        let o = *opts.get_or_insert_with(Options::default);
        let v: Vec<f64> = data
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::MalformedSweep(format!("line {}: non-numeric token", i + 1)))?;
        match v.len() {
            9 => {}
            3 => return Err(Error::UnsupportedFormat("one-port data has no S21".into())),
            n => return Err(Error::MalformedSweep(format!("line {}: {n} values, expected 9 for a two-port", i + 1))),
        }
        freqs.push(v[0] * o.freq_scale);
        let (a, b) = (v[3], v[4]);
        s21.push(match o.pair {
            Pair::Ri => Complex64::new(a, b),
            Pair::Ma => Complex64::from_polar(a, b.to_radians()),
            Pair::Db => Complex64::from_polar(10f64.powf(a / 20.0), b.to_radians()),
        });
    }
    let power = match metadata.get(meta::POWER_DBM) {
        Some(p) => p.parse().map_err(|_| Error::MalformedSweep(format!("power_dbm '{p}' is not a number")))?,
        None => f64::NAN,
    };
    let mut sweep = ComplexSweep::new(freqs, s21, power)?;
    metadata.insert(meta::FORMAT.to_string(), FormatTag::TouchstoneS2p.as_str().to_string());
    if let Some(o) = opts.filter(|o| o.r_ref != 50.0) {
        metadata.insert("reference_ohms".to_string(), o.r_ref.to_string());
    }
    sweep.metadata = metadata;
    Ok(sweep)
}

/// Writes a two-port file in Hz / RI with S21 = S12 and zero reflection.
pub fn write_touchstone<W: Write>(out: W, sweep: &ComplexSweep) -> Result<()> {
    let io = |e: std::io::Error| Error::io("<touchstone output>", e);
    let mut out = std::io::BufWriter::new(out);
    if sweep.power_dbm_at_source.is_finite() {
        writeln!(out, "! {}={}", meta::POWER_DBM, sweep.power_dbm_at_source).map_err(io)?;
    }
    for (k, v) in &sweep.metadata {
        if k != meta::FORMAT && k != meta::POWER_DBM && k != meta::SOURCE {
            writeln!(out, "! {k}={v}").map_err(io)?;
        }
    }
    writeln!(out, "# HZ S RI R 50").map_err(io)?;
    for (f, z) in sweep.freqs.iter().zip(&sweep.s21) {
        writeln!(out, "{f} 0 0 {} {} {} {} 0 0", z.re, z.im, z.re, z.im).map_err(io)?;
    }
    out.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ghz_scaling() {
        let s = parse_touchstone_str("# GHZ S RI R 50\n5.5 0 0 0.3 0.4 0.3 0.4 0 0\n").unwrap();
        assert_eq!(s.freqs, vec![5.5e9]);
        assert_eq!(s.s21[0], Complex64::new(0.3, 0.4));
        assert!(s.power_dbm_at_source.is_nan());
    }

    #[test]
    fn db_angle() {
        let s = parse_touchstone_str("! power_dbm=-20\n# HZ S DB R 50\n5e9 -40 0 -6.0205999 0 -6.0205999 0 -40 0\n")
            .unwrap();
        assert!((s.s21[0] - Complex64::new(0.5, 0.0)).norm() < 1e-6);
        assert_eq!(s.power_dbm_at_source, -20.0);
    }

    #[test]
    fn default_options_are_ghz_ma() {
        let s = parse_touchstone_str("1.0 0 0 2 90 2 90 0 0\n").unwrap();
        assert_eq!(s.freqs[0], 1e9);
        assert!((s.s21[0] - Complex64::new(0.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn rejected() {
        assert!(matches!(
            parse_touchstone_str("# HZ Y RI R 50\n1 0 0 0 0 0 0 0 0\n"),
            Err(Error::UnsupportedFormat(_))
        ));
        assert!(matches!(parse_touchstone_str("# HZ S RI R 50\n1 0.5 0.1\n"), Err(Error::UnsupportedFormat(_))));
        assert!(matches!(parse_touchstone_str("# HZ S RI R 50\n1 0 0 0 0\n"), Err(Error::MalformedSweep(_))));
    }

    #[test]
    fn round_trip() {
        let s = ComplexSweep::new(
            vec![5.0e9, 5.0e9 + 1.0 / 3.0],
            vec![Complex64::new(0.1, -0.7), Complex64::new(1.0 / 7.0, 2e-9)],
            -61.0,
        )
        .unwrap()
        .with_meta("resonator_id", "R2");
        let mut buf = Vec::new();
        write_touchstone(&mut buf, &s).unwrap();
        let back = parse_touchstone_str(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.freqs, s.freqs);
        assert_eq!(back.s21, s.s21);
        assert_eq!(back.resonator_id(), Some("R2"));
        assert_eq!(back.power_dbm_at_source, -61.0);
    }
}
