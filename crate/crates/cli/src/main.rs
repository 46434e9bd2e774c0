//! `resq` command-line front end.
//!
//! Exit codes: 0 on success, 1 when a run completed but some resonators
//! failed, 2 when the run could not start or the arguments are invalid.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use resq::design::{
    coupled_quarterwave_freq, external_q, line_parameters, quarterwave_length, uncoupled_quarterwave_freq,
    CouplingDesign, CpwGeometry, EPS_R_SILICON,
};
use resq::io::report::{read_summary_csv, write_json};
use resq::io::{svg, FormatTag, RunConfig};
use resq::pipeline::run_pipeline;
use resq::synth::{write_chip, ChipFormat, ChipSpec};
use resq::tls::{compare_cohorts, CohortSummary};
use resq::units::angular;

#[derive(Parser, Debug)]
#[command(name = "resq", version, about = "Superconducting CPW resonator analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit every sweep matched by a run configuration and write reports.
    Analyze {
        /// Run configuration (TOML).
        #[arg(long)]
        config: PathBuf,
    },
    /// Quarter-wave CPW design: line parameters, frequencies, external Q.
    Design(DesignArgs),
    /// Write a synthetic chip with known TLS parameters.
    Synth(SynthArgs),
    /// Compare Q_TLS across cohorts of devices.
    Compare(CompareArgs),
}

#[derive(Args, Debug)]
struct DesignArgs {
    /// Center conductor width, m.
    #[arg(long, allow_negative_numbers = true)]
    s: f64,
    /// Gap to ground, m.
    #[arg(long, allow_negative_numbers = true)]
    g: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = EPS_R_SILICON)]
    eps_r: f64,
    /// Resonator length, m.
    #[arg(long, allow_negative_numbers = true, conflicts_with = "target_f")]
    length: Option<f64>,
    /// Target uncoupled frequency, Hz; the length is solved for.
    #[arg(long, allow_negative_numbers = true)]
    target_f: Option<f64>,
    /// Coupling capacitance, F.
    #[arg(long, allow_negative_numbers = true)]
    ck: Option<f64>,
    /// Load resistance, Ω.
    #[arg(long, allow_negative_numbers = true, default_value_t = 50.0)]
    rload: f64,
    /// Mode index (1 = fundamental).
    #[arg(long, default_value_t = 1)]
    mode: u32,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SynthFormat {
    CsvRi,
    CsvMagphase,
    TouchstoneS2p,
    Mixed,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Directory to create the chip in.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Per-quadrature noise standard deviation.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    resonators: Option<usize>,
    #[arg(long, value_enum, default_value_t = SynthFormat::CsvRi)]
    format: SynthFormat,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// `label=path/to/summary.csv`; uses the q_tls column.
    #[arg(long = "cohort", value_name = "LABEL=CSV")]
    cohorts: Vec<String>,
    /// `label=v1,v2,...` with Q_TLS values given directly.
    #[arg(long = "values", value_name = "LABEL=V1,V2")]
    values: Vec<String>,
    /// Write `cohort_comparison.json` and `cohort_qtls.svg` here.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Error that maps to exit code 2.
#[derive(Debug)]
struct Usage(anyhow::Error);

type CmdResult = Result<u8, Usage>;

fn usage<E: Into<anyhow::Error>>(e: E) -> Usage {
    Usage(e.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze { config } => analyze(&config),
        Command::Design(a) => design(&a),
        Command::Synth(a) => synth(&a),
        Command::Compare(a) => compare(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn analyze(config: &Path) -> CmdResult {
    let cfg = RunConfig::load(config).map_err(usage)?.with_env_overrides();
    let outcome = run_pipeline(&cfg).map_err(usage)?;
    let errors: Vec<_> = outcome.errors().collect();
    let n_ok = outcome.resonators.iter().filter(|r| r.ok()).count();
    println!(
        "{} files, {} resonators, {} complete -> {}",
        outcome.n_files,
        outcome.resonators.len(),
        n_ok,
        outcome.output_dir.display()
    );
    if !errors.is_empty() {
        let w_id = errors.iter().map(|e| e.resonator_id.len()).max().unwrap_or(0).max(9);
        let w_file = errors.iter().map(|e| e.file.len()).max().unwrap_or(0).max(4);
        eprintln!("{:<w_id$}  {:<w_file$}  error", "resonator", "file");
        for e in &errors {
            eprintln!("{:<w_id$}  {:<w_file$}  {}", e.resonator_id, e.file, e.message);
        }
    }
    Ok(outcome.exit_code() as u8)
}

fn design(a: &DesignArgs) -> CmdResult {
    // length is not needed for the line parameters; any positive value will do
    let geom = CpwGeometry::new(a.s, a.g, a.eps_r, a.length.unwrap_or(1.0)).map_err(usage)?;
    let line = line_parameters(&geom).map_err(usage)?;
    println!("z0          {:.3} ohm", line.z0);
    println!("eps_eff     {:.4}", line.eps_eff);
    println!("L_l         {:.6e} H/m", line.l_per_len);
    println!("C_l         {:.6e} F/m", line.c_per_len);

    let length = match (a.length, a.target_f) {
        (Some(l), _) => Some(l),
        (None, Some(f)) => {
            let l = quarterwave_length(&line, f, a.mode).map_err(usage)?;
            println!("length      {:.4} mm  (mode {} at {:e} Hz)", l * 1e3, a.mode, f);
            Some(l)
        }
        (None, None) => None,
    };
    let Some(length) = length else {
        return Ok(0);
    };
    let f_unc = uncoupled_quarterwave_freq(&line, length, a.mode).map_err(usage)?;
    println!("f_uncoupled {:.6e} Hz", f_unc);

    let Some(ck) = a.ck else {
        return Ok(0);
    };
    let coupling = CouplingDesign::new(&line, length, ck, a.rload, a.mode).map_err(usage)?;
    let f_cpl = coupled_quarterwave_freq(&line, length, &coupling).map_err(usage)?;
    println!("f_coupled   {:.6e} Hz", f_cpl);
    let qe = external_q(&coupling, angular(f_unc)).map_err(usage)?;
    println!("Qe_exact    {:.6e}", qe.exact);
    println!("Qe_approx   {:.6e}", qe.approx);
    println!("w2Ck2RL2    {:.3e}", qe.loading);
    Ok(0)
}

fn synth(a: &SynthArgs) -> CmdResult {
    let mut spec = ChipSpec { seed: a.seed, ..ChipSpec::default() };
    if let Some(n) = a.noise {
        spec.noise_sigma = n;
    }
    if let Some(n) = a.resonators {
        spec.n_resonators = n;
    }
    let format = match a.format {
        SynthFormat::CsvRi => ChipFormat::Single(FormatTag::CsvRi),
        SynthFormat::CsvMagphase => ChipFormat::Single(FormatTag::CsvMagPhase),
        SynthFormat::TouchstoneS2p => ChipFormat::Single(FormatTag::TouchstoneS2p),
        SynthFormat::Mixed => ChipFormat::MixedCsv,
    };
    let config = write_chip(&a.out, &spec, format).map_err(usage)?;
    println!("wrote {}", config.display());
    Ok(0)
}

fn split_label(arg: &str) -> anyhow::Result<(&str, &str)> {
    match arg.split_once('=') {
        Some((l, v)) if !l.is_empty() && !v.is_empty() => Ok((l, v)),
        _ => bail!("expected LABEL=VALUE, got '{arg}'"),
    }
}

fn parse_cohorts(a: &CompareArgs) -> anyhow::Result<Vec<CohortSummary>> {
    let mut out = Vec::new();
    for arg in &a.cohorts {
        let (label, path) = split_label(arg)?;
        let rows = read_summary_csv(Path::new(path)).with_context(|| format!("cohort '{label}'"))?;
        out.push(CohortSummary::new(label, rows.iter().map(|r| r.q_tls).collect())?);
    }
    for arg in &a.values {
        let (label, list) = split_label(arg)?;
        let values = list
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| anyhow!("cohort '{label}': bad value '{v}'")))
            .collect::<anyhow::Result<Vec<_>>>()?;
        out.push(CohortSummary::new(label, values)?);
    }
    Ok(out)
}

fn compare(a: &CompareArgs) -> CmdResult {
    let cohorts = parse_cohorts(a).map_err(usage)?;
    let cmp = compare_cohorts(&cohorts).map_err(usage)?;
    println!("{:<12} {:>4} {:>14} {:>14} {:>14}", "cohort", "n", "mean_q_tls", "min", "max");
    for c in &cmp.ordered {
        println!(
            "{:<12} {:>4} {:>14.4e} {:>14.4e} {:>14.4e}",
            c.cohort_label,
            c.q_tls_values.len(),
            c.mean_q_tls,
            c.min_q_tls,
            c.max_q_tls
        );
    }
    for r in &cmp.ratios {
        println!("{}/{} = {:.3}", r.numerator, r.denominator, r.ratio);
    }
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).map_err(usage)?;
        write_json(&dir.join("cohort_comparison.json"), &cmp).map_err(usage)?;
        let figure = svg::cohort_strip("Q_TLS by cohort", &cmp.ordered);
        let path = dir.join("cohort_qtls.svg");
        std::fs::write(&path, figure).with_context(|| format!("writing {}", path.display())).map_err(usage)?;
    }
    Ok(0)
}
