//! TOML run configuration.
//!
//! ```toml
//! data_globs = ["data/*.csv"]
//! cohort_label = "chip A"
//! seed = 1
//! output_dir = "out"
//!
//! [fit_gates]
//! max_rel_sigma_qi = 0.5
//!
//! [budget]
//! used_db = 69          # optional, defaults to the rounded total
//! [[budget.items]]
//! label = "Direct Attenuators"
//! loss_db = 62.0
//! note = "sum of discrete cryogenic attenuators"
//! ```
//!
//! Relative paths resolve against the directory holding the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::FitGates;
use crate::power::{AttenuationBudget, BudgetItem};

/// Overrides `output_dir` when set.
pub const OUTPUT_DIR_ENV: &str = "RESQ_OUTPUT_DIR";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BudgetSection {
    items: Vec<BudgetItem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    used_db: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    data_globs: Vec<String>,
    #[serde(default)]
    cohort_label: String,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_output_dir")]
    output_dir: PathBuf,
    #[serde(default)]
    fit_gates: FitGates,
    budget: BudgetSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("resq-out")
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data_globs: Vec<String>,
    pub budget: AttenuationBudget,
    pub cohort_label: String,
    pub fit_gates: FitGates,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Directory relative globs and paths resolve against.
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn new(data_globs: Vec<String>, budget: AttenuationBudget, output_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            data_globs,
            budget,
            cohort_label: String::new(),
            fit_gates: FitGates::default(),
            seed: 0,
            output_dir: output_dir.into(),
            base_dir: PathBuf::from("."),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, &base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut budget = AttenuationBudget::new(raw.budget.items).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(u) = raw.budget.used_db {
            budget = budget.with_used_db(u)?;
        }
        let g = raw.fit_gates;
        if !(g.max_rel_sigma_qi > 0.0) || g.min_series_points < 1 || !(g.min_series_span_db >= 0.0) {
            return Err(Error::Config(format!("invalid fit_gates {g:?}")));
        }
        Ok(RunConfig {
            data_globs: raw.data_globs,
            budget,
            cohort_label: raw.cohort_label,
            fit_gates: g,
            seed: raw.seed,
            output_dir: raw.output_dir,
            base_dir: if base_dir.as_os_str().is_empty() { PathBuf::from(".") } else { base_dir.to_path_buf() },
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        let raw = ConfigFile {
            data_globs: self.data_globs.clone(),
            cohort_label: self.cohort_label.clone(),
            seed: self.seed,
            output_dir: self.output_dir.clone(),
            fit_gates: self.fit_gates,
            budget: BudgetSection {
                items: self.budget.items.clone(),
                used_db: self.budget.used_overridden.then_some(self.budget.used_db),
            },
        };
        toml::to_string(&raw).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies [`OUTPUT_DIR_ENV`] if it is set and non-empty.
    pub fn with_env_overrides(mut self) -> Self {
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV).filter(|d| !d.is_empty()) {
            self.output_dir = PathBuf::from(dir);
        }
        self
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn resolved_output_dir(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    /// Files matched by the globs, sorted and without duplicates.
    pub fn input_files(&self) -> Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        for g in &self.data_globs {
            let pattern = self.resolve(Path::new(g));
            let pattern = pattern.to_string_lossy();
            let paths = glob::glob(&pattern).map_err(|e| Error::Config(format!("glob '{g}': {e}")))?;
            for p in paths {
                let p = p.map_err(|e| {
                    let path = e.path().to_owned();
                    Error::io(path, e.into())
                })?;
                if p.is_file() {
                    out.push(p);
                }
            }
        }
        out.sort();
        out.dedup();
        Ok(out)
    }

    /// Creates the output directory and checks it can be written to.
    pub fn prepare_output_dir(&self) -> Result<PathBuf> {
        let dir = self.resolved_output_dir();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let probe = dir.join(".resq-write-test");
        std::fs::write(&probe, b"").map_err(|e| Error::io(&probe, e))?;
        std::fs::remove_file(&probe).map_err(|e| Error::io(&probe, e))?;
        Ok(dir)
    }
}
