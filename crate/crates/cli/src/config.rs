//! Batch configuration file.
//!
//! ```toml
//! out = "results"
//! time_limit = 7200.0      # seconds per run
//! workers = 1
//! policy = "all"           # or "most-violated"
//! methods = ["F1", "F2"]
//! write_solutions = false
//!
//! [[datasets]]
//! path = "data/ap10.txt"   # relative to the config file
//! format = "AP"
//!
//! [[datasets]]
//! path = "data/cab10.txt"
//! format = "CAB"
//! uniform_fixed_cost = 100.0
//!
//! [[datasets]]
//! tiny = { n = 4, seed = 1 }
//!
//! [grid]                   # omitted: the benchmark grid
//! alphas = [0.2, 0.5, 0.8, 1.0]
//! taus = [0.25, 0.5, 1.0, 1.5]
//! rhos = [0.01, 0.1, 1.0, 2.0]
//! gauges = ["L1", "L2", "LINF"]
//! norm_pairs = [["L1", "L2"], ["L1", "LINF"], ["L2", "LINF"]]
//! ```

use std::path::{Path, PathBuf};

use hubloc::instance::{load_raw, tiny_fixture, LoadOptions, RawFormat};
use hubloc::{CutPolicy, RawData, ScenarioGrid};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::records::Method;

/// Fixed cost applied to datasets without a cost section when the config
/// does not name one.
pub const DEFAULT_UNIFORM_FIXED_COST: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TinySpec {
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    /// Label written to the `dataset` column; defaults to the format name.
    pub name: Option<String>,
    pub path: Option<PathBuf>,
    pub format: Option<RawFormat>,
    pub uniform_fixed_cost: Option<f64>,
    pub tiny: Option<TinySpec>,
}

impl DatasetSpec {
    pub fn file(path: impl Into<PathBuf>, format: RawFormat) -> Self {
        DatasetSpec { path: Some(path.into()), format: Some(format), ..Default::default() }
    }

    pub fn tiny(n: usize, seed: u64) -> Self {
        DatasetSpec { tiny: Some(TinySpec { n, seed }), ..Default::default() }
    }

    /// Loads the dataset; relative paths resolve against `base_dir`.
    pub fn load(&self, base_dir: &Path) -> CliResult<RawData> {
        let mut raw = match (&self.tiny, &self.path) {
            (Some(t), None) => {
                if t.n < 2 {
                    return Err(CliError::Data(format!("tiny dataset needs at least 2 nodes, got {}", t.n)));
                }
                tiny_fixture(t.n, t.seed)
            }
            (None, Some(p)) => {
                let format = self
                    .format
                    .ok_or_else(|| CliError::Data(format!("dataset {} has no format", p.display())))?;
                let path = if p.is_relative() { base_dir.join(p) } else { p.clone() };
                let opts = LoadOptions {
                    uniform_fixed_cost: Some(self.uniform_fixed_cost.unwrap_or(DEFAULT_UNIFORM_FIXED_COST)),
                };
                let mut raw = load_raw(&path, format, &opts).map_err(CliError::data)?;
                raw.name = format.to_string();
                raw
            }
            _ => return Err(CliError::Data("a dataset needs exactly one of `path` or `tiny`".into())),
        };
        if let Some(name) = &self.name {
            raw.name = name.clone();
        }
        Ok(raw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub out: PathBuf,
    pub time_limit: f64,
    pub workers: usize,
    pub policy: CutPolicy,
    pub methods: Vec<Method>,
    pub write_solutions: bool,
    pub datasets: Vec<DatasetSpec>,
    pub grid: ScenarioGrid,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out: PathBuf::from("results"),
            time_limit: 7200.0,
            workers: 1,
            policy: CutPolicy::AllViolated,
            methods: Method::BOTH.to_vec(),
            write_solutions: false,
            datasets: Vec::new(),
            grid: ScenarioGrid::benchmark(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(CliError::data)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn check(&self) -> CliResult<()> {
        if self.datasets.is_empty() {
            return Err(CliError::Data("config names no datasets".into()));
        }
        if self.methods.is_empty() {
            return Err(CliError::Data("config names no methods".into()));
        }
        if !(self.time_limit > 0.0) {
            return Err(CliError::Data(format!("time limit {} is not positive", self.time_limit)));
        }
        if self.workers == 0 {
            return Err(CliError::Data("workers must be at least 1".into()));
        }
        Ok(())
    }
}
