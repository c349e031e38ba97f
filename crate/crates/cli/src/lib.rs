//! Benchmark driver: dataset conversion, single solves with solution and
//! geometry files, batch runs over scenario grids and table aggregation.

pub mod aggregate;
pub mod config;
pub mod error;
pub mod output;
pub mod records;
pub mod runner;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use hubloc::instance::{load_raw, make_scenario, LoadOptions, RawFormat};
use hubloc::oracle::OracleOptions;
use hubloc::{brute_force, CutPolicy, Instance, NormKind, ScenarioParams};

pub use config::{DatasetSpec, RunConfig};
pub use error::{CliError, CliResult};
pub use records::{read_records, Method, RunRecord, RunStatus};

use crate::config::DEFAULT_UNIFORM_FIXED_COST;
use crate::output::{geometry_csv, write_file};

#[derive(Debug, Parser)]
#[command(name = "hubloc", version, about = "Hub location with variable-size neighborhoods")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn a raw AP/CAB file into a canonical scenario file.
    Convert(ConvertArgs),
    /// Solve one scenario file; writes a solution file and a geometry dump.
    Solve(SolveArgs),
    /// Run a batch described by a TOML config.
    Run(RunArgs),
    /// Rebuild the table CSVs from a results file.
    Aggregate(AggregateArgs),
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 0.1)]
    pub rho: f64,
    #[arg(long, default_value = "L2", value_parser = parse_norm)]
    pub gauge: NormKind,
    #[arg(long = "norm-c", default_value = "L2", value_parser = parse_norm)]
    pub norm_c: NormKind,
    #[arg(long = "norm-h", default_value = "L2", value_parser = parse_norm)]
    pub norm_h: NormKind,
}

impl ScenarioArgs {
    pub fn params(&self) -> ScenarioParams {
        ScenarioParams {
            tau: self.tau,
            rho: self.rho,
            alpha: self.alpha,
            gauge: self.gauge,
            norm_c: self.norm_c,
            norm_h: self.norm_h,
        }
    }
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    pub input: PathBuf,
    #[arg(long, value_parser = parse_format)]
    pub format: RawFormat,
    pub output: PathBuf,
    /// Fixed cost for files without a cost section.
    #[arg(long, default_value_t = DEFAULT_UNIFORM_FIXED_COST)]
    pub uniform_fixed_cost: f64,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub instance: PathBuf,
    #[arg(long, default_value = "f2", value_parser = parse_method)]
    pub method: Method,
    #[arg(long, default_value = "all", value_parser = parse_policy)]
    pub policy: CutPolicy,
    #[arg(long = "time-limit", default_value_t = 7200.0)]
    pub time_limit: f64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Seed of the oracle local-search starts (with `--verify`).
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Re-solve by enumeration (at most 7 nodes) and compare objectives.
    #[arg(long)]
    pub verify: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub config: PathBuf,
    /// Restrict the batch to one method.
    #[arg(long, value_parser = parse_method)]
    pub method: Option<Method>,
    #[arg(long, value_parser = parse_policy)]
    pub policy: Option<CutPolicy>,
    #[arg(long = "time-limit")]
    pub time_limit: Option<f64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    pub results: PathBuf,
    /// Output directory; defaults to the directory of the results file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_norm(s: &str) -> Result<NormKind, String> {
    match s.to_ascii_uppercase().as_str() {
        "L1" => Ok(NormKind::L1),
        "L2" => Ok(NormKind::L2),
        "LINF" => Ok(NormKind::LInf),
        other => Err(format!("unknown norm '{other}' (expected L1, L2 or LINF)")),
    }
}

fn parse_format(s: &str) -> Result<RawFormat, String> {
    s.parse()
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
}

fn parse_policy(s: &str) -> Result<CutPolicy, String> {
    s.parse()
}

pub fn cmd_convert(a: &ConvertArgs) -> CliResult<Instance> {
    let opts = LoadOptions { uniform_fixed_cost: Some(a.uniform_fixed_cost) };
    let raw = load_raw(&a.input, a.format, &opts).map_err(CliError::data)?;
    let inst = make_scenario(&raw, &a.scenario.params()).map_err(CliError::data)?;
    write_file(&a.output, &inst.to_toml())?;
    Ok(inst)
}

fn method_slug(m: Method) -> &'static str {
    match m {
        Method::F1 => "f1",
        Method::F2 => "f2",
    }
}

/// Solves one scenario file. Files are written whenever a solution exists;
/// any status other than `OPTIMAL` is reported as a solver failure.
pub fn cmd_solve(a: &SolveArgs) -> CliResult<output::SolutionFile> {
    let inst = Instance::load(&a.instance).map_err(CliError::data)?;
    let violations = inst.validate();
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(CliError::Data(list.join("; ")));
    }
    if !(a.time_limit > 0.0) {
        return Err(CliError::Usage(format!("time limit {} is not positive", a.time_limit)));
    }
    let cfg = runner::bnc_config(a.policy, a.time_limit);
    let start = std::time::Instant::now();
    let out = runner::solve_with(&inst, a.method, &cfg);
    let elapsed = start.elapsed().as_secs_f64();
    let status: RunStatus = out.stats.status.into();
    let sol = out
        .solution
        .ok_or_else(|| CliError::Solver(format!("{status} without a feasible solution")))?;
    let file = output::SolutionFile {
        instance: inst.name().to_string(),
        method: a.method,
        status,
        time_s: elapsed,
        gap: out.stats.gap.is_finite().then_some(out.stats.gap),
        cuts: out.stats.cuts_added,
        nodes: out.stats.nodes_explored,
        objective: sol.objective,
        hubs: sol.hubs(),
        costs: output::breakdown(&inst, &sol)?,
        solution: sol,
    };
    let stem = a.instance.file_stem().map_or_else(|| "instance".into(), |s| s.to_string_lossy().into_owned());
    let slug = method_slug(a.method);
    write_file(&a.out.join(format!("{stem}-{slug}.toml")), &file.to_toml())?;
    match geometry_csv(&inst, &file.solution) {
        Ok(g) => write_file(&a.out.join(format!("{stem}-{slug}-geometry.csv")), &g)?,
        Err(e) => log::warn!("{e}"),
    }
    if a.verify {
        let opts = OracleOptions { seed: a.seed, ..OracleOptions::default() };
        let oracle = brute_force(&inst, &opts).map_err(CliError::data)?.solution.objective;
        let rel = (oracle - file.objective).abs() / oracle.abs().max(1.0);
        if rel > 1e-4 {
            return Err(CliError::Solver(format!("objective {} differs from enumeration {oracle}", file.objective)));
        }
    }
    if status != RunStatus::Optimal {
        return Err(CliError::Solver(format!("stopped with {status}, best objective {}", file.objective)));
    }
    Ok(file)
}

pub fn cmd_run(a: &RunArgs) -> CliResult<Vec<RunRecord>> {
    let mut cfg = RunConfig::load(&a.config)?;
    let base_dir = a.config.parent().map(Path::to_path_buf).unwrap_or_default();
    if let Some(m) = a.method {
        cfg.methods = vec![m];
    }
    if let Some(p) = a.policy {
        cfg.policy = p;
    }
    if let Some(t) = a.time_limit {
        cfg.time_limit = t;
    }
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    match &a.out {
        Some(o) => cfg.out = o.clone(),
        None if cfg.out.is_relative() => cfg.out = base_dir.join(&cfg.out),
        None => {}
    }
    cfg.check().map_err(|e| CliError::Usage(e.to_string()))?;
    let records = runner::run_batch(&cfg, &base_dir)?;
    aggregate::write_tables(&records, &cfg.out)?;
    Ok(records)
}

pub fn cmd_aggregate(a: &AggregateArgs) -> CliResult<Vec<RunRecord>> {
    let file = std::fs::File::open(&a.results)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", a.results.display())))?;
    let records = read_records(file)?;
    let dir = a.out.clone().unwrap_or_else(|| a.results.parent().map(Path::to_path_buf).unwrap_or_default());
    aggregate::write_tables(&records, &dir)?;
    Ok(records)
}

/// Parses `args` (program name first) and executes; returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Convert(a) => cmd_convert(a).map(|inst| {
            println!("wrote {} ({} nodes)", a.output.display(), inst.num_nodes());
        }),
        Command::Solve(a) => cmd_solve(a).map(|f| {
            println!("{} {}: objective {} hubs {:?}", f.instance, f.method, f.objective, f.hubs);
        }),
        Command::Run(a) => cmd_run(a).map(|recs| {
            let errors = recs.iter().filter(|r| r.status == RunStatus::Error).count();
            let solved = recs.iter().filter(|r| r.status.solved()).count();
            println!("{} runs, {solved} optimal, {errors} errors", recs.len());
        }),
        Command::Aggregate(a) => cmd_aggregate(a).map(|recs| println!("aggregated {} records", recs.len())),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("hubloc: {e}");
            e.exit_code()
        }
    }
}
