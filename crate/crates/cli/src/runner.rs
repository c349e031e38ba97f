//! Batch execution of a scenario grid.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use hubloc::bnc::{solve_compact, BncOutcome};
use hubloc::instance::make_scenario;
use hubloc::{solve_bnc, BncConfig, CutPolicy, Instance, RawData, ScenarioParams};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{breakdown, write_file, SolutionFile};
use crate::records::{Method, RunRecord, RunStatus, SCHEMA_VERSION};

pub fn bnc_config(policy: CutPolicy, time_limit: f64) -> BncConfig {
    BncConfig { policy, time_limit: Duration::from_secs_f64(time_limit), ..BncConfig::default() }
}

/// Runs one method on one instance.
pub fn solve_with(inst: &Instance, method: Method, cfg: &BncConfig) -> BncOutcome {
    match method {
        Method::F1 => solve_compact(inst, cfg, false),
        Method::F2 => solve_bnc(inst, cfg),
    }
}

/// Outcome of a single run, before it is turned into a record.
pub struct RunResult {
    pub record: RunRecord,
    pub solution: Option<SolutionFile>,
}

fn blank_record(dataset: &RawData, p: &ScenarioParams, method: Method) -> RunRecord {
    RunRecord {
        schema: SCHEMA_VERSION,
        dataset: dataset.name.clone(),
        n: dataset.num_nodes(),
        alpha: p.alpha,
        norm_c: p.norm_c,
        norm_h: p.norm_h,
        gauge: p.gauge,
        tau: p.tau,
        rho: p.rho,
        method,
        time_s: 0.0,
        status: RunStatus::Error,
        objective: None,
        gap: None,
        cuts: 0,
        nodes: 0,
    }
}

/// Solves one scenario. Scenario construction errors and solver panics come
/// back as `ERROR` records.
pub fn run_one(dataset: &RawData, p: &ScenarioParams, method: Method, cfg: &BncConfig) -> RunResult {
    let mut record = blank_record(dataset, p, method);
    let start = Instant::now();
    let inst = match make_scenario(dataset, p) {
        Ok(i) => i,
        Err(e) => {
            log::error!("{} {}: {e}", dataset.name, p.label());
            return RunResult { record, solution: None };
        }
    };
    let out = catch_unwind(AssertUnwindSafe(|| solve_with(&inst, method, cfg)));
    record.time_s = start.elapsed().as_secs_f64();
    let out = match out {
        Ok(o) => o,
        Err(_) => {
            log::error!("{} {} {method}: solver panicked", dataset.name, p.label());
            return RunResult { record, solution: None };
        }
    };
    let s = &out.stats;
    record.status = s.status.into();
    record.cuts = s.cuts_added;
    record.nodes = s.nodes_explored;
    record.gap = s.gap.is_finite().then_some(s.gap);
    let solution = out.solution.and_then(|sol| {
        let costs = match breakdown(&inst, &sol) {
            Ok(c) => c,
            Err(e) => {
                log::error!("{} {} {method}: {e}", dataset.name, p.label());
                record.status = RunStatus::Error;
                return None;
            }
        };
        record.objective = Some(sol.objective);
        Some(SolutionFile {
            instance: inst.name().to_string(),
            method,
            status: record.status,
            time_s: record.time_s,
            gap: record.gap,
            cuts: record.cuts,
            nodes: record.nodes,
            objective: sol.objective,
            hubs: sol.hubs(),
            costs,
            solution: sol,
        })
    });
    RunResult { record, solution }
}

/// File name of the solution of one run.
pub fn solution_name(r: &RunRecord) -> String {
    let method = match r.method {
        Method::F1 => "f1",
        Method::F2 => "f2",
    };
    format!(
        "{}{}-a{}-{}-{}-g{}-t{}-r{}-{method}.toml",
        r.dataset, r.n, r.alpha, r.norm_c, r.norm_h, r.gauge, r.tau, r.rho
    )
}

/// Runs every (dataset, scenario, method) of the config. Records are appended
/// to `<out>/runs.csv` as runs finish and returned in job order.
pub fn run_batch(cfg: &RunConfig, base_dir: &Path) -> CliResult<Vec<RunRecord>> {
    let datasets: Vec<RawData> = cfg.datasets.iter().map(|d| d.load(base_dir)).collect::<CliResult<_>>()?;
    let scenarios = cfg.grid.scenarios();
    let mut jobs = Vec::new();
    for (d, _) in datasets.iter().enumerate() {
        for p in &scenarios {
            for &m in &cfg.methods {
                jobs.push((d, *p, m));
            }
        }
    }
    std::fs::create_dir_all(&cfg.out)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", cfg.out.display())))?;
    let csv_path = cfg.out.join("runs.csv");
    let file = std::fs::File::create(&csv_path)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", csv_path.display())))?;
    let sink = Mutex::new(crate::records::writer(file));
    let bnc = bnc_config(cfg.policy, cfg.time_limit);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    log::info!("{} runs on {} worker(s)", jobs.len(), cfg.workers);

    let results: Vec<CliResult<RunRecord>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(d, p, m)| {
                let res = run_one(&datasets[d], &p, m, &bnc);
                let rec = res.record;
                log::info!("{} {} {m}: {} in {:.2}s", rec.dataset, p.label(), rec.status, rec.time_s);
                if cfg.write_solutions {
                    if let Some(sol) = res.solution {
                        write_file(&cfg.out.join("solutions").join(solution_name(&rec)), &sol.to_toml())?;
                    }
                }
                let mut w = sink.lock().expect("csv writer poisoned");
                w.serialize(&rec).map_err(CliError::data)?;
                w.flush().map_err(CliError::data)?;
                Ok(rec)
            })
            .collect()
    });
    results.into_iter().collect()
}
