//! Solution files and flat geometry dumps.

use std::fmt::Write as _;
use std::path::Path;

use hubloc::{evaluate_solution, CostBreakdown, HubSolution, Instance, NormKind};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::records::{Method, RunStatus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub instance: String,
    pub method: Method,
    pub status: RunStatus,
    pub time_s: f64,
    pub gap: Option<f64>,
    pub cuts: usize,
    pub nodes: usize,
    pub objective: f64,
    pub hubs: Vec<usize>,
    pub costs: CostBreakdown,
    pub solution: HubSolution,
}

impl SolutionFile {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("solution serializes")
    }

    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(CliError::data)
    }
}

/// Cost breakdown of `sol`, evaluated directly on the instance.
pub fn breakdown(inst: &Instance, sol: &HubSolution) -> CliResult<CostBreakdown> {
    evaluate_solution(inst, sol, 1e-6).map_err(|e| CliError::Solver(format!("returned solution is invalid: {e}")))
}

fn shape(g: NormKind) -> &'static str {
    match g {
        NormKind::L1 => "diamond",
        NormKind::L2 => "disk",
        NormKind::LInf => "square",
    }
}

/// Header of the geometry dump.
pub const GEOMETRY_COLUMNS: &str = "kind,id,x,y,x2,y2,radius,shape";

/// Flat CSV for plotting: `node` dots, `hub` markers, one `neighborhood` per
/// open hub (dilated by `r_k`), `allocation` segments from each node to its
/// hub and `hub_arc` segments between open hubs. Planar instances only.
pub fn geometry_csv(inst: &Instance, sol: &HubSolution) -> CliResult<String> {
    if inst.dim() != 2 {
        return Err(CliError::Data(format!("geometry dump needs planar coordinates, got dimension {}", inst.dim())));
    }
    let mut s = format!("{GEOMETRY_COLUMNS}\n");
    let xy = |p: &hubloc::Point| (p.0[0], p.0[1]);
    for i in 0..inst.num_nodes() {
        let (x, y) = xy(inst.node(i));
        writeln!(s, "node,{i},{x},{y},,,,").unwrap();
    }
    let hubs = sol.hubs();
    for &k in &hubs {
        let (x, y) = xy(&sol.position[k]);
        writeln!(s, "hub,{k},{x},{y},,,,").unwrap();
    }
    for &k in &hubs {
        let nb = inst.neighborhood(k);
        let (x, y) = xy(&nb.center);
        writeln!(s, "neighborhood,{k},{x},{y},,,{},{}", sol.radius[k], shape(nb.gauge)).unwrap();
    }
    for i in 0..inst.num_nodes() {
        let k = sol.assign[i];
        if k == i {
            continue;
        }
        let ((x, y), (x2, y2)) = (xy(inst.node(i)), xy(&sol.position[k]));
        writeln!(s, "allocation,{i},{x},{y},{x2},{y2},,").unwrap();
    }
    for (a, &k) in hubs.iter().enumerate() {
        for &m in &hubs[a + 1..] {
            let ((x, y), (x2, y2)) = (xy(&sol.position[k]), xy(&sol.position[m]));
            writeln!(s, "hub_arc,{k}-{m},{x},{y},{x2},{y2},,").unwrap();
        }
    }
    Ok(s)
}

pub fn write_file(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}
