//! Branch-and-cut over the master model, with inter-hub cost cuts separated
//! by inspection at integer points, and the same tree engine run on the
//! compact model without separation.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::conic::{Fixings, SolveStatus, SolverHandle, Tolerances, VarId, VarTag};
use crate::formulations::{build_f1, build_f1_split_nu, build_f2_master, Formulation, FormulationKind, FormulationOptions};
use crate::geometry::{distance, Point};
use crate::instance::Instance;
use crate::solution::{evaluate_solution, HubSolution};

/// A hub arc `(k, m)` and a set `S` of OD pairs routed through it, with the
/// flow aggregates of the corresponding cut row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutRecord {
    pub k: usize,
    pub m: usize,
    /// Sorted OD pairs of `S`.
    pub pairs: Vec<(usize, usize)>,
    /// `O_i(S)` for each origin of `S`, sorted by `i`.
    pub origin_weights: Vec<(usize, f64)>,
    /// `D_j(S)` for each destination of `S`, sorted by `j`.
    pub dest_weights: Vec<(usize, f64)>,
    /// `w(S)`.
    pub total: f64,
}

impl CutRecord {
    /// Aggregates `S`; `None` when `S` is empty or some pair is not routable
    /// through `(k, m)`.
    pub fn from_pairs(inst: &Instance, k: usize, m: usize, mut pairs: Vec<(usize, usize)>) -> Option<Self> {
        pairs.sort_unstable();
        pairs.dedup();
        if pairs.is_empty() || k == m || !inst.admissible(k, m) {
            return None;
        }
        let mut o: BTreeMap<usize, f64> = BTreeMap::new();
        let mut d: BTreeMap<usize, f64> = BTreeMap::new();
        let mut total = 0.0;
        for &(i, j) in &pairs {
            if !inst.admissible(i, k) || !inst.admissible(j, m) {
                return None;
            }
            let w = inst.flow(i, j);
            *o.entry(i).or_default() += w;
            *d.entry(j).or_default() += w;
            total += w;
        }
        Some(CutRecord {
            k,
            m,
            pairs,
            origin_weights: o.into_iter().collect(),
            dest_weights: d.into_iter().collect(),
            total,
        })
    }

    /// Deduplication key.
    pub fn key(&self) -> (usize, usize, Vec<(usize, usize)>) {
        (self.k, self.m, self.pairs.clone())
    }

    /// `dbar * w(S) - mubar`.
    pub fn violation(&self, mubar: f64, dbar: f64) -> f64 {
        dbar * self.total - mubar
    }
}

/// Integer point of a node: allocations, hub positions and arc costs `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodePoint {
    pub assign: Vec<usize>,
    pub position: Vec<Point>,
    pub mu: BTreeMap<(usize, usize), f64>,
}

impl NodePoint {
    /// Reads the point from a master-model primal vector.
    pub fn from_primal(form: &Formulation, inst: &Instance, x: &[f64]) -> Self {
        let sol = form.extract(inst, x);
        let n = inst.num_nodes();
        let mut mu = BTreeMap::new();
        for k in 0..n {
            for m in 0..n {
                if let Some(v) = form.mu(k, m) {
                    mu.insert((k, m), x[v.index()]);
                }
            }
        }
        NodePoint { assign: sol.assign, position: sol.position, mu }
    }

    /// Point of a finished solution with `mu` priced exactly.
    pub fn priced(inst: &Instance, sol: &HubSolution) -> Self {
        let n = inst.num_nodes();
        let mut mu = BTreeMap::new();
        for i in 0..n {
            for j in 0..n {
                let (k, m) = (sol.assign[i], sol.assign[j]);
                if k != m {
                    let d = inst.alpha() * distance(inst.norm_h(), &sol.position[k], &sol.position[m]);
                    *mu.entry((k, m)).or_insert(0.0) += inst.flow(i, j) * d;
                }
            }
        }
        NodePoint { assign: sol.assign.clone(), position: sol.position.clone(), mu }
    }

    fn dbar(&self, inst: &Instance, k: usize, m: usize) -> f64 {
        inst.alpha() * distance(inst.norm_h(), &self.position[k], &self.position[m])
    }
}

/// Violation tolerance for a cut at `mubar`.
pub fn violation_tol(mubar: f64) -> f64 {
    1e-6 * (1.0 + mubar.abs())
}

/// Separation by inspection on arc `(k, m)`: `S` collects every pair with
/// `z_ik = z_jm = 1` and positive flow; the cut is returned iff
/// `mubar < dbar * w(S)` beyond the violation tolerance.
pub fn separate(inst: &Instance, k: usize, m: usize, assign: &[usize], mubar: f64, dbar: f64) -> Option<CutRecord> {
    let cut = allocated_cut(inst, k, m, assign)?;
    (mubar < dbar * cut.total - violation_tol(mubar)).then_some(cut)
}

/// Cut over every positive-flow pair allocated to `(k, m)`.
pub fn allocated_cut(inst: &Instance, k: usize, m: usize, assign: &[usize]) -> Option<CutRecord> {
    let n = inst.num_nodes();
    let pairs: Vec<(usize, usize)> = (0..n)
        .filter(|&i| assign[i] == k)
        .flat_map(|i| (0..n).filter(move |&j| assign[j] == m).map(move |j| (i, j)))
        .filter(|&(i, j)| inst.flow(i, j) > 0.0)
        .collect();
    CutRecord::from_pairs(inst, k, m, pairs)
}

/// Every violated cut over the ordered pairs of open hubs.
pub fn separate_all(inst: &Instance, point: &NodePoint) -> Vec<CutRecord> {
    let n = inst.num_nodes();
    let mut open = vec![false; n];
    for &k in &point.assign {
        open[k] = true;
    }
    let mut out = Vec::new();
    for k in (0..n).filter(|&k| open[k]) {
        for m in (0..n).filter(|&m| m != k && open[m] && inst.admissible(k, m)) {
            let mubar = point.mu.get(&(k, m)).copied().unwrap_or(0.0);
            if let Some(c) = separate(inst, k, m, &point.assign, mubar, point.dbar(inst, k, m)) {
                out.push(c);
            }
        }
    }
    out
}

/// The candidate with the largest `dbar * w(S) - mubar`; ties go to the
/// lexicographically smallest `(k, m)`.
pub fn most_violated(inst: &Instance, cands: &[CutRecord], point: &NodePoint) -> Option<CutRecord> {
    let score = |c: &CutRecord| c.violation(point.mu.get(&(c.k, c.m)).copied().unwrap_or(0.0), point.dbar(inst, c.k, c.m));
    most_violated_by(cands, score)
}

fn most_violated_by(cands: &[CutRecord], score: impl Fn(&CutRecord) -> f64) -> Option<CutRecord> {
    let mut best: Option<(&CutRecord, f64)> = None;
    for c in cands {
        let s = score(c);
        best = match best {
            None => Some((c, s)),
            Some((b, bs)) if s > bs || (s == bs && (c.k, c.m) < (b.k, b.m)) => Some((c, s)),
            keep => keep,
        };
    }
    best.map(|(c, _)| c.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CutPolicy {
    #[serde(rename = "all", alias = "all-violated")]
    AllViolated,
    #[serde(rename = "most-violated", alias = "most")]
    MostViolated,
}

impl std::str::FromStr for CutPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "all" | "all-violated" | "all_violated" => Ok(CutPolicy::AllViolated),
            "most" | "most-violated" | "most_violated" => Ok(CutPolicy::MostViolated),
            other => Err(format!("unknown cut policy '{other}' (expected all or most-violated)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminationStatus {
    Optimal,
    TimeLimit,
    NodeLimit,
    Infeasible,
}

impl fmt::Display for TerminationStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TerminationStatus::Optimal => "OPTIMAL",
            TerminationStatus::TimeLimit => "TIME_LIMIT",
            TerminationStatus::NodeLimit => "NODE_LIMIT",
            TerminationStatus::Infeasible => "INFEASIBLE",
        })
    }
}

/// Tree search settings.
#[derive(Debug, Clone)]
pub struct BncConfig {
    pub policy: CutPolicy,
    pub time_limit: Duration,
    pub node_limit: Option<usize>,
    /// Distance to the nearest integer below which a binary counts as integral.
    pub int_tol: f64,
    /// Relative gap at which the search stops.
    pub gap_tol: f64,
    pub tol: Tolerances,
    pub options: FormulationOptions,
    /// Seed the pool with singleton cuts `S = {(i, j)}` on every arc for this
    /// many of the largest flows.
    pub seed_singletons: usize,
    pub solver: SolverHandle,
}

impl Default for BncConfig {
    fn default() -> Self {
        BncConfig {
            policy: CutPolicy::AllViolated,
            time_limit: Duration::from_secs(7200),
            node_limit: None,
            int_tol: 1e-5,
            gap_tol: 1e-6,
            tol: Tolerances::default(),
            options: FormulationOptions::default(),
            seed_singletons: 0,
            solver: SolverHandle::builtin(),
        }
    }
}

/// Counters and bounds of a finished search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BncStats {
    pub nodes_explored: usize,
    pub cuts_added: usize,
    pub relaxations: usize,
    pub numerical_issues: usize,
    pub best_bound: f64,
    pub incumbent: f64,
    pub gap: f64,
    pub elapsed: f64,
    pub status: TerminationStatus,
    /// `(best bound, incumbent)` after each node.
    pub trace: Vec<(f64, f64)>,
}

/// Result of a tree search.
#[derive(Debug, Clone)]
pub struct BncOutcome {
    pub solution: Option<HubSolution>,
    pub stats: BncStats,
    /// Cuts in the order they were added.
    pub pool: Vec<CutRecord>,
    /// Point at which the incumbent was accepted (master model only).
    pub certificate: Option<NodePoint>,
}

#[derive(Debug)]
struct Node {
    bound: f64,
    depth: usize,
    id: usize,
    fixings: Vec<(VarId, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // max-heap: smallest bound first, then deeper, then older
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.id.cmp(&self.id))
    }
}

/// Separation callback: violated cuts at an integral master point.
type Separator<'a> = dyn FnMut(&Formulation, &[f64]) -> Vec<CutRecord> + 'a;

/// Shifts hub positions back into their neighborhoods, lifts radii to the
/// gauge of the position and evaluates the result.
fn finalize(inst: &Instance, mut sol: HubSolution) -> Option<HubSolution> {
    for k in sol.hubs() {
        let nb = inst.neighborhood(k);
        let g = nb.gauge_of(&sol.position[k]);
        if g > nb.max_radius && g > 0.0 {
            let s = nb.max_radius / g;
            sol.position[k] = Point(
                nb.center.0.iter().zip(&sol.position[k].0).map(|(c, x)| c + s * (x - c)).collect(),
            );
        }
        sol.radius[k] = sol.radius[k].max(nb.gauge_of(&sol.position[k])).clamp(0.0, nb.max_radius);
    }
    let c = evaluate_solution(inst, &sol, 1e-9).ok()?;
    sol.objective = c.total;
    Some(sol)
}

fn fixings_of(form: &Formulation, sol: &HubSolution) -> Fixings {
    let mut fx = Fixings::new();
    for v in form.prog.binaries() {
        let on = match form.prog.tag_of(v) {
            Some(VarTag::Z(i, k)) => sol.assign[i] == k,
            Some(VarTag::Y(k)) => sol.open[k],
            _ => continue,
        };
        fx.fix(v, if on { 1.0 } else { 0.0 });
    }
    fx
}

struct Engine<'a> {
    inst: &'a Instance,
    cfg: &'a BncConfig,
    start: Instant,
    pool: Vec<CutRecord>,
    stats: BncStats,
    incumbent: Option<HubSolution>,
    certificate: Option<NodePoint>,
    weight: Vec<f64>,
}

impl<'a> Engine<'a> {
    fn remaining(&self) -> Option<Duration> {
        self.cfg.time_limit.checked_sub(self.start.elapsed())
    }

    fn incumbent_value(&self) -> f64 {
        self.incumbent.as_ref().map_or(f64::INFINITY, |s| s.objective)
    }

    fn prunable(&self, bound: f64) -> bool {
        let inc = self.incumbent_value();
        inc.is_finite() && bound >= inc - self.cfg.gap_tol * inc.abs().max(1.0)
    }

    fn offer(&mut self, sol: HubSolution, point: Option<NodePoint>) {
        if sol.objective < self.incumbent_value() {
            log::debug!("incumbent {:.6} after {} nodes", sol.objective, self.stats.nodes_explored);
            self.incumbent = Some(sol);
            self.certificate = point;
        }
    }

    /// Exact continuous optimum for the allocation of `sol`.
    fn polish(&mut self, form: &Formulation, sol: &HubSolution) {
        let mut fixed = form.clone();
        if fixed.kind == FormulationKind::Master {
            for k in sol.hubs() {
                for m in sol.hubs() {
                    if let Some(c) = allocated_cut(self.inst, k, m, &sol.assign) {
                        fixed.add_cut(&c);
                    }
                }
            }
        }
        let fx = fixings_of(&fixed, sol);
        let out = self.cfg.solver.solve(&fixed.prog, &fx, &self.cfg.tol, self.remaining());
        self.stats.relaxations += 1;
        if out.is_optimal() {
            if let Some(p) = finalize(self.inst, fixed.extract(self.inst, &out.primal)) {
                let point = (fixed.kind == FormulationKind::Master).then(|| NodePoint::from_primal(&fixed, self.inst, &out.primal));
                self.offer(p, point);
            }
        } else {
            self.stats.numerical_issues += 1;
        }
    }

    fn pick_branch(&self, form: &Formulation, x: &[f64], fixed: &Fixings) -> Option<VarId> {
        let mut best: Option<(VarId, f64, f64)> = None;
        for v in form.prog.binaries() {
            if fixed.get(v).is_some() {
                continue;
            }
            let val = x[v.index()];
            let frac = (val - val.round()).abs();
            if frac <= self.cfg.int_tol {
                continue;
            }
            let w = match form.prog.tag_of(v) {
                Some(VarTag::Z(i, _)) | Some(VarTag::Y(i)) => self.weight[i],
                _ => 0.0,
            };
            best = match best {
                Some((_, bf, bw)) if frac < bf - 1e-9 || (frac <= bf + 1e-9 && w <= bw) => best,
                _ => Some((v, frac, w)),
            };
        }
        best.map(|(v, _, _)| v)
    }

    fn first_unfixed(&self, form: &Formulation, fixed: &Fixings) -> Option<VarId> {
        form.prog.binaries().find(|v| fixed.get(*v).is_none())
    }

    fn run(&mut self, form: &mut Formulation, mut separator: Option<&mut Separator<'_>>) {
        let mut open = Open::default();
        let mut next_id = 1;
        open.push(Node { bound: f64::NEG_INFINITY, depth: 0, id: 0, fixings: Vec::new() }, true);
        let mut status = TerminationStatus::Optimal;
        let mut lower = f64::NEG_INFINITY;

        while let Some(node) = open.pop(self.incumbent.is_none()) {
            if self.remaining().is_none() {
                open.push(node, false);
                status = TerminationStatus::TimeLimit;
                break;
            }
            if self.cfg.node_limit.is_some_and(|l| self.stats.nodes_explored >= l) {
                open.push(node, false);
                status = TerminationStatus::NodeLimit;
                break;
            }
            if self.prunable(node.bound) {
                continue;
            }
            self.stats.nodes_explored += 1;
            let mut fixed = Fixings::new();
            for &(v, val) in &node.fixings {
                fixed.fix(v, val);
            }

            let mut rounds = 0;
            loop {
                let out = self.cfg.solver.solve(&form.prog, &fixed, &self.cfg.tol, self.remaining());
                self.stats.relaxations += 1;
                match out.status {
                    SolveStatus::Infeasible => break,
                    SolveStatus::TimeLimit => {
                        status = TerminationStatus::TimeLimit;
                        open.push(node, false);
                        self.finish(&open, lower, status);
                        return;
                    }
                    SolveStatus::Optimal => {}
                    SolveStatus::Unbounded | SolveStatus::NumericalLimit => {
                        // no usable bound: split on any free binary, or price the leaf directly
                        self.stats.numerical_issues += 1;
                        log::warn!("relaxation failed at depth {}: {:?}", node.depth, out.message);
                        match self.first_unfixed(form, &fixed) {
                            Some(v) => self.push_children(&mut open, &mut next_id, &node, v, node.bound),
                            None => {
                                let mut assign: Vec<usize> = (0..self.inst.num_nodes()).collect();
                                for (v, val) in fixed.iter() {
                                    if let Some(VarTag::Z(i, k)) = form.prog.tag_of(v) {
                                        if val > 0.5 {
                                            assign[i] = k;
                                        }
                                    }
                                }
                                let s = HubSolution::at_centers(self.inst, assign);
                                self.polish(form, &s);
                            }
                        }
                        break;
                    }
                }
                let bound = out.objective.max(node.bound);
                if self.prunable(bound) {
                    break;
                }
                match self.pick_branch(form, &out.primal, &fixed) {
                    Some(v) => {
                        self.push_children(&mut open, &mut next_id, &node, v, bound);
                        break;
                    }
                    None => {
                        let mut added = 0;
                        if let Some(sep) = separator.as_deref_mut() {
                            let cuts = sep(form, &out.primal);
                            for c in cuts {
                                if form.add_cut(&c) {
                                    self.pool.push(c);
                                    added += 1;
                                }
                            }
                        }
                        self.stats.cuts_added += added;
                        rounds += 1;
                        if added > 0 && rounds < 1000 {
                            continue;
                        }
                        let sol = form.extract(self.inst, &out.primal);
                        let point = (form.kind == FormulationKind::Master)
                            .then(|| NodePoint::from_primal(form, self.inst, &out.primal));
                        if let Some(s) = finalize(self.inst, sol.clone()) {
                            self.offer(s, point);
                        }
                        self.polish(form, &sol);
                        break;
                    }
                }
            }
            lower = lower.max(open.min_bound().min(self.incumbent_value()));
            self.stats.trace.push((lower, self.incumbent_value()));
        }
        self.finish(&open, lower, status);
    }

    fn push_children(&self, open: &mut Open, next_id: &mut usize, node: &Node, v: VarId, bound: f64) {
        let dive = self.incumbent.is_none();
        // the stack pops the 1-branch first, the heap prefers the older id
        let order: [f64; 2] = if dive { [0.0, 1.0] } else { [1.0, 0.0] };
        for val in order {
            let mut fixings = node.fixings.clone();
            fixings.push((v, val));
            open.push(Node { bound, depth: node.depth + 1, id: *next_id, fixings }, dive);
            *next_id += 1;
        }
    }

    fn finish(&mut self, open: &Open, lower: f64, status: TerminationStatus) {
        let inc = self.incumbent_value();
        let bound = if open.is_empty() { inc } else { open.min_bound().max(lower).min(inc) };
        self.stats.status = match (status, &self.incumbent) {
            (TerminationStatus::Optimal, None) => TerminationStatus::Infeasible,
            (s, _) => s,
        };
        self.stats.best_bound = bound;
        self.stats.incumbent = inc;
        self.stats.gap = if inc.is_finite() && bound.is_finite() { ((inc - bound) / inc.abs().max(1.0)).max(0.0) } else { f64::INFINITY };
        self.stats.elapsed = self.start.elapsed().as_secs_f64();
    }
}

/// Open nodes: a depth-first stack used until the first incumbent, then a
/// best-bound heap.
#[derive(Default)]
struct Open {
    stack: Vec<Node>,
    heap: BinaryHeap<Node>,
}

impl Open {
    fn push(&mut self, node: Node, dive: bool) {
        if dive {
            self.stack.push(node);
        } else {
            self.heap.push(node);
        }
    }

    fn pop(&mut self, dive: bool) -> Option<Node> {
        if !dive {
            self.heap.extend(self.stack.drain(..));
        }
        self.stack.pop().or_else(|| self.heap.pop())
    }

    fn is_empty(&self) -> bool {
        self.stack.is_empty() && self.heap.is_empty()
    }

    fn min_bound(&self) -> f64 {
        self.stack.iter().chain(self.heap.iter()).map(|n| n.bound).fold(f64::INFINITY, f64::min)
    }
}

fn empty_stats() -> BncStats {
    BncStats {
        nodes_explored: 0,
        cuts_added: 0,
        relaxations: 0,
        numerical_issues: 0,
        best_bound: f64::NEG_INFINITY,
        incumbent: f64::INFINITY,
        gap: f64::INFINITY,
        elapsed: 0.0,
        status: TerminationStatus::Optimal,
        trace: Vec::new(),
    }
}

fn run_tree(inst: &Instance, cfg: &BncConfig, form: &mut Formulation, separator: Option<&mut Separator<'_>>, seeded: Vec<CutRecord>) -> BncOutcome {
    let n = inst.num_nodes();
    let mut engine = Engine {
        inst,
        cfg,
        start: Instant::now(),
        pool: seeded,
        stats: empty_stats(),
        incumbent: None,
        certificate: None,
        weight: (0..n).map(|i| inst.origin_total(i) + inst.dest_total(i)).collect(),
    };
    engine.stats.cuts_added = engine.pool.len();
    engine.run(form, separator);
    if engine.stats.status == TerminationStatus::Infeasible {
        log::error!("no feasible allocation found for {}; the model is inconsistent", inst.name());
    }
    BncOutcome { solution: engine.incumbent, stats: engine.stats, pool: engine.pool, certificate: engine.certificate }
}

/// Singleton cuts `S = {(i, j)}` on every arc for the `count` largest flows.
pub fn singleton_seed(inst: &Instance, count: usize) -> Vec<CutRecord> {
    let n = inst.num_nodes();
    let mut flows: Vec<(f64, usize, usize)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && inst.flow(i, j) > 0.0)
        .map(|(i, j)| (inst.flow(i, j), i, j))
        .collect();
    flows.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut out = Vec::new();
    for &(_, i, j) in flows.iter().take(count) {
        for k in 0..n {
            for m in (0..n).filter(|&m| m != k) {
                if let Some(c) = CutRecord::from_pairs(inst, k, m, vec![(i, j)]) {
                    out.push(c);
                }
            }
        }
    }
    out
}

/// Branch-and-cut on the master model.
pub fn solve_bnc(inst: &Instance, cfg: &BncConfig) -> BncOutcome {
    let seeded = singleton_seed(inst, cfg.seed_singletons);
    let mut form = build_f2_master(inst, &seeded, cfg.options);
    let policy = cfg.policy;
    let mut sep = |f: &Formulation, x: &[f64]| {
        let point = NodePoint::from_primal(f, inst, x);
        let cands = separate_all(inst, &point);
        match policy {
            CutPolicy::AllViolated => cands,
            CutPolicy::MostViolated => most_violated(inst, &cands, &point).into_iter().collect(),
        }
    };
    run_tree(inst, cfg, &mut form, Some(&mut sep), seeded)
}

/// Branch-and-bound on the compact model (`split` selects the
/// single-allocation `nu` rows).
pub fn solve_compact(inst: &Instance, cfg: &BncConfig, split: bool) -> BncOutcome {
    let mut form = if split { build_f1_split_nu(inst, cfg.options) } else { build_f1(inst, cfg.options) };
    run_tree(inst, cfg, &mut form, None, Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::NormKind;
    use crate::instance::{make_scenario, tiny_fixture, ScenarioParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn inst(n: usize, seed: u64) -> Instance {
        let p = ScenarioParams { tau: 1.0, rho: 0.1, alpha: 0.5, gauge: NormKind::L2, norm_c: NormKind::L2, norm_h: NormKind::L2 };
        make_scenario(&tiny_fixture(n, seed), &p).unwrap()
    }

    proptest::proptest! {
        #[test]
        fn priced_integer_points_admit_no_violated_cut(
            seed in 0u64..200,
            picks in proptest::collection::vec(0usize..4, 4),
            shift in proptest::collection::vec(-1.0f64..1.0, 8),
        ) {
            let inst = inst(4, seed);
            let hubs: Vec<usize> = { let mut h: Vec<usize> = picks.clone(); h.sort(); h.dedup(); h };
            let assign: Vec<usize> = (0..4).map(|i| if hubs.contains(&i) { i } else { hubs[picks[i] % hubs.len()] }).collect();
            let mut sol = HubSolution::at_centers(&inst, assign);
            for k in 0..4 {
                let nb = inst.neighborhood(k);
                let step = nb.max_radius * 0.5;
                sol.position[k] = Point(vec![nb.center.0[0] + step * shift[2 * k], nb.center.0[1] + step * shift[2 * k + 1]]);
            }
            let point = NodePoint::priced(&inst, &sol);
            proptest::prop_assert!(separate_all(&inst, &point).is_empty());
            let mut under = point.clone();
            if let Some((_, v)) = under.mu.iter_mut().find(|(_, v)| **v > 1e-3) {
                *v *= 0.5;
                proptest::prop_assert!(!separate_all(&inst, &under).is_empty());
            }
        }
    }

    #[test]
    fn two_node_hand_example() {
        let base = inst(2, 1);
        let inst = base.clone().with_flows(vec![vec![0.0, 10.0], vec![0.0, 0.0]]).unwrap();
        let cut = separate(&inst, 0, 1, &[0, 1], 0.0, 3.0).unwrap();
        assert_eq!(cut.total, 10.0);
        assert_eq!(cut.violation(0.0, 3.0), 30.0);
        assert!(separate(&inst, 1, 0, &[0, 1], 0.0, 3.0).is_none());
        assert!(separate(&inst, 0, 1, &[0, 1], 30.0, 3.0).is_none());
    }

    #[test]
    fn cut_aggregates_are_consistent() {
        let inst = inst(5, 3);
        let c = CutRecord::from_pairs(&inst, 0, 1, vec![(2, 3), (0, 1), (2, 1), (4, 3)]).unwrap();
        let o: f64 = c.origin_weights.iter().map(|p| p.1).sum();
        let d: f64 = c.dest_weights.iter().map(|p| p.1).sum();
        assert!((o - c.total).abs() < 1e-12 && (d - c.total).abs() < 1e-12);
        assert_eq!(c.pairs, vec![(0, 1), (2, 1), (2, 3), (4, 3)]);
    }

    #[test]
    fn separation_attains_the_subset_maximum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..20 {
            let inst = inst(4, 100 + trial);
            let hubs: Vec<usize> = (0..4).filter(|_| rng.gen_bool(0.5)).collect();
            let hubs = if hubs.is_empty() { vec![0] } else { hubs };
            let assign: Vec<usize> =
                (0..4).map(|i| if hubs.contains(&i) { i } else { hubs[rng.gen_range(0..hubs.len())] }).collect();
            for &k in &hubs {
                for &m in hubs.iter().filter(|&&m| m != k) {
                    let dbar: f64 = rng.gen_range(0.1..5.0);
                    let universe: Vec<(usize, usize)> = (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).collect();
                    let mut best = 0.0f64;
                    for mask in 0u32..(1 << universe.len()) {
                        let rhs: f64 = universe
                            .iter()
                            .enumerate()
                            .filter(|(b, _)| mask >> b & 1 == 1)
                            .map(|(_, &(i, j))| {
                                let z = |a: usize, h: usize| if assign[a] == h { 1.0 } else { 0.0 };
                                inst.flow(i, j) * (z(i, k) + z(j, m) - 1.0)
                            })
                            .sum::<f64>()
                            * dbar;
                        best = best.max(rhs);
                    }
                    let at_zero = separate(&inst, k, m, &assign, 0.0, dbar);
                    let got = at_zero.as_ref().map_or(0.0, |c| c.total * dbar);
                    assert!((got - best).abs() <= 1e-9 * (1.0 + best), "trial {trial}: {got} vs {best}");
                    let mu = best * 0.999;
                    assert_eq!(separate(&inst, k, m, &assign, mu, dbar).is_some(), mu < best - violation_tol(mu));
                }
            }
        }
    }

    #[test]
    fn most_violated_picks_largest_then_smallest_arc() {
        let inst = inst(5, 2);
        let mk = |k, m| CutRecord::from_pairs(&inst, k, m, vec![(k, m)]).unwrap();
        let cands = vec![mk(2, 4), mk(1, 3)];
        let pick = most_violated_by(&cands, |_| 5.0).unwrap();
        assert_eq!((pick.k, pick.m), (1, 3));
        let pick = most_violated_by(&cands, |c| if c.k == 2 { 7.0 } else { 5.0 }).unwrap();
        assert_eq!((pick.k, pick.m), (2, 4));
        assert!(most_violated_by(&[], |_| 0.0).is_none());
    }

    #[test]
    fn single_hub_point_has_no_cuts() {
        let inst = inst(4, 5);
        let sol = HubSolution::at_centers(&inst, vec![2; 4]);
        assert!(separate_all(&inst, &NodePoint::priced(&inst, &sol)).is_empty());
    }

    #[test]
    fn exactly_priced_point_passes_separation() {
        let inst = inst(5, 8);
        let sol = HubSolution::at_centers(&inst, vec![0, 0, 2, 2, 4]);
        let mut pt = NodePoint::priced(&inst, &sol);
        assert!(separate_all(&inst, &pt).is_empty());
        pt.mu.clear();
        let cuts = separate_all(&inst, &pt);
        let expected = [0, 2, 4]
            .iter()
            .flat_map(|&k| [0, 2, 4].into_iter().map(move |m| (k, m)))
            .filter(|&(k, m)| k != m)
            .filter(|&(k, m)| (0..5).any(|i| (0..5).any(|j| sol.assign[i] == k && sol.assign[j] == m && inst.flow(i, j) > 0.0)))
            .count();
        assert_eq!(cuts.len(), expected);
    }

    #[test]
    fn zero_flow_opens_cheapest_hub() {
        let base = inst(4, 9);
        let inst = base.clone().with_flows(vec![vec![0.0; 4]; 4]).unwrap();
        let out = solve_bnc(&inst, &BncConfig::default());
        let cheapest = inst.fixed_costs().iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(out.stats.status, TerminationStatus::Optimal);
        assert!((out.solution.unwrap().objective - cheapest).abs() < 1e-6);
        assert_eq!(out.stats.cuts_added, 0);
    }

    #[test]
    fn master_and_compact_agree_on_a_small_instance() {
        let inst = inst(4, 21);
        let cfg = BncConfig::default();
        let a = solve_bnc(&inst, &cfg);
        let b = solve_compact(&inst, &cfg, false);
        let c = solve_compact(&inst, &cfg, true);
        let (va, vb, vc) = (a.stats.incumbent, b.stats.incumbent, c.stats.incumbent);
        assert!((va - vb).abs() <= 1e-4 * va, "{va} vs {vb}");
        assert!((va - vc).abs() <= 1e-4 * va, "{va} vs {vc}");
        assert!(separate_all(&inst, a.certificate.as_ref().unwrap()).is_empty());
        let trace = &a.stats.trace;
        assert!(trace.windows(2).all(|w| w[1].0 >= w[0].0 - 1e-9 && w[1].1 <= w[0].1));
    }
}
