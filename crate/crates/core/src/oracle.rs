//! Brute-force reference solver for tiny instances.
//!
//! Every (hub set, allocation) pair is enumerated; for each, the remaining
//! problem in hub positions and dilations is a small convex program that is
//! assembled here straight from the geometry emitters and cross-checked by a
//! derivative-free local search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::conic::{solve_relaxation, Affine, ConicProgram, Fixings, Tolerances, VarId, VarTag};
use crate::geometry::{emit_distance_epigraph, emit_membership, power_cone_rep, PointExpr, Point};
use crate::instance::{Instance, SetupKind};
use crate::solution::{evaluate_solution, HubSolution};

/// Largest node count accepted by the enumerator.
pub const MAX_NODES: usize = 7;

/// A nonempty hub set and a self-consistent allocation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Configuration {
    /// Sorted hub indices.
    pub hubs: Vec<usize>,
    pub assign: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("brute force limited to {MAX_NODES} nodes, instance has {0}")]
    TooLarge(usize),
    #[error("fixed-allocation subproblem failed: {0}")]
    Solver(String),
    #[error("local search improved the conic optimum: {polished} < {conic}")]
    PolishImproved { conic: f64, polished: f64 },
    #[error("direct evaluation disagrees with the conic objective: {direct} vs {conic}")]
    Evaluation { conic: f64, direct: f64 },
}

/// All configurations of `n` nodes: `sum over nonempty H of |H|^(n - |H|)`.
pub fn enumerate_configs(n: usize) -> Result<Vec<Configuration>, OracleError> {
    if n > MAX_NODES {
        return Err(OracleError::TooLarge(n));
    }
    let mut out = Vec::new();
    let mut subsets: Vec<Vec<usize>> =
        (1u32..(1 << n)).map(|mask| (0..n).filter(|&i| mask >> i & 1 == 1).collect()).collect();
    subsets.sort();
    for hubs in subsets {
        let spokes: Vec<usize> = (0..n).filter(|i| !hubs.contains(i)).collect();
        let h = hubs.len();
        for code in 0..h.pow(spokes.len() as u32) {
            // last spoke varies fastest
            let mut c = code;
            let mut assign: Vec<usize> = (0..n).collect();
            for &s in spokes.iter().rev() {
                assign[s] = hubs[c % h];
                c /= h;
            }
            out.push(Configuration { hubs: hubs.clone(), assign });
        }
    }
    Ok(out)
}

/// Settings of the local-search cross-check.
#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    pub seed: u64,
    /// Random starts of the local search (0 disables it).
    pub starts: usize,
    /// Allowed relative improvement of the local search over the conic value.
    pub polish_tol: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions { seed: 7, starts: 10, polish_tol: 1e-5 }
    }
}

/// Optimum of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedOptimum {
    pub solution: HubSolution,
    /// Objective reported by the conic solve.
    pub conic: f64,
    /// Best value reached by the local search (infinite when disabled).
    pub polished: f64,
}

fn clamp_into(inst: &Instance, k: usize, x: &mut Point) {
    let nb = inst.neighborhood(k);
    let g = nb.gauge_of(x);
    if g > nb.max_radius {
        let s = if g > 0.0 { nb.max_radius / g } else { 0.0 };
        for (c, a) in x.0.iter_mut().zip(&nb.center.0) {
            *c = a + s * (*c - a);
        }
    }
}

/// Cost of hub positions `flat` (hub-major) for a configuration, with each
/// hub clamped into its neighborhood and its dilation set to its gauge.
fn positioned(inst: &Instance, cfg: &Configuration, flat: &[f64]) -> HubSolution {
    let n = inst.num_nodes();
    let dim = inst.dim();
    let mut open = vec![false; n];
    let mut position: Vec<Point> = inst.nodes().to_vec();
    let mut radius = vec![0.0; n];
    for (h, &k) in cfg.hubs.iter().enumerate() {
        open[k] = true;
        let mut p = Point(flat[h * dim..(h + 1) * dim].to_vec());
        clamp_into(inst, k, &mut p);
        radius[k] = inst.neighborhood(k).gauge_of(&p).min(inst.neighborhood(k).max_radius);
        position[k] = p;
    }
    let mut sol = HubSolution { open, assign: cfg.assign.clone(), radius, position, objective: f64::NAN };
    sol.objective = evaluate_solution(inst, &sol, 1e-9).map_or(f64::INFINITY, |c| c.total);
    sol
}

/// Nelder-Mead minimization of `f` from `x0` with initial simplex scale `step`.
pub fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], step: f64, max_evals: usize) -> (Vec<f64>, f64) {
    let n = x0.len();
    if n == 0 {
        return (Vec::new(), f(x0));
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += step;
        let v = f(&p);
        simplex.push((p, v));
    }
    let mut evals = n + 1;
    let lerp = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect() };
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[n].1 - simplex[0].1;
        let size = simplex.iter().skip(1).flat_map(|(p, _)| p.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs())).fold(0.0, f64::max);
        if spread.abs() <= 1e-12 * (1.0 + simplex[0].1.abs()) && size < 1e-10 {
            break;
        }
        let mut centroid = vec![0.0; n];
        for (p, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let refl = lerp(&centroid, &worst.0, -1.0);
        let fr = f(&refl);
        evals += 1;
        if fr < simplex[0].1 {
            let exp = lerp(&centroid, &worst.0, -2.0);
            let fe = f(&exp);
            evals += 1;
            simplex[n] = if fe < fr { (exp, fe) } else { (refl, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (refl, fr);
        } else {
            let (cpt, fc) = if fr < worst.1 {
                let c = lerp(&centroid, &refl, 0.5);
                let v = f(&c);
                (c, v)
            } else {
                let c = lerp(&centroid, &worst.0, 0.5);
                let v = f(&c);
                (c, v)
            };
            evals += 1;
            if fc < worst.1.min(fr) {
                simplex[n] = (cpt, fc);
            } else {
                let best = simplex[0].0.clone();
                for s in simplex.iter_mut().skip(1) {
                    s.0 = lerp(&best, &s.0, 0.5);
                    s.1 = f(&s.0);
                    evals += 1;
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0)
}

/// Exact continuous optimum of one configuration, cross-checked by direct
/// evaluation and a seeded local search.
pub fn solve_fixed(inst: &Instance, cfg: &Configuration, opts: &OracleOptions) -> Result<FixedOptimum, OracleError> {
    let n = inst.num_nodes();
    let dim = inst.dim();
    let mut prog = ConicProgram::new();
    let mut xs: Vec<Option<Vec<VarId>>> = vec![None; n];
    let mut constant = 0.0;
    for &k in &cfg.hubs {
        let nb = inst.neighborhood(k);
        let r = prog.add_continuous(VarTag::R(k), 0.0, nb.max_radius);
        let x: Vec<VarId> = (0..dim).map(|c| prog.add_continuous(VarTag::X(k, c), f64::NEG_INFINITY, f64::INFINITY)).collect();
        let atoms = emit_membership(&mut prog, nb, &PointExpr::vars(&x), &Affine::var(r)).map_err(|e| OracleError::Solver(e.to_string()))?;
        prog.add_atoms(atoms);
        constant += inst.fixed_cost(k);
        let g = inst.var_cost(k);
        match g.kind {
            SetupKind::Linear => prog.add_objective(r, g.coeff),
            SetupKind::Power => {
                let gamma = prog.add_continuous(VarTag::Gamma(k), 0.0, f64::INFINITY);
                let atoms = power_cone_rep(&mut prog, g.degree, r, gamma, Some(k)).map_err(|e| OracleError::Solver(e.to_string()))?;
                prog.add_atoms(atoms);
                prog.add_objective(gamma, g.coeff);
            }
        }
        xs[k] = Some(x);
    }
    let xk = |k: usize| PointExpr::vars(xs[k].as_ref().expect("hub variables"));
    for i in 0..n {
        let h = cfg.assign[i];
        for (norm, weight) in [(inst.norm_c(), inst.origin_total(i)), (inst.norm_d(), inst.dest_total(i))] {
            if weight == 0.0 {
                continue;
            }
            let t = prog.add_aux(0.0, f64::INFINITY);
            let atoms = emit_distance_epigraph(&mut prog, norm, &PointExpr::fixed(inst.node(i)), &xk(h), &Affine::var(t))
                .map_err(|e| OracleError::Solver(e.to_string()))?;
            prog.add_atoms(atoms);
            prog.add_objective(t, weight);
        }
    }
    for &k in &cfg.hubs {
        for &m in cfg.hubs.iter().filter(|&&m| m != k) {
            let w: f64 = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .filter(|&(i, j)| cfg.assign[i] == k && cfg.assign[j] == m)
                .map(|(i, j)| inst.flow(i, j))
                .sum();
            if w == 0.0 {
                continue;
            }
            let t = prog.add_aux(0.0, f64::INFINITY);
            let atoms = emit_distance_epigraph(&mut prog, inst.norm_h(), &xk(k), &xk(m), &Affine::var(t))
                .map_err(|e| OracleError::Solver(e.to_string()))?;
            prog.add_atoms(atoms);
            prog.add_objective(t, inst.alpha() * w);
        }
    }
    prog.objective_constant = constant;

    let out = solve_relaxation(&prog, &Fixings::new(), &Tolerances::default(), None);
    if !out.is_optimal() {
        return Err(OracleError::Solver(format!("{}: {}", out.status, out.message.unwrap_or_default())));
    }
    let flat: Vec<f64> = cfg
        .hubs
        .iter()
        .flat_map(|&k| xs[k].as_ref().expect("hub variables").iter().map(|v| out.primal[v.index()]).collect::<Vec<_>>())
        .collect();
    let sol = positioned(inst, cfg, &flat);
    let direct = sol.objective;
    if (direct - out.objective).abs() > 1e-6 * (1.0 + out.objective.abs()) {
        return Err(OracleError::Evaluation { conic: out.objective, direct });
    }

    let mut polished = f64::INFINITY;
    if opts.starts > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (cfg.assign.iter().fold(0u64, |h, &a| h.wrapping_mul(31).wrapping_add(a as u64 + 1))));
        let f = |p: &[f64]| positioned(inst, cfg, p).objective;
        let scale = cfg.hubs.iter().map(|&k| inst.neighborhood(k).max_radius).fold(0.0, f64::max).max(1e-3);
        for _ in 0..opts.starts {
            let start: Vec<f64> = cfg
                .hubs
                .iter()
                .flat_map(|&k| {
                    let nb = inst.neighborhood(k);
                    nb.center.0.iter().map(|a| a + nb.max_radius * rng.gen_range(-1.0..1.0)).collect::<Vec<_>>()
                })
                .collect();
            let (_, v) = nelder_mead(&f, &start, 0.25 * scale, 400 * (flat.len() + 1));
            polished = polished.min(v);
        }
        if polished < out.objective - opts.polish_tol * out.objective.abs().max(1.0) {
            return Err(OracleError::PolishImproved { conic: out.objective, polished });
        }
    }
    Ok(FixedOptimum { solution: sol, conic: out.objective, polished })
}

/// Result of an exhaustive search.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutcome {
    pub solution: HubSolution,
    pub configurations: usize,
}

/// Minimum over all configurations; ties go to the first configuration in
/// enumeration order.
pub fn brute_force(inst: &Instance, opts: &OracleOptions) -> Result<OracleOutcome, OracleError> {
    let configs = admissible_configs(inst)?;
    let mut best: Option<HubSolution> = None;
    for cfg in &configs {
        let fx = solve_fixed(inst, cfg, opts)?;
        if best.as_ref().map_or(true, |b| fx.solution.objective < b.objective) {
            best = Some(fx.solution);
        }
    }
    Ok(OracleOutcome { solution: best.expect("at least one configuration"), configurations: configs.len() })
}

/// Minimum over all configurations with every hub pinned to its node and
/// zero dilation (the classical discrete problem).
pub fn brute_force_pinned(inst: &Instance) -> Result<OracleOutcome, OracleError> {
    let configs = admissible_configs(inst)?;
    let mut best: Option<HubSolution> = None;
    for cfg in &configs {
        let sol = HubSolution::at_centers(inst, cfg.assign.clone());
        if best.as_ref().map_or(true, |b| sol.objective < b.objective) {
            best = Some(sol);
        }
    }
    Ok(OracleOutcome { solution: best.expect("at least one configuration"), configurations: configs.len() })
}

fn admissible_configs(inst: &Instance) -> Result<Vec<Configuration>, OracleError> {
    Ok(enumerate_configs(inst.num_nodes())?
        .into_iter()
        .filter(|c| (0..inst.num_nodes()).all(|i| inst.admissible(i, c.assign[i])))
        .collect())
}
