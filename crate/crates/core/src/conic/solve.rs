//! Continuous relaxation solving: the solver adapter trait, the default
//! interior-point backend and the independent residual re-check every answer
//! passes through.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use super::program::{Affine, ConicProgram, Sense, VarId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalLimit,
    TimeLimit,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "OPTIMAL",
            SolveStatus::Infeasible => "INFEASIBLE",
            SolveStatus::Unbounded => "UNBOUNDED",
            SolveStatus::NumericalLimit => "NUMERICAL_LIMIT",
            SolveStatus::TimeLimit => "TIME_LIMIT",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Feasibility tolerance handed to the solver.
    pub feas: f64,
    /// Relative duality gap tolerance handed to the solver.
    pub gap: f64,
    /// Relative tolerance of the residual re-check.
    pub verify: f64,
    pub max_iter: u32,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { feas: 1e-7, gap: 1e-7, verify: 1e-6, max_iter: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Residuals {
    /// Largest scaled violation of rows, cones and bounds.
    pub primal: f64,
    /// Dual residual as reported by the solver (NaN if unknown).
    pub dual: f64,
    /// Relative duality gap as reported by the solver (NaN if unknown).
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct ContinuousSolution {
    pub status: SolveStatus,
    pub primal: Vec<f64>,
    pub objective: f64,
    pub residuals: Residuals,
    pub iterations: u32,
    pub message: Option<String>,
}

impl ContinuousSolution {
    pub fn failed(status: SolveStatus, n: usize, message: impl Into<String>) -> Self {
        ContinuousSolution {
            status,
            primal: vec![f64::NAN; n],
            objective: f64::NAN,
            residuals: Residuals { primal: f64::NAN, dual: f64::NAN, gap: f64::NAN },
            iterations: 0,
            message: Some(message.into()),
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn value(&self, v: VarId) -> f64 {
        self.primal[v.0]
    }
}

/// Variables pinned to values for one solve (branching decisions, fixed
/// configurations).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Fixings {
    values: HashMap<VarId, f64>,
}

impl Fixings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fix(&mut self, v: VarId, value: f64) {
        self.values.insert(v, value);
    }

    pub fn with(mut self, v: VarId, value: f64) -> Self {
        self.fix(v, value);
        self
    }

    pub fn get(&self, v: VarId) -> Option<f64> {
        self.values.get(&v).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, f64)> + '_ {
        self.values.iter().map(|(&v, &x)| (v, x))
    }
}

/// Contract every relaxation backend implements.
pub trait RelaxationSolver: Send + Sync {
    fn name(&self) -> &str;

    fn solve(
        &self,
        prog: &ConicProgram,
        fixings: &Fixings,
        tol: &Tolerances,
        budget: Option<Duration>,
    ) -> ContinuousSolution;
}

/// Program after substituting fixed variables: `min c'x + c0` subject to
/// `A x + s = b`, `s` in a product of zero, nonnegative and second-order
/// cones (in that block order).
pub(crate) struct Reduced {
    pub free: Vec<usize>,
    pub base: Vec<f64>,
    pub c: Vec<f64>,
    pub c0: f64,
    pub eq: Vec<(Vec<(usize, f64)>, f64)>,
    pub ineq: Vec<(Vec<(usize, f64)>, f64)>,
    /// Each cone as rows `(coefs, const)` of `s = const - coefs * x`, head first.
    pub socs: Vec<Vec<(Vec<(usize, f64)>, f64)>>,
}

pub(crate) enum ReduceOutcome {
    Ready(Reduced),
    Infeasible(String),
}

const CONST_TOL: f64 = 1e-9;

pub(crate) fn reduce(prog: &ConicProgram, fixings: &Fixings) -> ReduceOutcome {
    let n = prog.num_vars();
    let mut base = vec![0.0; n];
    let mut col = vec![usize::MAX; n];
    let mut free = Vec::new();
    for (i, v) in prog.vars().iter().enumerate() {
        let pinned = fixings.get(VarId(i)).or(if v.lb == v.ub { Some(v.lb) } else { None });
        match pinned {
            Some(val) => {
                if val < v.lb - CONST_TOL || val > v.ub + CONST_TOL {
                    return ReduceOutcome::Infeasible(format!(
                        "fixing {val} of variable {i} outside [{}, {}]",
                        v.lb, v.ub
                    ));
                }
                base[i] = val;
            }
            None => {
                if v.lb > v.ub {
                    return ReduceOutcome::Infeasible(format!("empty bounds on variable {i}"));
                }
                col[i] = free.len();
                free.push(i);
            }
        }
    }

    let split = |terms: &[(VarId, f64)]| -> (Vec<(usize, f64)>, f64) {
        let mut acc: HashMap<usize, f64> = HashMap::new();
        let mut fixed = 0.0;
        for &(v, c) in terms {
            if col[v.0] == usize::MAX {
                fixed += c * base[v.0];
            } else {
                *acc.entry(col[v.0]).or_insert(0.0) += c;
            }
        }
        let mut lin: Vec<(usize, f64)> = acc.into_iter().filter(|&(_, c)| c != 0.0).collect();
        lin.sort_by_key(|&(j, _)| j);
        (lin, fixed)
    };

    let mut c = vec![0.0; free.len()];
    let mut c0 = prog.objective_constant;
    for (i, &coef) in prog.objective().iter().enumerate() {
        if col[i] == usize::MAX {
            c0 += coef * base[i];
        } else {
            c[col[i]] += coef;
        }
    }

    let mut eq = Vec::new();
    let mut ineq = Vec::new();
    for (r, row) in prog.rows().iter().enumerate() {
        let (lin, fixed) = split(&row.terms);
        let rhs = row.rhs - fixed;
        if lin.is_empty() {
            let scale = 1.0 + rhs.abs();
            let bad = match row.sense {
                Sense::Le => rhs < -CONST_TOL * scale,
                Sense::Ge => rhs > CONST_TOL * scale,
                Sense::Eq => rhs.abs() > CONST_TOL * scale,
            };
            if bad {
                return ReduceOutcome::Infeasible(format!("row {r} violated by fixings"));
            }
            continue;
        }
        match row.sense {
            Sense::Eq => eq.push((lin, rhs)),
            Sense::Le => ineq.push((lin, rhs)),
            Sense::Ge => ineq.push((lin.into_iter().map(|(j, a)| (j, -a)).collect(), -rhs)),
        }
    }
    for (j, &i) in free.iter().enumerate() {
        let v = &prog.vars()[i];
        if v.lb.is_finite() {
            ineq.push((vec![(j, -1.0)], -v.lb));
        }
        if v.ub.is_finite() {
            ineq.push((vec![(j, 1.0)], v.ub));
        }
    }

    let mut socs = Vec::new();
    for (ci, cone) in prog.cones().iter().enumerate() {
        let (head, tail) = cone.standard_form();
        let entry = |e: &Affine| {
            let (lin, fixed) = split(&e.terms);
            // s = e(x) = lin*x + fixed + const  =>  -lin*x + s = fixed + const
            (lin.into_iter().map(|(j, a)| (j, -a)).collect::<Vec<_>>(), fixed + e.constant)
        };
        let mut block = vec![entry(&head)];
        block.extend(tail.iter().map(entry));
        if block.iter().all(|(lin, _)| lin.is_empty()) {
            let h = block[0].1;
            let nt = block[1..].iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
            if nt > h + CONST_TOL * (1.0 + h.abs()) {
                return ReduceOutcome::Infeasible(format!("cone {ci} violated by fixings"));
            }
            continue;
        }
        socs.push(block);
    }

    ReduceOutcome::Ready(Reduced { free, base, c, c0, eq, ineq, socs })
}

impl Reduced {
    pub fn expand(&self, xr: &[f64]) -> Vec<f64> {
        let mut x = self.base.clone();
        for (j, &i) in self.free.iter().enumerate() {
            x[i] = xr[j];
        }
        x
    }
}

/// Default backend: a homogeneous-embedding interior-point method for
/// linear and second-order cones (Clarabel).
#[derive(Debug, Clone, Copy, Default)]
pub struct InteriorPointSolver;

impl RelaxationSolver for InteriorPointSolver {
    fn name(&self) -> &str {
        "interior-point"
    }

    fn solve(
        &self,
        prog: &ConicProgram,
        fixings: &Fixings,
        tol: &Tolerances,
        budget: Option<Duration>,
    ) -> ContinuousSolution {
        let n = prog.num_vars();
        let red = match reduce(prog, fixings) {
            ReduceOutcome::Ready(r) => r,
            ReduceOutcome::Infeasible(msg) => {
                return ContinuousSolution::failed(SolveStatus::Infeasible, n, msg)
            }
        };
        let nf = red.free.len();
        if nf == 0 {
            let x = red.expand(&[]);
            return ContinuousSolution {
                status: SolveStatus::Optimal,
                objective: prog.objective_value(&x),
                primal: x,
                residuals: Residuals { primal: 0.0, dual: 0.0, gap: 0.0 },
                iterations: 0,
                message: None,
            };
        }

        let mut ri = Vec::new();
        let mut cj = Vec::new();
        let mut vals = Vec::new();
        let mut b = Vec::new();
        let mut cones = Vec::new();
        let mut push_row = |lin: &[(usize, f64)], rhs: f64, b: &mut Vec<f64>| {
            let r = b.len();
            for &(j, a) in lin {
                ri.push(r);
                cj.push(j);
                vals.push(a);
            }
            b.push(rhs);
        };
        for (lin, rhs) in &red.eq {
            push_row(lin, *rhs, &mut b);
        }
        if !red.eq.is_empty() {
            cones.push(SupportedConeT::ZeroConeT(red.eq.len()));
        }
        for (lin, rhs) in &red.ineq {
            push_row(lin, *rhs, &mut b);
        }
        if !red.ineq.is_empty() {
            cones.push(SupportedConeT::NonnegativeConeT(red.ineq.len()));
        }
        for block in &red.socs {
            for (lin, k) in block {
                push_row(lin, *k, &mut b);
            }
            cones.push(SupportedConeT::SecondOrderConeT(block.len()));
        }
        let m = b.len();
        let a = CscMatrix::new_from_triplets(m, nf, ri, cj, vals);
        let p = CscMatrix::zeros((nf, nf));

        let mut builder = DefaultSettingsBuilder::default();
        builder
            .verbose(false)
            .max_iter(tol.max_iter)
            .tol_feas(tol.feas)
            .tol_gap_abs(tol.gap)
            .tol_gap_rel(tol.gap)
            .tol_ktratio(1e-6);
        if let Some(bud) = budget {
            builder.time_limit(bud.as_secs_f64().max(1e-3));
        }
        let settings = match builder.build() {
            Ok(s) => s,
            Err(e) => return ContinuousSolution::failed(SolveStatus::NumericalLimit, n, e.to_string()),
        };
        let mut solver = match DefaultSolver::new(&p, &red.c, &a, &b, &cones, settings) {
            Ok(s) => s,
            Err(e) => return ContinuousSolution::failed(SolveStatus::NumericalLimit, n, e.to_string()),
        };
        solver.solve();
        let sol = &solver.solution;
        let status = match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                SolveStatus::Infeasible
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                SolveStatus::Unbounded
            }
            SolverStatus::MaxTime => SolveStatus::TimeLimit,
            _ => SolveStatus::NumericalLimit,
        };
        let x = red.expand(&sol.x);
        let pobj = sol.obj_val + red.c0;
        let dobj = sol.obj_val_dual + red.c0;
        ContinuousSolution {
            status,
            objective: if status == SolveStatus::Optimal { prog.objective_value(&x) } else { f64::NAN },
            primal: x,
            residuals: Residuals {
                primal: sol.r_prim,
                dual: sol.r_dual,
                gap: (pobj - dobj).abs() / pobj.abs().max(1.0),
            },
            iterations: sol.iterations,
            message: if status == SolveStatus::Optimal { None } else { Some(format!("{:?}", sol.status)) },
        }
    }
}

/// Largest scaled violation of `x` against the program (rows, cones, bounds,
/// fixings). Computed from the program data alone.
pub fn primal_residual(prog: &ConicProgram, fixings: &Fixings, x: &[f64]) -> f64 {
    if x.len() != prog.num_vars() || x.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let mut worst: f64 = 0.0;
    for row in prog.rows() {
        let scale = 1.0 + row.rhs.abs() + row.terms.iter().map(|&(v, c)| (c * x[v.0]).abs()).sum::<f64>();
        worst = worst.max(row.violation(x) / scale);
    }
    for cone in prog.cones() {
        let (head, tail) = cone.standard_form();
        let mag = 1.0
            + head.eval(x).abs()
            + tail.iter().map(|e| e.eval(x).abs()).sum::<f64>();
        worst = worst.max(cone.as_atom().violation(x) / mag);
    }
    for (i, v) in prog.vars().iter().enumerate() {
        let scale = 1.0 + x[i].abs();
        worst = worst.max((v.lb - x[i]).max(0.0) / scale).max((x[i] - v.ub).max(0.0) / scale);
    }
    for (v, val) in fixings.iter() {
        worst = worst.max((x[v.0] - val).abs() / (1.0 + val.abs()));
    }
    worst
}

/// Re-checks a backend answer. Optimal answers that fail the check are
/// downgraded to `NumericalLimit`.
pub fn verify(
    prog: &ConicProgram,
    fixings: &Fixings,
    tol: &Tolerances,
    mut sol: ContinuousSolution,
) -> ContinuousSolution {
    if sol.status != SolveStatus::Optimal {
        return sol;
    }
    let res = primal_residual(prog, fixings, &sol.primal);
    sol.residuals.primal = res;
    let obj = prog.objective_value(&sol.primal);
    let obj_ok = (obj - sol.objective).abs() <= tol.verify * (1.0 + obj.abs());
    let gap_ok = !(sol.residuals.gap > 1e3 * tol.verify);
    if res > tol.verify || !obj_ok || !gap_ok {
        sol.status = SolveStatus::NumericalLimit;
        sol.message = Some(format!(
            "rejected by residual re-check (primal {res:.3e}, objective {obj} vs reported {}, gap {:.3e})",
            sol.objective, sol.residuals.gap
        ));
    } else {
        sol.objective = obj;
    }
    sol
}

/// Routes relaxations to a registered backend and re-verifies every answer.
#[derive(Clone)]
pub struct SolverHandle {
    adapter: Arc<dyn RelaxationSolver>,
}

impl Default for SolverHandle {
    fn default() -> Self {
        Self::builtin()
    }
}

impl fmt::Debug for SolverHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SolverHandle({})", self.adapter.name())
    }
}

impl SolverHandle {
    pub fn builtin() -> Self {
        SolverHandle { adapter: Arc::new(InteriorPointSolver) }
    }

    pub fn register(adapter: impl RelaxationSolver + 'static) -> Self {
        SolverHandle { adapter: Arc::new(adapter) }
    }

    pub fn name(&self) -> &str {
        self.adapter.name()
    }

    pub fn solve(
        &self,
        prog: &ConicProgram,
        fixings: &Fixings,
        tol: &Tolerances,
        budget: Option<Duration>,
    ) -> ContinuousSolution {
        let raw = self.adapter.solve(prog, fixings, tol, budget);
        verify(prog, fixings, tol, raw)
    }
}

/// Solves the continuous relaxation of `prog` (binaries relaxed to [0, 1]
/// unless fixed) with the built-in backend.
pub fn solve_relaxation(
    prog: &ConicProgram,
    fixings: &Fixings,
    tol: &Tolerances,
    budget: Option<Duration>,
) -> ContinuousSolution {
    SolverHandle::builtin().solve(prog, fixings, tol, budget)
}
