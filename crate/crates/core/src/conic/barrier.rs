//! Dense log-barrier method for small linear + SOC programs.
//!
//! Shares nothing with the interior-point backend except the program
//! reduction; it exists as an independent route for cross-checking
//! relaxation answers and as an example adapter.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use super::program::ConicProgram;
use super::solve::{
    reduce, ContinuousSolution, Fixings, ReduceOutcome, RelaxationSolver, Residuals, SolveStatus,
    Tolerances,
};

type Row = (Vec<(usize, f64)>, f64);

struct Problem {
    n: usize,
    c: DVector<f64>,
    eq: Vec<Row>,
    /// `a x <= b`
    ineq: Vec<Row>,
    /// entries `s_i = k_i - a_i x`, head first; require `s_0 >= ||s_1..||`
    socs: Vec<Vec<Row>>,
}

fn dot(lin: &[(usize, f64)], x: &DVector<f64>) -> f64 {
    lin.iter().map(|&(j, a)| a * x[j]).sum()
}

impl Problem {
    fn degree(&self) -> f64 {
        (self.ineq.len() + 2 * self.socs.len()) as f64
    }

    fn strictly_feasible(&self, x: &DVector<f64>) -> bool {
        self.ineq.iter().all(|(lin, b)| b - dot(lin, x) > 0.0)
            && self.socs.iter().all(|blk| {
                let s: Vec<f64> = blk.iter().map(|(lin, k)| k - dot(lin, x)).collect();
                let tail: f64 = s[1..].iter().map(|v| v * v).sum();
                s[0] > 0.0 && s[0] * s[0] - tail > 0.0
            })
    }

    /// Barrier value, gradient and Hessian at a strictly feasible point.
    fn barrier(&self, x: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let n = self.n;
        let mut val = 0.0;
        let mut g = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        for (lin, b) in &self.ineq {
            let s = b - dot(lin, x);
            val -= s.ln();
            for &(j, a) in lin {
                g[j] += a / s;
                for &(k, a2) in lin {
                    h[(j, k)] += a * a2 / (s * s);
                }
            }
        }
        for blk in &self.socs {
            let s: Vec<f64> = blk.iter().map(|(lin, k)| k - dot(lin, x)).collect();
            let psi = s[0] * s[0] - s[1..].iter().map(|v| v * v).sum::<f64>();
            val -= psi.ln();
            // js = J s with J = diag(1, -1, ..., -1)
            let js: Vec<f64> = s.iter().enumerate().map(|(i, v)| if i == 0 { *v } else { -v }).collect();
            // d/ds = -2 J s / psi ; d2/ds2 = -2 J / psi + 4 (Js)(Js)' / psi^2 ; ds/dx = -A
            let m = blk.len();
            let mut gs = vec![0.0; m];
            for i in 0..m {
                gs[i] = -2.0 * js[i] / psi;
            }
            let mut hs = DMatrix::zeros(m, m);
            for i in 0..m {
                for k in 0..m {
                    hs[(i, k)] = 4.0 * js[i] * js[k] / (psi * psi);
                }
                hs[(i, i)] += if i == 0 { -2.0 / psi } else { 2.0 / psi };
            }
            for (i, (lin, _)) in blk.iter().enumerate() {
                for &(j, a) in lin {
                    g[j] -= a * gs[i];
                }
            }
            for (i, (lin_i, _)) in blk.iter().enumerate() {
                for (k, (lin_k, _)) in blk.iter().enumerate() {
                    let w = hs[(i, k)];
                    if w == 0.0 {
                        continue;
                    }
                    for &(j, a) in lin_i {
                        for &(l, b) in lin_k {
                            h[(j, l)] += a * b * w;
                        }
                    }
                }
            }
        }
        (val, g, h)
    }

    fn eq_matrix(&self) -> (DMatrix<f64>, DVector<f64>) {
        let p = self.eq.len();
        let mut e = DMatrix::zeros(p, self.n);
        let mut rhs = DVector::zeros(p);
        for (r, (lin, b)) in self.eq.iter().enumerate() {
            for &(j, a) in lin {
                e[(r, j)] += a;
            }
            rhs[r] = *b;
        }
        (e, rhs)
    }
}

enum Outcome {
    Converged(DVector<f64>),
    /// Stopped early because the stop predicate fired.
    Stopped(DVector<f64>),
    Unbounded,
    Failed(&'static str),
    Timeout,
}

/// Path-following barrier iterations from a strictly feasible `x` that
/// satisfies the equalities.
fn path_follow(
    prob: &Problem,
    mut x: DVector<f64>,
    gap_tol: f64,
    deadline: Option<Instant>,
    stop: &dyn Fn(&DVector<f64>) -> bool,
) -> Outcome {
    let (e, _) = prob.eq_matrix();
    let p = e.nrows();
    let n = prob.n;
    let deg = prob.degree().max(1.0);
    let mut t = 1.0;
    // scale the initial weight to the objective size
    let cn = prob.c.norm();
    if cn > 0.0 {
        t = (deg / cn).max(1e-8);
    }
    for _outer in 0..200 {
        for _newton in 0..100 {
            if deadline.is_some_and(|d| Instant::now() > d) {
                return Outcome::Timeout;
            }
            let (_, gb, hb) = prob.barrier(&x);
            let g = &prob.c * t + gb;
            let mut kkt = DMatrix::zeros(n + p, n + p);
            let reg = 1e-12 * (1.0 + hb.diagonal().amax());
            kkt.view_mut((0, 0), (n, n)).copy_from(&hb);
            for i in 0..n {
                kkt[(i, i)] += reg;
            }
            if p > 0 {
                kkt.view_mut((0, n), (n, p)).copy_from(&e.transpose());
                kkt.view_mut((n, 0), (p, n)).copy_from(&e);
            }
            let mut rhs = DVector::zeros(n + p);
            rhs.rows_mut(0, n).copy_from(&(-&g));
            let sol = match kkt.clone().lu().solve(&rhs) {
                Some(s) => s,
                None => match kkt.svd(true, true).solve(&rhs, 1e-14) {
                    Ok(s) => s,
                    Err(_) => return Outcome::Failed("singular Newton system"),
                },
            };
            let dx = sol.rows(0, n).into_owned();
            let lambda2 = -g.dot(&dx);
            if lambda2 / 2.0 <= 1e-10 {
                break;
            }
            let f0 = t * prob.c.dot(&x) + prob.barrier(&x).0;
            let mut step = 1.0;
            loop {
                let cand = &x + &dx * step;
                if prob.strictly_feasible(&cand) {
                    let f1 = t * prob.c.dot(&cand) + prob.barrier(&cand).0;
                    if f1 <= f0 - 0.25 * step * lambda2 {
                        x = cand;
                        break;
                    }
                }
                step *= 0.5;
                if step < 1e-14 {
                    break;
                }
            }
            if stop(&x) {
                return Outcome::Stopped(x);
            }
            if prob.c.dot(&x) < -1e12 {
                return Outcome::Unbounded;
            }
            if step < 1e-14 {
                break;
            }
        }
        let obj = prob.c.dot(&x);
        if deg / t <= gap_tol * obj.abs().max(1.0) {
            return Outcome::Converged(x);
        }
        t *= 10.0;
    }
    Outcome::Failed("outer iteration limit")
}

/// Reference adapter: dense two-phase log-barrier method. Suitable for
/// programs with up to a few hundred free variables.
#[derive(Debug, Clone, Copy, Default)]
pub struct DenseBarrierSolver;

impl RelaxationSolver for DenseBarrierSolver {
    fn name(&self) -> &str {
        "dense-barrier"
    }

    fn solve(
        &self,
        prog: &ConicProgram,
        fixings: &Fixings,
        tol: &Tolerances,
        budget: Option<Duration>,
    ) -> ContinuousSolution {
        let nvar = prog.num_vars();
        let deadline = budget.map(|b| Instant::now() + b);
        let red = match reduce(prog, fixings) {
            ReduceOutcome::Ready(r) => r,
            ReduceOutcome::Infeasible(m) => return ContinuousSolution::failed(SolveStatus::Infeasible, nvar, m),
        };
        let n = red.free.len();
        let prob = Problem {
            n,
            c: DVector::from_vec(red.c.clone()),
            eq: red.eq.clone(),
            ineq: red.ineq.clone(),
            socs: red.socs.clone(),
        };

        // point satisfying the equalities
        let (e, eb) = prob.eq_matrix();
        let x0 = if e.nrows() > 0 {
            match e.clone().svd(true, true).solve(&eb, 1e-12) {
                Ok(v) => v,
                Err(_) => return ContinuousSolution::failed(SolveStatus::NumericalLimit, nvar, "equality solve failed"),
            }
        } else {
            DVector::zeros(n)
        };
        if e.nrows() > 0 && (&e * &x0 - &eb).amax() > 1e-8 * (1.0 + eb.amax()) {
            return ContinuousSolution::failed(SolveStatus::Infeasible, nvar, "inconsistent equalities");
        }

        let x_start = if prob.strictly_feasible(&x0) {
            x0
        } else {
            // phase I: minimize sigma with every inequality relaxed by sigma
            let mut worst: f64 = 0.0;
            for (lin, b) in &prob.ineq {
                worst = worst.max(dot(lin, &x0) - b);
            }
            for blk in &prob.socs {
                let s: Vec<f64> = blk.iter().map(|(lin, k)| k - dot(lin, &x0)).collect();
                let tail = s[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
                worst = worst.max(tail - s[0]);
            }
            let sigma = n;
            let mut ineq = prob.ineq.clone();
            for (lin, _) in &mut ineq {
                lin.push((sigma, -1.0));
            }
            // keep phase I bounded below
            ineq.push((vec![(sigma, -1.0)], 1.0));
            let mut socs = prob.socs.clone();
            for blk in &mut socs {
                blk[0].0.push((sigma, -1.0));
            }
            let mut c = DVector::zeros(n + 1);
            c[n] = 1.0;
            let eq = prob.eq.clone();
            let p1 = Problem { n: n + 1, c, eq, ineq, socs };
            let mut z0 = x0.clone().insert_row(n, 0.0);
            z0[n] = worst.abs() * 1.5 + 1.0;
            let stop = |z: &DVector<f64>| z[n] < -1e-7;
            match path_follow(&p1, z0, 1e-10, deadline, &stop) {
                Outcome::Stopped(z) => z.rows(0, n).into_owned(),
                Outcome::Converged(_) => {
                    return ContinuousSolution::failed(SolveStatus::Infeasible, nvar, "phase I found no interior point")
                }
                Outcome::Timeout => return ContinuousSolution::failed(SolveStatus::TimeLimit, nvar, "time limit"),
                Outcome::Unbounded | Outcome::Failed(_) => {
                    return ContinuousSolution::failed(SolveStatus::NumericalLimit, nvar, "phase I failed")
                }
            }
        };

        let never = |_: &DVector<f64>| false;
        match path_follow(&prob, x_start, tol.gap.min(1e-9), deadline, &never) {
            Outcome::Converged(xr) | Outcome::Stopped(xr) => {
                let x = red.expand(xr.as_slice());
                ContinuousSolution {
                    status: SolveStatus::Optimal,
                    objective: prog.objective_value(&x),
                    primal: x,
                    residuals: Residuals { primal: 0.0, dual: f64::NAN, gap: f64::NAN },
                    iterations: 0,
                    message: None,
                }
            }
            Outcome::Unbounded => ContinuousSolution::failed(SolveStatus::Unbounded, nvar, "objective unbounded"),
            Outcome::Timeout => ContinuousSolution::failed(SolveStatus::TimeLimit, nvar, "time limit"),
            Outcome::Failed(m) => ContinuousSolution::failed(SolveStatus::NumericalLimit, nvar, m),
        }
    }
}
