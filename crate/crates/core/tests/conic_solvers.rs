use std::time::Duration;

use hubloc::conic::{
    solve_relaxation, Affine, ConicProgram, ContinuousSolution, DenseBarrierSolver, Fixings, LinearRow,
    RelaxationSolver, Residuals, Sense, SocAtom, SolveStatus, SolverHandle, Tolerances, VarTag,
};
use hubloc::geometry::power_cone_rep;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tol() -> Tolerances {
    Tolerances::default()
}

fn tight() -> Tolerances {
    Tolerances { feas: 1e-9, gap: 1e-9, ..Tolerances::default() }
}

#[test]
fn distance_to_fixed_point() {
    let mut prog = ConicProgram::new();
    let t = prog.add_aux(0.0, f64::INFINITY);
    prog.set_objective(t, 1.0);
    prog.add_atom(SocAtom::Soc { t: Affine::var(t), u: vec![Affine::constant(3.0), Affine::constant(4.0)] });
    let sol = solve_relaxation(&prog, &Fixings::new(), &tol(), None);
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.value(t) - 5.0).abs() < 1e-6);
}

#[test]
fn cube_through_power_chain() {
    let mut prog = ConicProgram::new();
    let r = prog.add_continuous(VarTag::R(0), 0.0, 10.0);
    let g = prog.add_continuous(VarTag::Gamma(0), 0.0, f64::INFINITY);
    prog.set_objective(g, 1.0);
    let atoms = power_cone_rep(&mut prog, 3, r, g, Some(0)).unwrap();
    prog.add_atoms(atoms);
    let sol = solve_relaxation(&prog, &Fixings::new().with(r, 2.0), &tight(), None);
    assert!(sol.is_optimal());
    assert!((sol.objective - 8.0).abs() < 1e-6, "{} {:?}", sol.objective, sol.primal);
}

#[test]
fn empty_box_is_infeasible() {
    let mut prog = ConicProgram::new();
    let x = prog.add_aux(f64::NEG_INFINITY, f64::INFINITY);
    prog.set_objective(x, 1.0);
    prog.add_row(LinearRow::new(vec![(x, 1.0)], Sense::Ge, 1.0));
    prog.add_row(LinearRow::new(vec![(x, 1.0)], Sense::Le, 0.0));
    let sol = solve_relaxation(&prog, &Fixings::new(), &tol(), None);
    assert_eq!(sol.status, SolveStatus::Infeasible);
    let sol = SolverHandle::register(DenseBarrierSolver).solve(&prog, &Fixings::new(), &tol(), None);
    assert_eq!(sol.status, SolveStatus::Infeasible);
}

struct Liar;

impl RelaxationSolver for Liar {
    fn name(&self) -> &str {
        "liar"
    }

    fn solve(&self, prog: &ConicProgram, _: &Fixings, _: &Tolerances, _: Option<Duration>) -> ContinuousSolution {
        ContinuousSolution {
            status: SolveStatus::Optimal,
            primal: vec![0.0; prog.num_vars()],
            objective: 0.0,
            residuals: Residuals::default(),
            iterations: 1,
            message: None,
        }
    }
}

#[test]
fn adapter_answers_are_rechecked() {
    let mut prog = ConicProgram::new();
    let x = prog.add_aux(f64::NEG_INFINITY, f64::INFINITY);
    prog.set_objective(x, 1.0);
    prog.add_row(LinearRow::new(vec![(x, 1.0)], Sense::Ge, 1.0));
    let sol = SolverHandle::register(Liar).solve(&prog, &Fixings::new(), &tol(), None);
    assert_eq!(sol.status, SolveStatus::NumericalLimit);
    assert!(sol.message.unwrap().contains("re-check"));
}

#[test]
fn builtin_handle_matches_direct_call() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (prog, _) = random_socp(&mut rng, 4);
    let a = solve_relaxation(&prog, &Fixings::new(), &tol(), None);
    let b = SolverHandle::builtin().solve(&prog, &Fixings::new(), &tol(), None);
    assert_eq!(a.status, b.status);
    assert_eq!(a.objective, b.objective);
    assert_eq!(a.primal, b.primal);
}

/// Random bounded SOCP with a known strictly feasible point.
fn random_socp(rng: &mut ChaCha8Rng, n: usize) -> (ConicProgram, Vec<f64>) {
    let mut prog = ConicProgram::new();
    let xs: Vec<_> = (0..n).map(|_| prog.add_aux(-5.0, 5.0)).collect();
    let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    for &x in &xs {
        prog.set_objective(x, rng.gen_range(-1.0..1.0));
    }
    let affine = |rng: &mut ChaCha8Rng| {
        let mut e = Affine::constant(rng.gen_range(-1.0..1.0));
        for &x in &xs {
            e = e.plus(&Affine::scaled_var(x, rng.gen_range(-1.0..1.0)));
        }
        e
    };
    for _ in 0..rng.gen_range(1..4) {
        let u: Vec<Affine> = (0..rng.gen_range(1..4)).map(|_| affine(rng)).collect();
        let mut t = affine(rng);
        let probe: Vec<f64> = x0.clone();
        let norm = u.iter().map(|e| e.eval(&probe).powi(2)).sum::<f64>().sqrt();
        t.constant += norm - t.eval(&probe) + rng.gen_range(0.1..1.0);
        prog.add_atom(SocAtom::Soc { t, u });
    }
    for _ in 0..rng.gen_range(0..3) {
        let e = affine(rng);
        let v = e.eval(&x0);
        let terms = e.terms.clone();
        prog.add_row(LinearRow::new(terms, Sense::Le, v - e.constant + rng.gen_range(0.1..1.0)));
    }
    (prog, x0)
}

#[test]
fn solvers_agree_on_random_socps() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let dense = SolverHandle::register(DenseBarrierSolver);
    for trial in 0..20 {
        let n = rng.gen_range(2..6);
        let (prog, x0) = random_socp(&mut rng, n);
        let a = solve_relaxation(&prog, &Fixings::new(), &tol(), None);
        let b = dense.solve(&prog, &Fixings::new(), &tol(), None);
        assert!(a.is_optimal(), "trial {trial}: builtin {:?}", a.message);
        assert!(b.is_optimal(), "trial {trial}: dense {:?}", b.message);
        assert!((a.objective - b.objective).abs() <= 1e-5 * (1.0 + a.objective.abs()), "trial {trial}: {} vs {}", a.objective, b.objective);
        // weak duality against the hand-built feasible point
        assert!(a.objective <= prog.objective_value(&x0) + 1e-6);
    }
}

#[test]
fn resolving_at_the_optimum_is_idempotent() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..5 {
        let (prog, _) = random_socp(&mut rng, 3);
        let first = solve_relaxation(&prog, &Fixings::new(), &tol(), None);
        assert!(first.is_optimal());
        let mut pinned = prog.clone();
        for v in 0..prog.num_vars() {
            let val = first.primal[v];
            let var = hubloc::conic::VarId(v);
            let (lb, ub) = (prog.var(var).lb, prog.var(var).ub);
            pinned.set_bounds(var, (val - 1e-3).max(lb), (val + 1e-3).min(ub));
        }
        let again = solve_relaxation(&pinned, &Fixings::new(), &tol(), None);
        assert!(again.is_optimal());
        assert!((again.objective - first.objective).abs() < 1e-7 * (1.0 + first.objective.abs()));
    }
}

#[test]
fn manufactured_ball_optimum() {
    // min c'x over the unit ball: x* = -c/|c|, dual multiplier |c|
    let c = [3.0, -1.0, 2.0];
    let mut prog = ConicProgram::new();
    let xs: Vec<_> = c.iter().map(|&ci| {
        let v = prog.add_aux(f64::NEG_INFINITY, f64::INFINITY);
        prog.set_objective(v, ci);
        v
    }).collect();
    prog.add_atom(SocAtom::Soc { t: Affine::constant(1.0), u: xs.iter().map(|&v| Affine::var(v)).collect() });
    let norm = c.iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
    for handle in [SolverHandle::builtin(), SolverHandle::register(DenseBarrierSolver)] {
        let sol = handle.solve(&prog, &Fixings::new(), &tol(), None);
        assert!(sol.is_optimal(), "{}", handle.name());
        assert!((sol.objective + norm).abs() < 1e-6, "{}: {}", handle.name(), sol.objective);
    }
}
