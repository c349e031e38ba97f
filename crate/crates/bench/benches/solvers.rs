use criterion::{criterion_group, criterion_main, Criterion};

use hubloc::bnc::{separate_all, solve_bnc, BncConfig, NodePoint};
use hubloc::conic::{solve_relaxation, Fixings, Tolerances};
use hubloc::formulations::{build_f1, build_f2_master, FormulationOptions};
use hubloc::oracle::{brute_force, OracleOptions};
use hubloc::solution::HubSolution;
use hubloc_bench::euclidean_scenario;

fn relaxations(c: &mut Criterion) {
    let inst = euclidean_scenario(8, 1, 1.0);
    let f1 = build_f1(&inst, FormulationOptions::default());
    let f2 = build_f2_master(&inst, &[], FormulationOptions::default());
    let tol = Tolerances::default();
    c.bench_function("root relaxation compact n=8", |b| b.iter(|| solve_relaxation(&f1.prog, &Fixings::new(), &tol, None)));
    c.bench_function("root relaxation master n=8", |b| b.iter(|| solve_relaxation(&f2.prog, &Fixings::new(), &tol, None)));
}

fn separation(c: &mut Criterion) {
    let inst = euclidean_scenario(10, 2, 1.0);
    let sol = HubSolution::at_centers(&inst, vec![0, 0, 2, 2, 4, 4, 6, 6, 8, 8]);
    let mut point = NodePoint::priced(&inst, &sol);
    point.mu.clear();
    c.bench_function("separate_all n=10, 5 hubs", |b| b.iter(|| separate_all(&inst, &point)));
}

fn searches(c: &mut Criterion) {
    let mut group = c.benchmark_group("exact");
    group.sample_size(10);
    let inst = euclidean_scenario(4, 3, 1.0);
    group.bench_function("brute force n=4", |b| b.iter(|| brute_force(&inst, &OracleOptions { starts: 0, ..Default::default() })));
    let inst = euclidean_scenario(5, 3, 1.0);
    group.bench_function("branch-and-cut n=5", |b| b.iter(|| solve_bnc(&inst, &BncConfig::default())));
    group.finish();
}

criterion_group!(benches, relaxations, separation, searches);
criterion_main!(benches);
