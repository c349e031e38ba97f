//! Fixtures shared by the criterion benchmarks.

use hubloc::instance::{make_scenario, tiny_fixture, ScenarioParams};
use hubloc::{Instance, NormKind};

/// All-Euclidean scenario on a seeded tiny dataset.
pub fn euclidean_scenario(n: usize, seed: u64, tau: f64) -> Instance {
    let p = ScenarioParams { tau, rho: 0.1, alpha: 0.5, gauge: NormKind::L2, norm_c: NormKind::L2, norm_h: NormKind::L2 };
    make_scenario(&tiny_fixture(n, seed), &p).expect("fixture parameters are valid")
}
