//! Hub solutions and their direct cost evaluation, independent of any
//! formulation.

use serde::{Deserialize, Serialize};

use crate::geometry::{distance, Point};
use crate::instance::Instance;

/// Open hubs, allocations, dilations and hub positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HubSolution {
    /// `y_k`.
    pub open: Vec<bool>,
    /// Hub serving each node.
    pub assign: Vec<usize>,
    /// `r_k` (zero for closed hubs).
    pub radius: Vec<f64>,
    /// `x_k` (the node itself for closed hubs).
    pub position: Vec<Point>,
    pub objective: f64,
}

impl HubSolution {
    /// Hubs located at their nodes with zero dilation.
    pub fn at_centers(inst: &Instance, assign: Vec<usize>) -> Self {
        let n = inst.num_nodes();
        let mut open = vec![false; n];
        for &k in &assign {
            open[k] = true;
        }
        let mut sol = HubSolution {
            open,
            assign,
            radius: vec![0.0; n],
            position: inst.nodes().to_vec(),
            objective: f64::NAN,
        };
        if let Ok(c) = evaluate_solution(inst, &sol, 0.0) {
            sol.objective = c.total;
        }
        sol
    }

    pub fn hubs(&self) -> Vec<usize> {
        self.open.iter().enumerate().filter(|(_, &o)| o).map(|(k, _)| k).collect()
    }

    /// `z_ik`.
    pub fn z(&self, i: usize, k: usize) -> bool {
        self.assign[i] == k
    }
}

/// Cost components of a solution.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub collection: f64,
    pub distribution: f64,
    pub inter_hub: f64,
    pub fixed: f64,
    pub dilation: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolutionError {
    #[error("solution has {found} entries in {field}, instance has {expected} nodes")]
    Shape { field: &'static str, found: usize, expected: usize },
    #[error("node {i} allocated to closed hub {k}")]
    ClosedHub { i: usize, k: usize },
    #[error("open hub {k} is not allocated to itself")]
    NotSelfAllocated { k: usize },
    #[error("allocation ({i},{k}) is not an admissible link")]
    Inadmissible { i: usize, k: usize },
    #[error("hub {k} lies outside its neighborhood: gauge {gauge} > r {r}")]
    Membership { k: usize, gauge: f64, r: f64 },
    #[error("hub {k} dilation {r} outside [0, {max}]")]
    Radius { k: usize, r: f64, max: f64 },
}

/// Evaluates routing and set-up costs straight from their definitions.
///
/// `tol` is the slack allowed on membership and dilation bounds.
pub fn evaluate_solution(inst: &Instance, sol: &HubSolution, tol: f64) -> Result<CostBreakdown, SolutionError> {
    let n = inst.num_nodes();
    for (field, found) in [
        ("open", sol.open.len()),
        ("assign", sol.assign.len()),
        ("radius", sol.radius.len()),
        ("position", sol.position.len()),
    ] {
        if found != n {
            return Err(SolutionError::Shape { field, found, expected: n });
        }
    }
    for (i, &k) in sol.assign.iter().enumerate() {
        if k >= n || !sol.open[k] {
            return Err(SolutionError::ClosedHub { i, k });
        }
        if !inst.admissible(i, k) {
            return Err(SolutionError::Inadmissible { i, k });
        }
    }
    let mut c = CostBreakdown::default();
    for k in 0..n {
        if !sol.open[k] {
            continue;
        }
        if sol.assign[k] != k {
            return Err(SolutionError::NotSelfAllocated { k });
        }
        let nb = inst.neighborhood(k);
        let r = sol.radius[k];
        if !(r >= -tol && r <= nb.max_radius + tol) {
            return Err(SolutionError::Radius { k, r, max: nb.max_radius });
        }
        let gauge = nb.gauge_of(&sol.position[k]);
        if gauge > r.max(0.0) + tol {
            return Err(SolutionError::Membership { k, gauge, r });
        }
        c.fixed += inst.fixed_cost(k);
        c.dilation += inst.var_cost(k).eval(r.max(0.0));
    }
    for i in 0..n {
        let x = &sol.position[sol.assign[i]];
        c.collection += inst.origin_total(i) * distance(inst.norm_c(), inst.node(i), x);
        c.distribution += inst.dest_total(i) * distance(inst.norm_d(), x, inst.node(i));
    }
    for i in 0..n {
        for j in 0..n {
            let (k, m) = (sol.assign[i], sol.assign[j]);
            let w = inst.flow(i, j);
            if k != m && w != 0.0 {
                c.inter_hub += w * inst.alpha() * distance(inst.norm_h(), &sol.position[k], &sol.position[m]);
            }
        }
    }
    c.total = c.collection + c.distribution + c.inter_hub + c.fixed + c.dilation;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::NormKind;
    use crate::instance::{make_scenario, tiny_fixture, ScenarioParams};

    fn inst(alpha: f64) -> Instance {
        let p = ScenarioParams {
            tau: 1.0,
            rho: 0.1,
            alpha,
            gauge: NormKind::L2,
            norm_c: NormKind::L2,
            norm_h: NormKind::L2,
        };
        make_scenario(&tiny_fixture(4, 5), &p).unwrap()
    }

    #[test]
    fn star_cost_matches_closed_form() {
        let inst = inst(0.5);
        let sol = HubSolution::at_centers(&inst, vec![0; 4]);
        let c = evaluate_solution(&inst, &sol, 0.0).unwrap();
        let expect: f64 = inst.fixed_cost(0)
            + (0..4)
                .map(|i| (inst.origin_total(i) + inst.dest_total(i)) * distance(NormKind::L2, inst.node(i), inst.node(0)))
                .sum::<f64>();
        assert!((c.total - expect).abs() < 1e-9);
        assert_eq!(c.inter_hub, 0.0);
        assert_eq!(sol.objective, c.total);
    }

    #[test]
    fn tiny_alpha_makes_hub_arcs_nearly_free() {
        let inst = inst(1e-12);
        let sol = HubSolution::at_centers(&inst, vec![0, 1, 0, 1]);
        let c = evaluate_solution(&inst, &sol, 0.0).unwrap();
        assert!(c.inter_hub < 1e-8);
    }

    #[test]
    fn structural_errors_are_reported() {
        let inst = inst(0.5);
        let mut sol = HubSolution::at_centers(&inst, vec![0, 0, 0, 0]);
        sol.assign[1] = 2;
        assert_eq!(evaluate_solution(&inst, &sol, 1e-9), Err(SolutionError::ClosedHub { i: 1, k: 2 }));
        let mut sol = HubSolution::at_centers(&inst, vec![0, 0, 0, 0]);
        sol.position[0].0[0] += 0.5;
        assert!(matches!(evaluate_solution(&inst, &sol, 1e-9), Err(SolutionError::Membership { k: 0, .. })));
        sol.radius[0] = 0.5;
        assert!(evaluate_solution(&inst, &sol, 1e-9).is_ok());
    }
}
