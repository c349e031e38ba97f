//! Mixed-binary conic models of the problem.
//!
//! Every builder starts from the same core (allocation, hub flags,
//! neighborhood membership, set-up costs) and adds one way of pricing routes:
//!
//! * compact: big-M linearized access costs `eta` plus one `nu` per
//!   (origin, hub, destination, hub) quadruple with flow;
//! * master: the same access costs plus aggregated inter-hub costs `mu_km`
//!   priced by lazily added cuts over `theta_ikm`.

use std::collections::BTreeSet;

use crate::bnc::CutRecord;
use crate::conic::{Affine, ConicProgram, LinearRow, Sense, VarId, VarKind, VarTag};
use crate::geometry::{big_m_bounds, emit_distance_epigraph, emit_membership, power_cone_rep, BigMTables, PointExpr, DEFAULT_BIG_M_FACTOR};
use crate::instance::{Instance, SetupKind};
use crate::solution::HubSolution;

/// Build switches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormulationOptions {
    /// Multiplier on `R_k` in the access-cost big-M bounds.
    pub big_m_factor: f64,
    /// Share one `eta` per (i, k) when collection and distribution use the
    /// same norm.
    pub merge_eta: bool,
    /// Add `eta >= L z`, `theta >= alpha L z` and the matching `nu` rows,
    /// with `L` the smallest distance over the neighborhoods.
    pub distance_floors: bool,
    /// Add perspective rows for the access legs: a shifted copy
    /// `q_ik in z_ik R_k B`, the link `||x_k - a_k - q_ik|| <= R_k (1 - z_ik)`
    /// and `eta >= ||z_ik (a_i - a_k) - q_ik||`.
    pub perspective_access: bool,
}

impl Default for FormulationOptions {
    fn default() -> Self {
        FormulationOptions { big_m_factor: DEFAULT_BIG_M_FACTOR, merge_eta: true, distance_floors: true, perspective_access: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormulationKind {
    /// Compact model, one two-allocation big-M row per `nu`.
    Compact,
    /// Compact model with the `nu` rows split into single-allocation rows.
    CompactSplit,
    /// Master model for branch-and-cut.
    Master,
}

/// A built model plus the data needed to read solutions back and extend it.
#[derive(Debug, Clone)]
pub struct Formulation {
    pub kind: FormulationKind,
    pub prog: ConicProgram,
    pub big_m: BigMTables,
    pub options: FormulationOptions,
    n: usize,
    dim: usize,
    alpha: f64,
    norm_h: crate::geometry::NormKind,
    cut_keys: BTreeSet<(usize, usize, Vec<(usize, usize)>)>,
}

impl Formulation {
    pub fn num_nodes(&self) -> usize {
        self.n
    }

    fn get(&self, tag: VarTag) -> VarId {
        self.prog.lookup(tag).unwrap_or_else(|| panic!("model has no variable {tag:?}"))
    }

    /// `z_ik`, `None` for inadmissible links.
    pub fn z(&self, i: usize, k: usize) -> Option<VarId> {
        self.prog.lookup(VarTag::Z(i, k))
    }

    pub fn y(&self, k: usize) -> VarId {
        self.get(VarTag::Y(k))
    }

    pub fn r(&self, k: usize) -> VarId {
        self.get(VarTag::R(k))
    }

    pub fn x(&self, k: usize) -> Vec<VarId> {
        (0..self.dim).map(|c| self.get(VarTag::X(k, c))).collect()
    }

    pub fn mu(&self, k: usize, m: usize) -> Option<VarId> {
        self.prog.lookup(VarTag::Mu(k, m))
    }

    /// Number of cuts added through [`Formulation::add_cut`].
    pub fn num_cuts(&self) -> usize {
        self.cut_keys.len()
    }

    pub fn has_cut(&self, cut: &CutRecord) -> bool {
        self.cut_keys.contains(&cut.key())
    }

    /// Reads hubs, allocations, radii and positions from a primal vector.
    /// Allocations are rounded to the largest `z_ik` of each node.
    pub fn extract(&self, inst: &Instance, x: &[f64]) -> HubSolution {
        let n = self.n;
        let assign: Vec<usize> = (0..n)
            .map(|i| {
                (0..n)
                    .filter_map(|k| self.z(i, k).map(|v| (k, x[v.index()])))
                    .fold((i, f64::NEG_INFINITY), |best, (k, v)| if v > best.1 { (k, v) } else { best })
                    .0
            })
            .collect();
        let mut open = vec![false; n];
        for &k in &assign {
            open[k] = true;
        }
        let radius = (0..n).map(|k| if open[k] { x[self.r(k).index()].max(0.0) } else { 0.0 }).collect();
        let position = (0..n)
            .map(|k| {
                if open[k] {
                    crate::geometry::Point(self.x(k).iter().map(|v| x[v.index()]).collect())
                } else {
                    inst.node(k).clone()
                }
            })
            .collect();
        HubSolution { open, assign, radius, position, objective: self.prog.objective_value(x) }
    }

    fn hub_distance(&mut self, k: usize, m: usize) -> VarId {
        let key = VarTag::DistH(k.min(m), k.max(m));
        if let Some(v) = self.prog.lookup(key) {
            return v;
        }
        let d = self.prog.add_continuous(key, 0.0, f64::INFINITY);
        let (xa, xb) = (PointExpr::vars(&self.x(k)), PointExpr::vars(&self.x(m)));
        let atoms = emit_distance_epigraph(&mut self.prog, self.norm_h, &xa, &xb, &Affine::var(d))
            .expect("hub coordinates share the instance dimension");
        self.prog.add_atoms(atoms);
        d
    }

    /// `theta_ikm >= alpha * dH_km - alpha * DH_km * (1 - z_ik)`, created on
    /// first use.
    fn theta(&mut self, i: usize, k: usize, m: usize) -> VarId {
        if let Some(v) = self.prog.lookup(VarTag::Theta(i, k, m)) {
            return v;
        }
        let d = self.hub_distance(k, m);
        let z = self.z(i, k).expect("theta needs an admissible allocation");
        let big = self.alpha * self.big_m.hub[k][m];
        let t = self.prog.add_continuous(VarTag::Theta(i, k, m), 0.0, f64::INFINITY);
        self.prog.add_row(LinearRow::new(vec![(t, 1.0), (d, -self.alpha), (z, -big)], Sense::Ge, -big));
        let floor = self.alpha * self.big_m.hub_floor[k][m];
        if self.options.distance_floors && floor > 0.0 {
            self.prog.add_row(LinearRow::new(vec![(t, 1.0), (z, -floor)], Sense::Ge, 0.0));
        }
        t
    }

    /// Adds the aggregated row
    /// `mu_km >= sum O_i(S) theta_ikm + sum D_j(S) theta_jmk - w(S) alpha dH_km`.
    /// Returns `false` when the same `(k, m, S)` is already present.
    pub fn add_cut(&mut self, cut: &CutRecord) -> bool {
        assert_eq!(self.kind, FormulationKind::Master, "cuts belong to the master model");
        if !self.cut_keys.insert(cut.key()) {
            return false;
        }
        let (k, m) = (cut.k, cut.m);
        let mu = self.mu(k, m).expect("cut on a non-arc");
        let mut terms = vec![(mu, 1.0)];
        for &(i, o) in &cut.origin_weights {
            let t = self.theta(i, k, m);
            terms.push((t, -o));
        }
        for &(j, d) in &cut.dest_weights {
            let t = self.theta(j, m, k);
            terms.push((t, -d));
        }
        let dh = self.hub_distance(k, m);
        terms.push((dh, cut.total * self.alpha));
        self.prog.add_row(LinearRow::new(terms, Sense::Ge, 0.0));
        true
    }
}

/// Allocation, linking, membership, dilation bounds and set-up costs.
pub fn build_common(inst: &Instance, options: FormulationOptions, kind: FormulationKind) -> Formulation {
    let n = inst.num_nodes();
    let dim = inst.dim();
    let mut prog = ConicProgram::new();
    let y: Vec<VarId> = (0..n)
        .map(|k| {
            let v = prog.add_var(VarTag::Y(k), 0.0, 1.0, VarKind::Binary);
            prog.alias(VarTag::Z(k, k), v);
            prog.set_objective(v, inst.fixed_cost(k));
            v
        })
        .collect();
    for i in 0..n {
        let mut cover = vec![(y[i], 1.0)];
        for k in (0..n).filter(|&k| k != i && inst.admissible(i, k)) {
            let z = prog.add_var(VarTag::Z(i, k), 0.0, 1.0, VarKind::Binary);
            cover.push((z, 1.0));
            prog.add_row(LinearRow::new(vec![(z, 1.0), (y[k], -1.0)], Sense::Le, 0.0));
        }
        prog.add_row(LinearRow::new(cover, Sense::Eq, 1.0));
    }
    for k in 0..n {
        let nb = inst.neighborhood(k);
        let r = prog.add_continuous(VarTag::R(k), 0.0, nb.max_radius);
        let x: Vec<VarId> = (0..dim)
            .map(|c| {
                let a = nb.center.0[c];
                prog.add_continuous(VarTag::X(k, c), a - nb.max_radius, a + nb.max_radius)
            })
            .collect();
        let atoms = emit_membership(&mut prog, nb, &PointExpr::vars(&x), &Affine::var(r))
            .expect("neighborhood centers share the instance dimension");
        prog.add_atoms(atoms);
        let g = inst.var_cost(k);
        match g.kind {
            SetupKind::Linear => prog.add_objective(r, g.coeff),
            SetupKind::Power => {
                let gamma = prog.add_continuous(VarTag::Gamma(k), 0.0, f64::INFINITY);
                let atoms = power_cone_rep(&mut prog, g.degree, r, gamma, Some(k)).expect("validated degree");
                prog.add_atoms(atoms);
                prog.add_objective(gamma, g.coeff);
            }
        }
    }
    Formulation {
        kind,
        prog,
        big_m: big_m_bounds(inst, options.big_m_factor),
        options,
        n,
        dim,
        alpha: inst.alpha(),
        norm_h: inst.norm_h(),
        cut_keys: BTreeSet::new(),
    }
}

/// `eta_ik >= d_ik - D_ik (1 - z_ik)` with `d_ik >= ||a_i - x_k||`, priced by
/// `O_i` (collection) and `D_i` (distribution), or merged.
fn add_access_costs(f: &mut Formulation, inst: &Instance) {
    let n = inst.num_nodes();
    let merged = f.options.merge_eta && inst.norm_c() == inst.norm_d();
    for i in 0..n {
        let a = PointExpr::fixed(inst.node(i));
        let legs: Vec<(VarTag, VarTag, crate::geometry::NormKind, f64, bool)> = if merged {
            vec![(VarTag::DistC(i, 0), VarTag::EtaC(i, 0), inst.norm_c(), inst.origin_total(i) + inst.dest_total(i), true)]
        } else {
            vec![
                (VarTag::DistC(i, 0), VarTag::EtaC(i, 0), inst.norm_c(), inst.origin_total(i), true),
                (VarTag::DistD(i, 0), VarTag::EtaD(i, 0), inst.norm_d(), inst.dest_total(i), false),
            ]
        };
        for k in (0..n).filter(|&k| inst.admissible(i, k)) {
            let z = f.z(i, k).expect("admissible link");
            let xk = PointExpr::vars(&f.x(k));
            let shifted = if f.options.perspective_access {
                Some(add_shifted_copy(f, inst, i, k, z, &xk))
            } else {
                None
            };
            for (dtag, etag, norm, weight, collect) in &legs {
                if *weight == 0.0 {
                    continue;
                }
                let (dtag, etag) = (retag(*dtag, k), retag(*etag, k));
                let (big, floor) = if *collect {
                    (f.big_m.collect[i][k], f.big_m.collect_floor[i][k])
                } else {
                    (f.big_m.distribute[i][k], f.big_m.distribute_floor[i][k])
                };
                let d = f.prog.add_continuous(dtag, 0.0, f64::INFINITY);
                let atoms = emit_distance_epigraph(&mut f.prog, *norm, &a, &xk, &Affine::var(d))
                    .expect("node coordinates share the instance dimension");
                f.prog.add_atoms(atoms);
                let eta = f.prog.add_continuous(etag, 0.0, f64::INFINITY);
                f.prog.add_row(LinearRow::new(vec![(eta, 1.0), (d, -1.0), (z, -big)], Sense::Ge, -big));
                if f.options.distance_floors && floor > 0.0 {
                    f.prog.add_row(LinearRow::new(vec![(eta, 1.0), (z, -floor)], Sense::Ge, 0.0));
                }
                if let Some((q, offset)) = &shifted {
                    let atoms = emit_distance_epigraph(&mut f.prog, *norm, offset, q, &Affine::var(eta))
                        .expect("shared dimension");
                    f.prog.add_atoms(atoms);
                }
                f.prog.set_objective(eta, *weight);
            }
        }
    }
}

/// Returns `q_ik` and `z_ik (a_i - a_k)` after adding the rows that tie `q_ik`
/// to `x_k - a_k`.
fn add_shifted_copy(
    f: &mut Formulation,
    inst: &Instance,
    i: usize,
    k: usize,
    z: VarId,
    xk: &PointExpr,
) -> (PointExpr, PointExpr) {
    let nb = inst.neighborhood(k);
    let radius = nb.max_radius;
    let q: Vec<VarId> = (0..xk.dim()).map(|_| f.prog.add_aux(-radius, radius)).collect();
    let q = PointExpr::vars(&q);
    let origin = PointExpr(vec![Affine::constant(0.0); xk.dim()]);
    let inside = Affine::scaled_var(z, radius);
    let rest = Affine::constant(radius).plus(&Affine::scaled_var(z, -radius));
    let moved = PointExpr(nb.center.0.iter().zip(&q.0).map(|(&c, qc)| qc.clone().plus(&Affine::constant(c))).collect());
    let offset = PointExpr(
        inst.node(i).0.iter().zip(&nb.center.0).map(|(&a, &c)| Affine::scaled_var(z, a - c)).collect(),
    );
    for (anchor, target, bound) in [(&origin, &q, &inside), (xk, &moved, &rest)] {
        let atoms = emit_distance_epigraph(&mut f.prog, nb.gauge, anchor, target, bound).expect("shared dimension");
        f.prog.add_atoms(atoms);
    }
    (q, offset)
}

fn retag(tag: VarTag, k: usize) -> VarTag {
    match tag {
        VarTag::DistC(i, _) => VarTag::DistC(i, k),
        VarTag::DistD(i, _) => VarTag::DistD(i, k),
        VarTag::EtaC(i, _) => VarTag::EtaC(i, k),
        VarTag::EtaD(i, _) => VarTag::EtaD(i, k),
        other => other,
    }
}

fn build_compact(inst: &Instance, options: FormulationOptions, kind: FormulationKind) -> Formulation {
    let n = inst.num_nodes();
    let mut f = build_common(inst, options, kind);
    add_access_costs(&mut f, inst);
    let alpha = inst.alpha();
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i && inst.flow(i, j) > 0.0) {
            let w = inst.flow(i, j);
            for k in (0..n).filter(|&k| inst.admissible(i, k)) {
                for m in (0..n).filter(|&m| m != k && inst.admissible(j, m) && inst.admissible(k, m)) {
                    let zik = f.z(i, k).expect("admissible");
                    let zjm = f.z(j, m).expect("admissible");
                    let big = alpha * f.big_m.hub[k][m];
                    let floor = alpha * f.big_m.hub_floor[k][m];
                    let nu = f.prog.add_continuous(VarTag::Nu(i, k, j, m), 0.0, f64::INFINITY);
                    f.prog.set_objective(nu, w);
                    if options.distance_floors && floor > 0.0 {
                        f.prog.add_row(LinearRow::new(vec![(nu, 1.0), (zik, -floor), (zjm, -floor)], Sense::Ge, -floor));
                    }
                    match kind {
                        FormulationKind::CompactSplit => {
                            // nu >= theta_ikm - big (1 - z_jm), theta_ikm >= alpha dH - big (1 - z_ik)
                            let t = f.theta(i, k, m);
                            f.prog.add_row(LinearRow::new(vec![(nu, 1.0), (t, -1.0), (zjm, -big)], Sense::Ge, -big));
                        }
                        _ => {
                            let d = f.hub_distance(k, m);
                            f.prog.add_row(LinearRow::new(
                                vec![(nu, 1.0), (d, -alpha), (zik, -big), (zjm, -big)],
                                Sense::Ge,
                                -2.0 * big,
                            ));
                        }
                    }
                }
            }
        }
    }
    f
}

/// Compact model: `nu_ikjm >= alpha dH_km - alpha DH_km (2 - z_ik - z_jm)`.
pub fn build_f1(inst: &Instance, options: FormulationOptions) -> Formulation {
    build_compact(inst, options, FormulationKind::Compact)
}

/// Compact model with single-allocation big-M rows chained through
/// `theta_ikm`: `theta_ikm >= alpha dH_km - alpha DH_km (1 - z_ik)` and
/// `nu_ikjm >= theta_ikm - alpha DH_km (1 - z_jm)`.
pub fn build_f1_split_nu(inst: &Instance, options: FormulationOptions) -> Formulation {
    build_compact(inst, options, FormulationKind::CompactSplit)
}

/// Master model with aggregated inter-hub costs `mu_km` and the given cuts.
pub fn build_f2_master(inst: &Instance, pool: &[CutRecord], options: FormulationOptions) -> Formulation {
    let n = inst.num_nodes();
    let mut f = build_common(inst, options, FormulationKind::Master);
    add_access_costs(&mut f, inst);
    for k in 0..n {
        for m in (0..n).filter(|&m| m != k && inst.admissible(k, m)) {
            let mu = f.prog.add_continuous(VarTag::Mu(k, m), 0.0, f64::INFINITY);
            f.prog.set_objective(mu, 1.0);
        }
    }
    for cut in pool {
        f.add_cut(cut);
    }
    f
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{solve_relaxation, Fixings, Tolerances};
    use crate::geometry::{NormKind, Point};
    use crate::instance::{make_scenario, tiny_fixture, RawData, RawFormat, ScenarioParams};
    use crate::solution::evaluate_solution;
    use std::collections::BTreeMap;

    fn params(tau: f64) -> ScenarioParams {
        ScenarioParams { tau, rho: 0.1, alpha: 0.5, gauge: NormKind::L2, norm_c: NormKind::L2, norm_h: NormKind::L2 }
    }

    fn fix_solution(f: &Formulation, sol: &HubSolution) -> Fixings {
        let mut fx = Fixings::new();
        let bins: Vec<VarId> = f.prog.binaries().collect();
        for v in bins {
            let val = match f.prog.tag_of(v) {
                Some(VarTag::Z(i, k)) => sol.z(i, k),
                Some(VarTag::Y(k)) => sol.open[k],
                _ => unreachable!(),
            };
            fx.fix(v, if val { 1.0 } else { 0.0 });
        }
        fx
    }

    #[test]
    fn counts_of_the_compact_model() {
        let inst = make_scenario(&tiny_fixture(4, 1), &params(1.0)).unwrap();
        let f = build_f1(&inst, FormulationOptions::default());
        assert_eq!(f.prog.binaries().count(), 16);
        let nus = f.prog.tags().filter(|(t, _)| matches!(t, VarTag::Nu(..))).count();
        let with_flow = (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).filter(|&(i, j)| i != j && inst.flow(i, j) > 0.0).count();
        assert_eq!(nus, with_flow * 12);
        assert!(f.prog.check().is_ok());
    }

    #[test]
    fn fixed_allocation_matches_direct_evaluation() {
        let inst = make_scenario(&tiny_fixture(4, 7), &params(0.0)).unwrap();
        let sol = HubSolution::at_centers(&inst, vec![0, 0, 3, 3]);
        let direct = evaluate_solution(&inst, &sol, 1e-9).unwrap().total;
        for f in [
            build_f1(&inst, FormulationOptions::default()),
            build_f1_split_nu(&inst, FormulationOptions::default()),
            build_f1(&inst, FormulationOptions { merge_eta: false, ..Default::default() }),
        ] {
            let fx = fix_solution(&f, &sol);
            let out = solve_relaxation(&f.prog, &fx, &Tolerances::default(), None);
            assert!(out.is_optimal(), "{:?}", out.message);
            assert!((out.objective - direct).abs() < 1e-5 * direct, "{} vs {}", out.objective, direct);
        }
    }

    #[test]
    fn master_with_full_cuts_prices_inter_hub_flow() {
        let inst = make_scenario(&tiny_fixture(4, 7), &params(0.0)).unwrap();
        let sol = HubSolution::at_centers(&inst, vec![0, 0, 3, 3]);
        let direct = evaluate_solution(&inst, &sol, 1e-9).unwrap().total;
        let cuts: Vec<CutRecord> = [(0, 3), (3, 0)]
            .iter()
            .filter_map(|&(k, m)| CutRecord::from_pairs(&inst, k, m, allocated_pairs(&inst, &sol, k, m)))
            .collect();
        let f = build_f2_master(&inst, &cuts, FormulationOptions::default());
        let out = solve_relaxation(&f.prog, &fix_solution(&f, &sol), &Tolerances::default(), None);
        assert!(out.is_optimal());
        assert!((out.objective - direct).abs() < 1e-5 * direct, "{} vs {}", out.objective, direct);
        let empty = build_f2_master(&inst, &[], FormulationOptions::default());
        let tight = Tolerances { feas: 1e-9, gap: 1e-9, ..Tolerances::default() };
        let out = solve_relaxation(&empty.prog, &fix_solution(&empty, &sol), &tight, None);
        for k in 0..4 {
            for m in 0..4 {
                if let Some(v) = empty.mu(k, m) {
                    assert!(out.value(v).abs() < 1e-6, "mu({k},{m}) = {}", out.value(v));
                }
            }
        }
    }

    fn allocated_pairs(inst: &Instance, sol: &HubSolution, k: usize, m: usize) -> Vec<(usize, usize)> {
        let n = inst.num_nodes();
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| sol.assign[i] == k && sol.assign[j] == m && inst.flow(i, j) > 0.0)
            .collect()
    }

    #[test]
    fn single_node_forces_its_hub() {
        let raw = RawData {
            name: "one".into(),
            format: RawFormat::Ap,
            nodes: vec![Point(vec![0.0, 0.0]), Point(vec![1.0, 0.0])],
            flows: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            fixed_costs: vec![3.0, 5.0],
            edges: None,
            meta: BTreeMap::new(),
        };
        let inst = make_scenario(&raw, &params(1.0)).unwrap();
        let f = build_f1(&inst, FormulationOptions::default());
        let out = solve_relaxation(&f.prog, &Fixings::new().with(f.y(1), 0.0), &Tolerances::default(), None);
        assert!(out.is_optimal());
        assert!((out.value(f.y(0)) - 1.0).abs() < 1e-6);
        assert!((out.objective - 3.0).abs() < 1e-6);
    }

    #[test]
    fn duplicate_cuts_are_ignored() {
        let inst = make_scenario(&tiny_fixture(3, 2), &params(1.0)).unwrap();
        let cut = CutRecord::from_pairs(&inst, 0, 1, vec![(0, 1)]).unwrap();
        let mut f = build_f2_master(&inst, &[], FormulationOptions::default());
        assert!(f.add_cut(&cut));
        let rows = f.prog.rows().len();
        assert!(!f.add_cut(&cut));
        assert_eq!(f.prog.rows().len(), rows);
        assert_eq!(f.num_cuts(), 1);
    }
}
