//! Norms, neighborhood gauges and the second-order cone building blocks used
//! by every formulation: distance epigraphs, neighborhood membership, power
//! epigraphs and big-M bounds.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::conic::{Affine, ConicProgram, LinearRow, Sense, SocAtom, VarId, VarTag};
use crate::instance::Instance;

/// The three gauges supported for costs and neighborhood shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NormKind {
    L1,
    L2,
    #[serde(rename = "LINF")]
    LInf,
}

impl NormKind {
    pub const ALL: [NormKind; 3] = [NormKind::L1, NormKind::L2, NormKind::LInf];

    /// Position in the pointwise order `l_inf <= l_2 <= l_1`: a larger rank
    /// means a pointwise smaller norm.
    pub fn chain_rank(self) -> u8 {
        match self {
            NormKind::L1 => 1,
            NormKind::L2 => 2,
            NormKind::LInf => 3,
        }
    }

    /// `true` when `||v||_self <= ||v||_other` for every `v`.
    pub fn is_below(self, other: NormKind) -> bool {
        self.chain_rank() >= other.chain_rank()
    }

    /// `true` when `self` is below `other` and the two differ.
    pub fn is_strictly_below(self, other: NormKind) -> bool {
        self.chain_rank() > other.chain_rank()
    }

    pub fn eval(self, v: &[f64]) -> f64 {
        match self {
            NormKind::L1 => v.iter().map(|c| c.abs()).sum(),
            NormKind::L2 => v.iter().map(|c| c * c).sum::<f64>().sqrt(),
            NormKind::LInf => v.iter().fold(0.0, |m, c| m.max(c.abs())),
        }
    }

    /// Smallest `kappa` with `||v||_self <= kappa * ||v||_other` on `R^dim`.
    pub fn equivalence(self, other: NormKind, dim: usize) -> f64 {
        if self.is_below(other) {
            return 1.0;
        }
        let inv = |p: NormKind| match p {
            NormKind::L1 => 1.0,
            NormKind::L2 => 0.5,
            NormKind::LInf => 0.0,
        };
        (dim as f64).powf(inv(self) - inv(other))
    }

    pub fn label(self) -> &'static str {
        match self {
            NormKind::L1 => "L1",
            NormKind::L2 => "L2",
            NormKind::LInf => "LINF",
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for NormKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "L1" => Ok(NormKind::L1),
            "L2" => Ok(NormKind::L2),
            "LINF" | "L_INF" | "INF" => Ok(NormKind::LInf),
            other => Err(format!("unknown norm '{other}' (expected L1, L2 or LINF)")),
        }
    }
}

/// A point of `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn sub(&self, other: &Point) -> Vec<f64> {
        self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }
}

/// `||v||_p`.
pub fn norm_eval(p: NormKind, v: &Point) -> f64 {
    p.eval(&v.0)
}

/// `||a - b||_p`.
pub fn distance(p: NormKind, a: &Point, b: &Point) -> f64 {
    p.eval(&a.sub(b))
}

/// Neighborhood `center + r * {z : ||z||_gauge <= 1}`, `0 <= r <= max_radius`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodSpec {
    pub center: Point,
    pub gauge: NormKind,
    pub max_radius: f64,
}

impl NeighborhoodSpec {
    /// Gauge value of `x` relative to the center: the smallest feasible `r`.
    pub fn gauge_of(&self, x: &Point) -> f64 {
        distance(self.gauge, x, &self.center)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("power degree must be at least 1, got {0}")]
    BadDegree(u32),
}

/// Coordinates of a point as affine expressions: fixed data, decision
/// variables or a mix.
#[derive(Debug, Clone, PartialEq)]
pub struct PointExpr(pub Vec<Affine>);

impl PointExpr {
    pub fn fixed(p: &Point) -> Self {
        PointExpr(p.0.iter().map(|&c| Affine::constant(c)).collect())
    }

    pub fn vars(ids: &[VarId]) -> Self {
        PointExpr(ids.iter().map(|&v| Affine::var(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Encodes `bound >= ||anchor - target||_p`.
///
/// `L2` gives one cone block and `LINF` two rows per coordinate. `L1` uses one
/// row per sign pattern up to three coordinates, and auxiliaries
/// `a_c >= |diff_c|` beyond that.
pub fn emit_distance_epigraph(
    prog: &mut ConicProgram,
    p: NormKind,
    anchor: &PointExpr,
    target: &PointExpr,
    bound: &Affine,
) -> Result<Vec<SocAtom>, GeometryError> {
    if anchor.dim() != target.dim() {
        return Err(GeometryError::DimensionMismatch(anchor.dim(), target.dim()));
    }
    let diffs: Vec<Affine> =
        anchor.0.iter().zip(&target.0).map(|(a, b)| a.clone().minus(b)).collect();
    let mut atoms = Vec::new();
    match p {
        NormKind::L2 => atoms.push(SocAtom::Soc { t: bound.clone(), u: diffs }),
        NormKind::LInf => {
            for d in &diffs {
                atoms.push(SocAtom::Linear(LinearRow::affine_ge(bound, d)));
                atoms.push(SocAtom::Linear(LinearRow::affine_ge(bound, &d.clone().scale(-1.0))));
            }
        }
        NormKind::L1 if diffs.len() <= 3 => {
            // one row per sign pattern
            for signs in 0..1usize << diffs.len() {
                let mut sum = Affine::default();
                for (c, d) in diffs.iter().enumerate() {
                    let s = if signs >> c & 1 == 1 { -1.0 } else { 1.0 };
                    sum = sum.plus(&d.clone().scale(s));
                }
                atoms.push(SocAtom::Linear(LinearRow::affine_ge(bound, &sum)));
            }
        }
        NormKind::L1 => {
            let mut sum = Affine::default();
            for d in &diffs {
                let a = prog.add_aux(0.0, f64::INFINITY);
                let av = Affine::var(a);
                atoms.push(SocAtom::Linear(LinearRow::affine_ge(&av, d)));
                atoms.push(SocAtom::Linear(LinearRow::affine_ge(&av, &d.clone().scale(-1.0))));
                sum = sum.plus(&av);
            }
            atoms.push(SocAtom::Linear(LinearRow::affine_ge(bound, &sum)));
        }
    }
    Ok(atoms)
}

/// Encodes `x in center + r * S`, i.e. `||x - center||_gauge <= r`.
pub fn emit_membership(
    prog: &mut ConicProgram,
    nbhd: &NeighborhoodSpec,
    x: &PointExpr,
    r: &Affine,
) -> Result<Vec<SocAtom>, GeometryError> {
    emit_distance_epigraph(prog, nbhd.gauge, &PointExpr::fixed(&nbhd.center), x, r)
}

fn product_bound(square: Affine, a: Affine, b: Affine) -> SocAtom {
    // square^2 <= a * b  ==  square^2 <= 2 * a * (b / 2)
    SocAtom::RotatedSoc { s: a, t: b.scale(0.5), u: vec![square] }
}

/// Encodes `gamma >= r^d` for `r >= 0`.
///
/// Degree 1 is a linear row and degree 2 a single rotated cone. From degree 3
/// on, with `2^(q-1) <= d < 2^q` and `alpha` the `q` binary digits of `d - 1`,
/// the chain
///
/// ```text
/// w_1^2     <= gamma * r^(1 - alpha_0)
/// w_(i+1)^2 <= w_i   * r^(1 - alpha_i)      i = 1..q-2
/// r^2       <= w_(q-1) * r^(1 - alpha_(q-1))
/// ```
///
/// is emitted with nonnegative auxiliaries `w_1..w_(q-1)`, tagged
/// `Omega(owner, l)` when an owner node is given.
pub fn power_cone_rep(
    prog: &mut ConicProgram,
    d: u32,
    r: VarId,
    gamma: VarId,
    owner: Option<usize>,
) -> Result<Vec<SocAtom>, GeometryError> {
    match d {
        0 => Err(GeometryError::BadDegree(d)),
        1 => Ok(vec![SocAtom::Linear(LinearRow::new(
            vec![(gamma, 1.0), (r, -1.0)],
            Sense::Ge,
            0.0,
        ))]),
        2 => Ok(vec![product_bound(Affine::var(r), Affine::var(gamma), Affine::constant(1.0))]),
        _ => {
            let q = 32 - d.leading_zeros();
            let bits: Vec<u32> = (0..q).map(|i| ((d - 1) >> i) & 1).collect();
            let r_pow = |bit: u32| if bit == 1 { Affine::constant(1.0) } else { Affine::var(r) };
            let omegas: Vec<VarId> = (1..q as usize)
                .map(|l| match owner {
                    Some(k) => prog.add_continuous(VarTag::Omega(k, l), 0.0, f64::INFINITY),
                    None => prog.add_aux(0.0, f64::INFINITY),
                })
                .collect();
            let w = |l: usize| Affine::var(omegas[l - 1]);
            let q = q as usize;
            let mut atoms = vec![product_bound(w(1), Affine::var(gamma), r_pow(bits[0]))];
            for i in 1..=q.saturating_sub(2) {
                atoms.push(product_bound(w(i + 1), w(i), r_pow(bits[i])));
            }
            atoms.push(product_bound(Affine::var(r), w(q - 1), r_pow(bits[q - 1])));
            Ok(atoms)
        }
    }
}

/// Bounds on the distances the big-M rows linearize.
///
/// `collect[i][k]` and `distribute[i][k]` bound `d^C(a_i, x_k)` and
/// `d^D(a_i, x_k)` from above; `hub[k][m]` bounds the undiscounted inter-hub
/// distance `||x_k - x_m||_H` (formulations scale it by `alpha`). The
/// `*_floor` tables are the matching lower bounds over the neighborhoods.
#[derive(Debug, Clone, PartialEq)]
pub struct BigMTables {
    pub collect: Vec<Vec<f64>>,
    pub distribute: Vec<Vec<f64>>,
    pub hub: Vec<Vec<f64>>,
    pub collect_floor: Vec<Vec<f64>>,
    pub distribute_floor: Vec<Vec<f64>>,
    pub hub_floor: Vec<Vec<f64>>,
}

/// Multiplier on `R_k` in the collection/distribution bounds.
pub const DEFAULT_BIG_M_FACTOR: f64 = 2.0;

/// Big-M bounds for `inst`.
///
/// Collection/distribution: `d(a_i, a_k) + factor * kappa_k * R_k`;
/// inter-hub: `||a_k - a_m||_H + kappa_k R_k + kappa_m R_m`, where
/// `kappa` converts the gauge radius of a neighborhood into the cost norm.
/// Floors subtract the same shifts with factor 1, clamped at zero.
pub fn big_m_bounds(inst: &Instance, factor: f64) -> BigMTables {
    let n = inst.num_nodes();
    let dim = inst.dim();
    let square = vec![vec![0.0; n]; n];
    let mut t = BigMTables {
        collect: square.clone(),
        distribute: square.clone(),
        hub: square.clone(),
        collect_floor: square.clone(),
        distribute_floor: square.clone(),
        hub_floor: square,
    };
    for k in 0..n {
        let nb = inst.neighborhood(k);
        let kc = inst.norm_c().equivalence(nb.gauge, dim) * nb.max_radius;
        let kd = inst.norm_d().equivalence(nb.gauge, dim) * nb.max_radius;
        let kh = inst.norm_h().equivalence(nb.gauge, dim) * nb.max_radius;
        for i in 0..n {
            let ai = inst.node(i);
            let dc = distance(inst.norm_c(), ai, &nb.center);
            let dd = distance(inst.norm_d(), ai, &nb.center);
            t.collect[i][k] = dc + factor * kc;
            t.distribute[i][k] = dd + factor * kd;
            t.collect_floor[i][k] = (dc - kc).max(0.0);
            t.distribute_floor[i][k] = (dd - kd).max(0.0);
        }
        for m in 0..n {
            let nm = inst.neighborhood(m);
            let kh_m = inst.norm_h().equivalence(nm.gauge, dim) * nm.max_radius;
            let dh = distance(inst.norm_h(), &nb.center, &nm.center);
            t.hub[k][m] = dh + kh + kh_m;
            t.hub_floor[k][m] = if k == m { 0.0 } else { (dh - kh - kh_m).max(0.0) };
        }
    }
    t
}
