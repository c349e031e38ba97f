//! Intermediate representation for mixed-binary programs with linear rows and
//! second-order cone blocks.

use std::collections::HashMap;
use std::fmt;

/// Index of a variable inside a [`ConicProgram`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub lb: f64,
    pub ub: f64,
    pub kind: VarKind,
}

/// Model entity a variable stands for.
///
/// Hub location builders tag every variable they create, so a solution vector
/// can always be read back in model terms. Indices are node indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarTag {
    /// Allocation of node `i` to hub `k` (`Z(k, k)` doubles as the hub flag).
    Z(usize, usize),
    /// Hub flag of node `k`.
    Y(usize),
    /// Dilation of the neighborhood of node `k`.
    R(usize),
    /// Coordinate `c` of the position of hub `k`.
    X(usize, usize),
    /// Collection distance epigraph for the pair (i, k).
    DistC(usize, usize),
    /// Distribution distance epigraph for the pair (i, k).
    DistD(usize, usize),
    /// Inter-hub distance epigraph for the unordered pair (k, m), k < m.
    DistH(usize, usize),
    /// Linearized collection cost (also the merged cost when the collection
    /// and distribution norms coincide).
    EtaC(usize, usize),
    EtaD(usize, usize),
    /// Linearized inter-hub cost of OD pair (i, j) routed through arc (k, m),
    /// stored as (i, k, j, m).
    Nu(usize, usize, usize, usize),
    /// Aggregated inter-hub cost on the arc (k, m).
    Mu(usize, usize),
    /// Inter-hub cost attributed to node `i` on arc (k, m), stored as (i, k, m).
    Theta(usize, usize, usize),
    /// Epigraph of the power set-up cost of node `k`.
    Gamma(usize),
    /// Auxiliary `l` of the power representation of node `k`.
    Omega(usize, usize),
    /// Lifting auxiliaries (absolute-value splits and similar).
    Aux(usize),
}

/// Affine expression `sum(coef * var) + constant`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Affine {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn constant(c: f64) -> Self {
        Affine { terms: Vec::new(), constant: c }
    }

    pub fn var(v: VarId) -> Self {
        Affine { terms: vec![(v, 1.0)], constant: 0.0 }
    }

    pub fn scaled_var(v: VarId, coef: f64) -> Self {
        Affine { terms: vec![(v, coef)], constant: 0.0 }
    }

    pub fn plus(mut self, other: &Affine) -> Self {
        self.terms.extend_from_slice(&other.terms);
        self.constant += other.constant;
        self
    }

    pub fn minus(mut self, other: &Affine) -> Self {
        self.terms.extend(other.terms.iter().map(|&(v, c)| (v, -c)));
        self.constant -= other.constant;
        self
    }

    pub fn scale(mut self, s: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= s;
        }
        self.constant *= s;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * x[v.0]).sum::<f64>() + self.constant
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|&(_, c)| c == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

/// `sum(coef * var) (<=|>=|=) rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl LinearRow {
    pub fn new(terms: Vec<(VarId, f64)>, sense: Sense, rhs: f64) -> Self {
        LinearRow { terms, sense, rhs }
    }

    /// Row `lhs >= rhs` with both sides affine.
    pub fn affine_ge(lhs: &Affine, rhs: &Affine) -> Self {
        let e = lhs.clone().minus(rhs);
        LinearRow { terms: e.terms, sense: Sense::Ge, rhs: -e.constant }
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * x[v.0]).sum()
    }

    /// Amount by which `x` violates the row (zero when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let a = self.activity(x);
        match self.sense {
            Sense::Le => (a - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - a).max(0.0),
            Sense::Eq => (a - self.rhs).abs(),
        }
    }
}

/// A constraint block produced by the SOC building blocks.
///
/// `Soc { t, u }` asserts `||u||_2 <= t`; `RotatedSoc { s, t, u }` asserts
/// `||u||_2^2 <= 2 s t` with `s, t >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum SocAtom {
    Linear(LinearRow),
    Soc { t: Affine, u: Vec<Affine> },
    RotatedSoc { s: Affine, t: Affine, u: Vec<Affine> },
}

impl SocAtom {
    /// Violation of the block at `x`; zero when satisfied.
    pub fn violation(&self, x: &[f64]) -> f64 {
        match self {
            SocAtom::Linear(row) => row.violation(x),
            SocAtom::Soc { t, u } => {
                let n = u.iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt();
                (n - t.eval(x)).max(0.0)
            }
            SocAtom::RotatedSoc { s, t, u } => {
                let (sv, tv) = (s.eval(x), t.eval(x));
                let uu = u.iter().map(|e| e.eval(x).powi(2)).sum::<f64>();
                // Same set written as a standard cone.
                let lhs = (uu + 0.5 * (sv - tv).powi(2)).sqrt();
                let cone = (lhs - (sv + tv) / std::f64::consts::SQRT_2).max(0.0);
                cone.max((-sv).max(0.0)).max((-tv).max(0.0))
            }
        }
    }

    fn for_each_var(&self, mut f: impl FnMut(VarId)) {
        let mut visit = |e: &Affine| e.terms.iter().for_each(|&(v, _)| f(v));
        match self {
            SocAtom::Linear(row) => row.terms.iter().for_each(|&(v, _)| visit(&Affine::var(v))),
            SocAtom::Soc { t, u } => {
                visit(t);
                u.iter().for_each(&mut visit);
            }
            SocAtom::RotatedSoc { s, t, u } => {
                visit(s);
                visit(t);
                u.iter().for_each(&mut visit);
            }
        }
    }
}

/// Cone block stored in a program (linear atoms go to `rows`).
#[derive(Debug, Clone, PartialEq)]
pub enum ConeBlock {
    Soc { t: Affine, u: Vec<Affine> },
    RotatedSoc { s: Affine, t: Affine, u: Vec<Affine> },
}

impl ConeBlock {
    pub fn as_atom(&self) -> SocAtom {
        match self.clone() {
            ConeBlock::Soc { t, u } => SocAtom::Soc { t, u },
            ConeBlock::RotatedSoc { s, t, u } => SocAtom::RotatedSoc { s, t, u },
        }
    }

    /// Standard-cone form `(head, tail)` with `||tail|| <= head`.
    pub fn standard_form(&self) -> (Affine, Vec<Affine>) {
        match self {
            ConeBlock::Soc { t, u } => (t.clone(), u.clone()),
            ConeBlock::RotatedSoc { s, t, u } => {
                let h = std::f64::consts::FRAC_1_SQRT_2;
                let head = s.clone().plus(t).scale(h);
                let mut tail = vec![s.clone().minus(t).scale(h)];
                tail.extend(u.iter().cloned());
                (head, tail)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProgramError {
    #[error("variable index {0} out of range")]
    BadVariable(usize),
    #[error("binary variable {0} has bounds other than [0, 1]")]
    BinaryBounds(usize),
    #[error("variable {0} has no model tag")]
    Untagged(usize),
}

/// Minimization program: linear objective, linear rows, SOC blocks and
/// variable bounds, with some variables marked binary.
#[derive(Debug, Clone, Default)]
pub struct ConicProgram {
    vars: Vec<Variable>,
    objective: Vec<f64>,
    pub objective_constant: f64,
    rows: Vec<LinearRow>,
    cones: Vec<ConeBlock>,
    tags: HashMap<VarTag, VarId>,
    tag_of: Vec<Option<VarTag>>,
    next_aux: usize,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn var(&self, v: VarId) -> &Variable {
        &self.vars[v.0]
    }

    pub fn rows(&self) -> &[LinearRow] {
        &self.rows
    }

    pub fn cones(&self) -> &[ConeBlock] {
        &self.cones
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    /// Adds a tagged variable. Binary variables get bounds [0, 1] regardless
    /// of `lb`/`ub`.
    pub fn add_var(&mut self, tag: VarTag, lb: f64, ub: f64, kind: VarKind) -> VarId {
        let (lb, ub) = match kind {
            VarKind::Binary => (0.0, 1.0),
            VarKind::Continuous => (lb, ub),
        };
        let id = VarId(self.vars.len());
        self.vars.push(Variable { lb, ub, kind });
        self.objective.push(0.0);
        self.tags.insert(tag, id);
        self.tag_of.push(Some(tag));
        id
    }

    pub fn add_continuous(&mut self, tag: VarTag, lb: f64, ub: f64) -> VarId {
        self.add_var(tag, lb, ub, VarKind::Continuous)
    }

    /// Fresh auxiliary variable with an `Aux` tag.
    pub fn add_aux(&mut self, lb: f64, ub: f64) -> VarId {
        let tag = VarTag::Aux(self.next_aux);
        self.next_aux += 1;
        self.add_continuous(tag, lb, ub)
    }

    /// Makes `tag` an additional name of an existing variable.
    pub fn alias(&mut self, tag: VarTag, v: VarId) {
        self.tags.insert(tag, v);
    }

    pub fn lookup(&self, tag: VarTag) -> Option<VarId> {
        self.tags.get(&tag).copied()
    }

    pub fn tag_of(&self, v: VarId) -> Option<VarTag> {
        self.tag_of.get(v.0).copied().flatten()
    }

    pub fn tags(&self) -> impl Iterator<Item = (&VarTag, &VarId)> {
        self.tags.iter()
    }

    pub fn set_bounds(&mut self, v: VarId, lb: f64, ub: f64) {
        self.vars[v.0].lb = lb;
        self.vars[v.0].ub = ub;
    }

    pub fn set_objective(&mut self, v: VarId, coef: f64) {
        self.objective[v.0] = coef;
    }

    pub fn add_objective(&mut self, v: VarId, coef: f64) {
        self.objective[v.0] += coef;
    }

    pub fn add_row(&mut self, row: LinearRow) -> usize {
        self.rows.push(row);
        self.rows.len() - 1
    }

    pub fn add_cone(&mut self, cone: ConeBlock) {
        self.cones.push(cone);
    }

    pub fn add_atom(&mut self, atom: SocAtom) {
        match atom {
            SocAtom::Linear(row) => {
                self.add_row(row);
            }
            SocAtom::Soc { t, u } => self.add_cone(ConeBlock::Soc { t, u }),
            SocAtom::RotatedSoc { s, t, u } => self.add_cone(ConeBlock::RotatedSoc { s, t, u }),
        }
    }

    pub fn add_atoms(&mut self, atoms: impl IntoIterator<Item = SocAtom>) {
        for a in atoms {
            self.add_atom(a);
        }
    }

    pub fn binaries(&self) -> impl Iterator<Item = VarId> + '_ {
        self.vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind == VarKind::Binary)
            .map(|(i, _)| VarId(i))
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + self.objective_constant
    }

    /// Checks index validity, binary bounds and tag totality.
    pub fn check(&self) -> Result<(), ProgramError> {
        let n = self.vars.len();
        let check_ids = |terms: &[(VarId, f64)]| {
            terms.iter().try_for_each(|&(v, _)| {
                if v.0 < n {
                    Ok(())
                } else {
                    Err(ProgramError::BadVariable(v.0))
                }
            })
        };
        for row in &self.rows {
            check_ids(&row.terms)?;
        }
        for cone in &self.cones {
            let mut bad = None;
            cone.as_atom().for_each_var(|v| {
                if v.0 >= n {
                    bad = Some(v.0);
                }
            });
            if let Some(b) = bad {
                return Err(ProgramError::BadVariable(b));
            }
        }
        for (i, v) in self.vars.iter().enumerate() {
            if v.kind == VarKind::Binary && (v.lb < 0.0 || v.ub > 1.0) {
                return Err(ProgramError::BinaryBounds(i));
            }
            if self.tag_of[i].is_none() {
                return Err(ProgramError::Untagged(i));
            }
        }
        Ok(())
    }
}

impl fmt::Display for ConicProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "ConicProgram({} vars, {} binaries, {} rows, {} cones)",
            self.vars.len(),
            self.binaries().count(),
            self.rows.len(),
            self.cones.len()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotated_violation_matches_definition() {
        let mut p = ConicProgram::new();
        let s = p.add_aux(0.0, f64::INFINITY);
        let t = p.add_aux(0.0, f64::INFINITY);
        let u = p.add_aux(f64::NEG_INFINITY, f64::INFINITY);
        let atom = SocAtom::RotatedSoc { s: Affine::var(s), t: Affine::var(t), u: vec![Affine::var(u)] };
        // u^2 = 4 <= 2*1*2
        assert!(atom.violation(&[1.0, 2.0, 2.0]) < 1e-12);
        assert!(atom.violation(&[1.0, 1.0, 2.0]) > 0.0);
    }

    #[test]
    fn check_rejects_dangling_index() {
        let mut p = ConicProgram::new();
        let a = p.add_aux(0.0, 1.0);
        p.add_row(LinearRow::new(vec![(a, 1.0), (VarId(7), 1.0)], Sense::Le, 1.0));
        assert_eq!(p.check(), Err(ProgramError::BadVariable(7)));
    }

    #[test]
    fn binaries_are_clamped_to_unit_box() {
        let mut p = ConicProgram::new();
        let z = p.add_var(VarTag::Z(0, 1), -3.0, 5.0, VarKind::Binary);
        assert_eq!((p.var(z).lb, p.var(z).ub), (0.0, 1.0));
        assert!(p.check().is_ok());
    }
}
