//! Instance data: raw AP/CAB ingestion, the scenario recipe, validation and
//! the canonical scenario file.
//!
//! # Raw layout
//!
//! Whitespace separated, `#` starts a comment:
//!
//! ```text
//! n
//! x_1 y_1            (n coordinate lines, all of the same dimension)
//! ...
//! w_11 ... w_1n      (n flow lines)
//! ...
//! f_1 ... f_n        (optional: n fixed costs, any line breaking)
//! edges m            (optional: m lines "i j", 0-based, undirected)
//! ```
//!
//! # Scenario file
//!
//! A TOML document with the fields of [`ScenarioFile`]; written by
//! [`Instance::to_toml`] and read back bit-exactly by [`Instance::from_toml`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{distance, NeighborhoodSpec, NormKind, Point};

/// Dataset family of a raw file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RawFormat {
    #[serde(rename = "AP")]
    Ap,
    #[serde(rename = "CAB")]
    Cab,
}

impl std::str::FromStr for RawFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "AP" => Ok(RawFormat::Ap),
            "CAB" => Ok(RawFormat::Cab),
            other => Err(format!("unknown dataset format '{other}' (expected AP or CAB)")),
        }
    }
}

impl fmt::Display for RawFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RawFormat::Ap => "AP",
            RawFormat::Cab => "CAB",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RawError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}, column {col}: {message}")]
    Parse { line: usize, col: usize, message: String },
    #[error("line {line}, column {col}: negative flow {value} at ({i},{j})")]
    NegativeFlow { i: usize, j: usize, value: f64, line: usize, col: usize },
    #[error("fixed costs missing and no uniform fixed cost supplied")]
    MissingFixedCosts,
}

fn parse_err(line: usize, col: usize, message: impl Into<String>) -> RawError {
    RawError::Parse { line, col, message: message.into() }
}

/// Loader options.
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Fixed cost used for every node when the file has no cost section.
    pub uniform_fixed_cost: Option<f64>,
}

/// Coordinates, flows and fixed costs of a dataset, before any scenario
/// parameters are applied.
#[derive(Debug, Clone, PartialEq)]
pub struct RawData {
    pub name: String,
    pub format: RawFormat,
    pub nodes: Vec<Point>,
    pub flows: Vec<Vec<f64>>,
    pub fixed_costs: Vec<f64>,
    pub edges: Option<Vec<(usize, usize)>>,
    /// Provenance flags such as `flows = "normalized"`.
    pub meta: BTreeMap<String, String>,
}

struct Token<'a> {
    line: usize,
    col: usize,
    text: &'a str,
}

fn tokenize(text: &str) -> Vec<Vec<Token<'_>>> {
    let mut lines = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let body = raw.split('#').next().unwrap_or("");
        let mut toks = Vec::new();
        let mut start = None;
        for (pos, ch) in body.char_indices().chain(std::iter::once((body.len(), ' '))) {
            match (ch.is_whitespace(), start) {
                (false, None) => start = Some(pos),
                (true, Some(s)) => {
                    toks.push(Token { line: ln + 1, col: s + 1, text: &body[s..pos] });
                    start = None;
                }
                _ => {}
            }
        }
        if !toks.is_empty() {
            lines.push(toks);
        }
    }
    lines
}

fn number(t: &Token<'_>) -> Result<f64, RawError> {
    let v: f64 = t
        .text
        .parse()
        .map_err(|_| parse_err(t.line, t.col, format!("expected a number, found '{}'", t.text)))?;
    if !v.is_finite() {
        return Err(parse_err(t.line, t.col, "non-finite number"));
    }
    Ok(v)
}

fn count(t: &Token<'_>) -> Result<usize, RawError> {
    t.text
        .parse()
        .map_err(|_| parse_err(t.line, t.col, format!("expected a count, found '{}'", t.text)))
}

/// Parses the raw layout.
pub fn parse_raw(text: &str, name: &str, format: RawFormat, opts: &LoadOptions) -> Result<RawData, RawError> {
    let lines = tokenize(text);
    let mut it = lines.iter().peekable();
    let header = it.next().ok_or_else(|| parse_err(1, 1, "empty input: expected node count"))?;
    let n = count(&header[0])?;
    if header.len() > 1 {
        let t = &header[1];
        return Err(parse_err(t.line, t.col, "node count must be alone on its line"));
    }
    if n == 0 {
        return Err(parse_err(header[0].line, header[0].col, "node count must be positive"));
    }
    let last_line = lines.last().map_or(1, |l| l[0].line);
    let mut next_line = |what: &str| {
        it.next().ok_or_else(|| parse_err(last_line + 1, 1, format!("unexpected end of input: expected {what}")))
    };

    let mut nodes = Vec::with_capacity(n);
    let mut dim = None;
    for _ in 0..n {
        let l = next_line("a coordinate line")?;
        let coords = l.iter().map(number).collect::<Result<Vec<_>, _>>()?;
        match dim {
            None => dim = Some(coords.len()),
            Some(d) if d != coords.len() => {
                return Err(parse_err(l[0].line, l[0].col, format!("expected {d} coordinates, found {}", coords.len())))
            }
            _ => {}
        }
        nodes.push(Point(coords));
    }

    let mut flows = Vec::with_capacity(n);
    for i in 0..n {
        let l = next_line("a flow line")?;
        if l.len() != n {
            return Err(parse_err(l[0].line, l[0].col, format!("expected {n} flows, found {}", l.len())));
        }
        let mut row = Vec::with_capacity(n);
        for (j, t) in l.iter().enumerate() {
            let v = number(t)?;
            if v < 0.0 {
                return Err(RawError::NegativeFlow { i, j, value: v, line: t.line, col: t.col });
            }
            row.push(v);
        }
        flows.push(row);
    }

    let mut costs = Vec::new();
    let mut edges = None;
    let mut first_cost: Option<(usize, usize)> = None;
    while let Some(l) = it.next() {
        if l[0].text.eq_ignore_ascii_case("edges") {
            let m = match l.get(1) {
                Some(t) => count(t)?,
                None => return Err(parse_err(l[0].line, l[0].col, "expected edge count after 'edges'")),
            };
            let mut list = Vec::with_capacity(m);
            for _ in 0..m {
                let e = it.next().ok_or_else(|| parse_err(last_line + 1, 1, "unexpected end of input: expected an edge"))?;
                if e.len() != 2 {
                    return Err(parse_err(e[0].line, e[0].col, "an edge line holds two node indices"));
                }
                let (a, b) = (count(&e[0])?, count(&e[1])?);
                if a >= n || b >= n {
                    return Err(parse_err(e[0].line, e[0].col, format!("edge ({a},{b}) out of range")));
                }
                list.push((a.min(b), a.max(b)));
            }
            if let Some(extra) = it.next() {
                return Err(parse_err(extra[0].line, extra[0].col, "unexpected data after edge list"));
            }
            edges = Some(list);
            break;
        }
        for t in l {
            first_cost.get_or_insert((t.line, t.col));
            costs.push(number(t)?);
        }
    }

    let mut meta = BTreeMap::new();
    let fixed_costs = if costs.is_empty() {
        let f = opts.uniform_fixed_cost.ok_or(RawError::MissingFixedCosts)?;
        meta.insert("fixed_costs".to_string(), format!("uniform {f}"));
        vec![f; n]
    } else if costs.len() != n {
        let (line, col) = first_cost.unwrap_or((1, 1));
        return Err(parse_err(line, col, format!("expected {n} fixed costs, found {}", costs.len())));
    } else {
        meta.insert("fixed_costs".to_string(), "embedded".to_string());
        costs
    };

    if format == RawFormat::Cab {
        let total: f64 = flows.iter().flatten().sum();
        if total > 0.0 {
            for v in flows.iter_mut().flatten() {
                *v /= total;
            }
        }
        meta.insert("flows".to_string(), "normalized by total flow".to_string());
    } else {
        meta.insert("flows".to_string(), "as given".to_string());
    }

    Ok(RawData { name: name.to_string(), format, nodes, flows, fixed_costs, edges, meta })
}

/// Reads and parses a raw dataset file.
pub fn load_raw(path: &Path, format: RawFormat, opts: &LoadOptions) -> Result<RawData, RawError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| RawError::Io { path: path.display().to_string(), source })?;
    let name = path.file_stem().map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned());
    parse_raw(&text, &name, format, opts)
}

impl RawData {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Renders the raw layout; `parse_raw` of the output reproduces `self`
    /// up to flow normalization.
    pub fn to_text(&self) -> String {
        let mut s = format!("{}\n", self.nodes.len());
        for p in &self.nodes {
            s += &p.0.iter().map(|c| format!("{c}")).collect::<Vec<_>>().join(" ");
            s.push('\n');
        }
        for row in &self.flows {
            s += &row.iter().map(|c| format!("{c}")).collect::<Vec<_>>().join(" ");
            s.push('\n');
        }
        s += &self.fixed_costs.iter().map(|c| format!("{c}")).collect::<Vec<_>>().join(" ");
        s.push('\n');
        if let Some(edges) = &self.edges {
            s += &format!("edges {}\n", edges.len());
            for (a, b) in edges {
                s += &format!("{a} {b}\n");
            }
        }
        s
    }
}

/// Random tiny dataset for tests and smoke runs: coordinates in `[0, 10]^2`,
/// integer off-diagonal flows in `0..=9`, fixed costs in `[20, 60]`.
pub fn tiny_fixture(n: usize, seed: u64) -> RawData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = (0..n).map(|_| Point(vec![rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)])).collect();
    let flows = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 0.0 } else { rng.gen_range(0..10) as f64 }).collect())
        .collect();
    let fixed_costs = (0..n).map(|_| rng.gen_range(20.0..60.0)).collect();
    let mut meta = BTreeMap::new();
    meta.insert("source".to_string(), format!("tiny fixture n={n} seed={seed}"));
    RawData { name: format!("tiny{n}-{seed}"), format: RawFormat::Ap, nodes, flows, fixed_costs, edges: None, meta }
}

/// Shape of the variable part of the set-up cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SetupKind {
    #[serde(rename = "LINEAR")]
    Linear,
    #[serde(rename = "POWER")]
    Power,
}

/// `g(r) = coeff * r` or `coeff * r^degree`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariableSetupCost {
    pub kind: SetupKind,
    pub coeff: f64,
    pub degree: u32,
}

impl VariableSetupCost {
    pub fn linear(coeff: f64) -> Self {
        VariableSetupCost { kind: SetupKind::Linear, coeff, degree: 1 }
    }

    pub fn power(coeff: f64, degree: u32) -> Self {
        VariableSetupCost { kind: SetupKind::Power, coeff, degree }
    }

    pub fn eval(&self, r: f64) -> f64 {
        match self.kind {
            SetupKind::Linear => self.coeff * r,
            SetupKind::Power => self.coeff * r.powi(self.degree as i32),
        }
    }
}

/// Admissible undirected links. Self-allocation `(k, k)` is always allowed.
#[derive(Debug, Clone, PartialEq)]
pub enum EdgeSet {
    Complete,
    List(BTreeSet<(usize, usize)>),
}

impl EdgeSet {
    pub fn contains(&self, i: usize, k: usize) -> bool {
        match self {
            EdgeSet::Complete => true,
            EdgeSet::List(s) => i == k || s.contains(&(i.min(k), i.max(k))),
        }
    }
}

/// A fully specified problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    name: String,
    nodes: Vec<Point>,
    edges: EdgeSet,
    flows: Vec<Vec<f64>>,
    fixed_costs: Vec<f64>,
    nbhd: Vec<NeighborhoodSpec>,
    var_cost: Vec<VariableSetupCost>,
    norm_c: NormKind,
    norm_d: NormKind,
    norm_h: NormKind,
    alpha: f64,
    origin: Vec<f64>,
    dest: Vec<f64>,
    meta: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InstanceError {
    #[error("{field} has length {found}, expected {expected}")]
    Shape { field: &'static str, found: usize, expected: usize },
    #[error("instance needs at least {0} nodes")]
    TooFewNodes(usize),
    #[error("invalid scenario parameter: {0}")]
    Parameter(String),
    #[error("economy-of-scale ordering violated: alpha = {alpha}, hub norm {norm_h} vs cost norm {norm_c}")]
    EconomyOfScale { alpha: f64, norm_h: NormKind, norm_c: NormKind },
    #[error("scenario file: {0}")]
    Format(String),
}

/// One problem of a validation report.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NegativeFlow { i: usize, j: usize },
    NonFiniteFlow { i: usize, j: usize },
    NegativeFixedCost(usize),
    NegativeRadius(usize),
    NegativeCoefficient(usize),
    BadDegree(usize),
    NonFiniteCoordinate(usize),
    DimensionMismatch(usize),
    CenterMismatch(usize),
    EdgeOutOfRange { i: usize, k: usize },
    AlphaOutOfRange(f64),
    EconomyOfScale { alpha: f64, norm_h: NormKind, norm_c: NormKind },
    CacheMismatch(usize),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NegativeFlow { i, j } => write!(f, "negative flow at ({i},{j})"),
            Violation::NonFiniteFlow { i, j } => write!(f, "non-finite flow at ({i},{j})"),
            Violation::NegativeFixedCost(k) => write!(f, "negative fixed cost at node {k}"),
            Violation::NegativeRadius(k) => write!(f, "negative or non-finite maximum dilation at node {k}"),
            Violation::NegativeCoefficient(k) => write!(f, "negative set-up coefficient at node {k}"),
            Violation::BadDegree(k) => write!(f, "set-up degree below 1 at node {k}"),
            Violation::NonFiniteCoordinate(k) => write!(f, "non-finite coordinate at node {k}"),
            Violation::DimensionMismatch(k) => write!(f, "coordinate dimension differs at node {k}"),
            Violation::CenterMismatch(k) => write!(f, "neighborhood of node {k} is not centered at the node"),
            Violation::EdgeOutOfRange { i, k } => write!(f, "edge ({i},{k}) out of range"),
            Violation::AlphaOutOfRange(a) => write!(f, "alpha = {a} outside (0, 1]"),
            Violation::EconomyOfScale { alpha, norm_h, norm_c } => {
                write!(f, "economy-of-scale ordering violated: alpha = {alpha}, hub norm {norm_h} vs cost norm {norm_c}")
            }
            Violation::CacheMismatch(k) => write!(f, "cached flow totals stale at node {k}"),
        }
    }
}

/// `true` when `alpha * ||v||_h <= ||v||_c` for all `v` (strictly, at
/// `alpha = 1`, `h` must lie below `c` and differ from it).
pub fn economy_of_scale_ok(alpha: f64, norm_h: NormKind, norm_c: NormKind, dim: usize) -> bool {
    if alpha >= 1.0 {
        norm_h.is_strictly_below(norm_c)
    } else {
        alpha * norm_h.equivalence(norm_c, dim) <= 1.0 + 1e-12
    }
}

/// Plain-data view of an [`Instance`]; the canonical scenario file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub format_version: u32,
    pub name: String,
    pub alpha: f64,
    pub norm_c: NormKind,
    pub norm_d: NormKind,
    pub norm_h: NormKind,
    pub gauge: Vec<NormKind>,
    #[serde(rename = "R")]
    pub max_radius: Vec<f64>,
    #[serde(rename = "Lambda")]
    pub lambda: Vec<f64>,
    pub setup_kind: Vec<SetupKind>,
    pub setup_degree: Vec<u32>,
    pub fixed_costs: Vec<f64>,
    pub nodes: Vec<Vec<f64>>,
    pub flows: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[usize; 2]>>,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

pub const SCENARIO_FORMAT_VERSION: u32 = 1;

impl Instance {
    /// Assembles an instance; only shapes are checked here, values are
    /// checked by [`Instance::validate`].
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        nodes: Vec<Point>,
        flows: Vec<Vec<f64>>,
        fixed_costs: Vec<f64>,
        nbhd: Vec<NeighborhoodSpec>,
        var_cost: Vec<VariableSetupCost>,
        norms: (NormKind, NormKind, NormKind),
        alpha: f64,
    ) -> Result<Self, InstanceError> {
        let n = nodes.len();
        if n == 0 {
            return Err(InstanceError::TooFewNodes(1));
        }
        let shape = |field, found: usize| {
            if found == n {
                Ok(())
            } else {
                Err(InstanceError::Shape { field, found, expected: n })
            }
        };
        shape("flows", flows.len())?;
        for row in &flows {
            shape("flow row", row.len())?;
        }
        shape("fixed_costs", fixed_costs.len())?;
        shape("neighborhoods", nbhd.len())?;
        shape("set-up costs", var_cost.len())?;
        let mut inst = Instance {
            name: name.into(),
            nodes,
            edges: EdgeSet::Complete,
            flows,
            fixed_costs,
            nbhd,
            var_cost,
            norm_c: norms.0,
            norm_d: norms.1,
            norm_h: norms.2,
            alpha,
            origin: Vec::new(),
            dest: Vec::new(),
            meta: BTreeMap::new(),
        };
        inst.refresh_totals();
        Ok(inst)
    }

    fn refresh_totals(&mut self) {
        let n = self.nodes.len();
        self.origin = (0..n).map(|i| self.flows[i].iter().sum()).collect();
        self.dest = (0..n).map(|j| (0..n).map(|i| self.flows[i][j]).sum()).collect();
    }

    pub fn with_edges(mut self, edges: EdgeSet) -> Self {
        self.edges = edges;
        self
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<String>) -> Self {
        self.meta.insert(key.to_string(), value.into());
        self
    }

    pub fn with_flows(mut self, flows: Vec<Vec<f64>>) -> Result<Self, InstanceError> {
        let n = self.num_nodes();
        if flows.len() != n || flows.iter().any(|r| r.len() != n) {
            return Err(InstanceError::Shape { field: "flows", found: flows.len(), expected: n });
        }
        self.flows = flows;
        self.refresh_totals();
        Ok(self)
    }

    pub fn with_fixed_costs(mut self, f: Vec<f64>) -> Result<Self, InstanceError> {
        if f.len() != self.num_nodes() {
            return Err(InstanceError::Shape { field: "fixed_costs", found: f.len(), expected: self.num_nodes() });
        }
        self.fixed_costs = f;
        Ok(self)
    }

    pub fn with_var_costs(mut self, v: Vec<VariableSetupCost>) -> Result<Self, InstanceError> {
        if v.len() != self.num_nodes() {
            return Err(InstanceError::Shape { field: "set-up costs", found: v.len(), expected: self.num_nodes() });
        }
        self.var_cost = v;
        Ok(self)
    }

    pub fn with_max_radius(mut self, r: &[f64]) -> Self {
        for (nb, &rk) in self.nbhd.iter_mut().zip(r) {
            nb.max_radius = rk;
        }
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].dim()
    }

    pub fn node(&self, i: usize) -> &Point {
        &self.nodes[i]
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn edges(&self) -> &EdgeSet {
        &self.edges
    }

    /// Whether node `i` may be allocated to hub `k`.
    pub fn admissible(&self, i: usize, k: usize) -> bool {
        self.edges.contains(i, k)
    }

    pub fn flow(&self, i: usize, j: usize) -> f64 {
        self.flows[i][j]
    }

    pub fn flows(&self) -> &[Vec<f64>] {
        &self.flows
    }

    /// `O_i`, total flow leaving `i`.
    pub fn origin_total(&self, i: usize) -> f64 {
        self.origin[i]
    }

    /// `D_j`, total flow entering `j`.
    pub fn dest_total(&self, j: usize) -> f64 {
        self.dest[j]
    }

    pub fn fixed_cost(&self, k: usize) -> f64 {
        self.fixed_costs[k]
    }

    pub fn fixed_costs(&self) -> &[f64] {
        &self.fixed_costs
    }

    pub fn neighborhood(&self, k: usize) -> &NeighborhoodSpec {
        &self.nbhd[k]
    }

    pub fn var_cost(&self, k: usize) -> &VariableSetupCost {
        &self.var_cost[k]
    }

    pub fn norm_c(&self) -> NormKind {
        self.norm_c
    }

    pub fn norm_d(&self) -> NormKind {
        self.norm_d
    }

    pub fn norm_h(&self) -> NormKind {
        self.norm_h
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn meta(&self) -> &BTreeMap<String, String> {
        &self.meta
    }

    pub fn total_flow(&self) -> f64 {
        self.origin.iter().sum()
    }

    /// Every violated invariant; empty when the instance is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let n = self.num_nodes();
        let dim = self.dim();
        let mut out = Vec::new();
        for (k, p) in self.nodes.iter().enumerate() {
            if p.dim() != dim {
                out.push(Violation::DimensionMismatch(k));
            }
            if !p.is_finite() {
                out.push(Violation::NonFiniteCoordinate(k));
            }
        }
        for i in 0..n {
            for j in 0..n {
                let w = self.flows[i][j];
                if !w.is_finite() {
                    out.push(Violation::NonFiniteFlow { i, j });
                } else if w < 0.0 {
                    out.push(Violation::NegativeFlow { i, j });
                }
            }
        }
        for k in 0..n {
            if !(self.fixed_costs[k] >= 0.0) || !self.fixed_costs[k].is_finite() {
                out.push(Violation::NegativeFixedCost(k));
            }
            let nb = &self.nbhd[k];
            if !(nb.max_radius >= 0.0) || !nb.max_radius.is_finite() {
                out.push(Violation::NegativeRadius(k));
            }
            if nb.center != self.nodes[k] {
                out.push(Violation::CenterMismatch(k));
            }
            let g = &self.var_cost[k];
            if !(g.coeff >= 0.0) || !g.coeff.is_finite() {
                out.push(Violation::NegativeCoefficient(k));
            }
            if g.degree < 1 {
                out.push(Violation::BadDegree(k));
            }
        }
        if let EdgeSet::List(s) = &self.edges {
            for &(i, k) in s {
                if i >= n || k >= n {
                    out.push(Violation::EdgeOutOfRange { i, k });
                }
            }
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            out.push(Violation::AlphaOutOfRange(self.alpha));
        } else {
            for c in [self.norm_c, self.norm_d] {
                if !economy_of_scale_ok(self.alpha, self.norm_h, c, dim) {
                    out.push(Violation::EconomyOfScale { alpha: self.alpha, norm_h: self.norm_h, norm_c: c });
                    break;
                }
            }
        }
        for i in 0..n {
            let o: f64 = self.flows[i].iter().sum();
            let d: f64 = (0..n).map(|r| self.flows[r][i]).sum();
            let tol = 1e-9 * (1.0 + o.abs() + d.abs());
            if (o - self.origin[i]).abs() > tol || (d - self.dest[i]).abs() > tol {
                out.push(Violation::CacheMismatch(i));
            }
        }
        out
    }

    pub fn to_file(&self) -> ScenarioFile {
        ScenarioFile {
            format_version: SCENARIO_FORMAT_VERSION,
            name: self.name.clone(),
            alpha: self.alpha,
            norm_c: self.norm_c,
            norm_d: self.norm_d,
            norm_h: self.norm_h,
            gauge: self.nbhd.iter().map(|b| b.gauge).collect(),
            max_radius: self.nbhd.iter().map(|b| b.max_radius).collect(),
            lambda: self.var_cost.iter().map(|g| g.coeff).collect(),
            setup_kind: self.var_cost.iter().map(|g| g.kind).collect(),
            setup_degree: self.var_cost.iter().map(|g| g.degree).collect(),
            fixed_costs: self.fixed_costs.clone(),
            nodes: self.nodes.iter().map(|p| p.0.clone()).collect(),
            flows: self.flows.clone(),
            edges: match &self.edges {
                EdgeSet::Complete => None,
                EdgeSet::List(s) => Some(s.iter().map(|&(a, b)| [a, b]).collect()),
            },
            meta: self.meta.clone(),
        }
    }

    pub fn from_file(f: ScenarioFile) -> Result<Self, InstanceError> {
        if f.format_version != SCENARIO_FORMAT_VERSION {
            return Err(InstanceError::Format(format!("unsupported format_version {}", f.format_version)));
        }
        let n = f.nodes.len();
        for (field, len) in [
            ("gauge", f.gauge.len()),
            ("R", f.max_radius.len()),
            ("Lambda", f.lambda.len()),
            ("setup_kind", f.setup_kind.len()),
            ("setup_degree", f.setup_degree.len()),
        ] {
            if len != n {
                return Err(InstanceError::Shape { field, found: len, expected: n });
            }
        }
        let nodes: Vec<Point> = f.nodes.into_iter().map(Point).collect();
        let nbhd = nodes
            .iter()
            .zip(f.gauge.iter().zip(&f.max_radius))
            .map(|(c, (&gauge, &max_radius))| NeighborhoodSpec { center: c.clone(), gauge, max_radius })
            .collect();
        let var_cost = (0..n)
            .map(|k| VariableSetupCost { kind: f.setup_kind[k], coeff: f.lambda[k], degree: f.setup_degree[k] })
            .collect();
        let mut inst = Instance::new(
            f.name,
            nodes,
            f.flows,
            f.fixed_costs,
            nbhd,
            var_cost,
            (f.norm_c, f.norm_d, f.norm_h),
            f.alpha,
        )?;
        if let Some(e) = f.edges {
            inst.edges = EdgeSet::List(e.into_iter().map(|[a, b]| (a.min(b), a.max(b))).collect());
        }
        inst.meta = f.meta;
        Ok(inst)
    }

    /// Canonical TOML text.
    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_file()).expect("scenario data is always representable")
    }

    pub fn from_toml(text: &str) -> Result<Self, InstanceError> {
        let f: ScenarioFile = toml::from_str(text).map_err(|e| InstanceError::Format(e.to_string()))?;
        Self::from_file(f)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_toml())
    }

    pub fn load(path: &Path) -> Result<Self, InstanceError> {
        let text = std::fs::read_to_string(path).map_err(|e| InstanceError::Format(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}

/// Parameters of one scenario of the experimental recipe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub tau: f64,
    pub rho: f64,
    pub alpha: f64,
    pub gauge: NormKind,
    pub norm_c: NormKind,
    pub norm_h: NormKind,
}

impl ScenarioParams {
    pub fn label(&self) -> String {
        format!(
            "a{}-{}-{}-g{}-t{}-r{}",
            self.alpha, self.norm_c, self.norm_h, self.gauge, self.tau, self.rho
        )
    }
}

/// Builds a scenario: `R_k = tau * min_{i != k} d^C(a_i, a_k)`,
/// `Lambda_k = rho * f_k` (linear), `norm_D = norm_C`.
pub fn make_scenario(base: &RawData, p: &ScenarioParams) -> Result<Instance, InstanceError> {
    let n = base.num_nodes();
    if n < 2 {
        return Err(InstanceError::TooFewNodes(2));
    }
    if !(p.tau >= 0.0) || !p.tau.is_finite() {
        return Err(InstanceError::Parameter(format!("tau = {}", p.tau)));
    }
    if !(p.rho >= 0.0) || !p.rho.is_finite() {
        return Err(InstanceError::Parameter(format!("rho = {}", p.rho)));
    }
    if !(p.alpha > 0.0 && p.alpha <= 1.0) {
        return Err(InstanceError::Parameter(format!("alpha = {}", p.alpha)));
    }
    let dim = base.nodes[0].dim();
    if !economy_of_scale_ok(p.alpha, p.norm_h, p.norm_c, dim) {
        return Err(InstanceError::EconomyOfScale { alpha: p.alpha, norm_h: p.norm_h, norm_c: p.norm_c });
    }
    let nbhd = (0..n)
        .map(|k| {
            let nearest = (0..n)
                .filter(|&i| i != k)
                .map(|i| distance(p.norm_c, &base.nodes[i], &base.nodes[k]))
                .fold(f64::INFINITY, f64::min);
            NeighborhoodSpec { center: base.nodes[k].clone(), gauge: p.gauge, max_radius: p.tau * nearest }
        })
        .collect();
    let var_cost = base.fixed_costs.iter().map(|f| VariableSetupCost::linear(p.rho * f)).collect();
    let mut inst = Instance::new(
        format!("{}-{}", base.name, p.label()),
        base.nodes.clone(),
        base.flows.clone(),
        base.fixed_costs.clone(),
        nbhd,
        var_cost,
        (p.norm_c, p.norm_c, p.norm_h),
        p.alpha,
    )?;
    if let Some(e) = &base.edges {
        inst.edges = EdgeSet::List(e.iter().copied().collect());
    }
    inst.meta = base.meta.clone();
    inst.meta.insert("dataset".to_string(), base.name.clone());
    inst.meta.insert("tau".to_string(), p.tau.to_string());
    inst.meta.insert("rho".to_string(), p.rho.to_string());
    Ok(inst)
}

/// Value lists spanned by a batch experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioGrid {
    pub alphas: Vec<f64>,
    pub taus: Vec<f64>,
    pub rhos: Vec<f64>,
    pub gauges: Vec<NormKind>,
    /// `(norm_C = norm_D, norm_H)`.
    pub norm_pairs: Vec<(NormKind, NormKind)>,
}

impl ScenarioGrid {
    /// The benchmark grid.
    pub fn benchmark() -> Self {
        use NormKind::*;
        ScenarioGrid {
            alphas: vec![0.2, 0.5, 0.8, 1.0],
            taus: vec![0.25, 0.5, 1.0, 1.5],
            rhos: vec![0.01, 0.1, 1.0, 2.0],
            gauges: vec![L1, L2, LInf],
            norm_pairs: vec![(L1, L1), (L1, L2), (L1, LInf), (L2, L2), (L2, LInf), (LInf, LInf)],
        }
    }

    /// Pairs with `norm_H` strictly below `norm_C`, the only ones admitted at
    /// `alpha = 1`.
    pub fn strict_pairs(&self) -> Vec<(NormKind, NormKind)> {
        self.norm_pairs.iter().copied().filter(|(c, h)| h.is_strictly_below(*c)).collect()
    }

    fn admitted(&self, alpha: f64) -> Vec<(NormKind, NormKind)> {
        if alpha >= 1.0 {
            self.strict_pairs()
        } else {
            self.norm_pairs.clone()
        }
    }

    /// Every parameter combination, ordered by norm pair, alpha, gauge, tau, rho.
    pub fn scenarios(&self) -> Vec<ScenarioParams> {
        let mut out = Vec::new();
        for &(norm_c, norm_h) in &self.norm_pairs {
            for &alpha in &self.alphas {
                if !self.admitted(alpha).contains(&(norm_c, norm_h)) {
                    continue;
                }
                for &gauge in &self.gauges {
                    for &tau in &self.taus {
                        for &rho in &self.rhos {
                            out.push(ScenarioParams { tau, rho, alpha, gauge, norm_c, norm_h });
                        }
                    }
                }
            }
        }
        out
    }

    /// `|pairs| * |alpha < 1| * |tau| * |rho| * |gauge| + |strict pairs| * |alpha = 1| * ...`.
    pub fn expected_count(&self) -> usize {
        let inner = self.taus.len() * self.rhos.len() * self.gauges.len();
        let below = self.alphas.iter().filter(|&&a| a < 1.0).count();
        let at_one = self.alphas.len() - below;
        self.norm_pairs.len() * below * inner + self.strict_pairs().len() * at_one * inner
    }
}

/// Every scenario of the benchmark grid for `base`.
pub fn full_grid(base: &RawData) -> Result<Vec<Instance>, InstanceError> {
    ScenarioGrid::benchmark().scenarios().iter().map(|p| make_scenario(base, p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SMALL: &str = "3\n0 0\n1 0\n3 0\n0 1 2\n3 0 4\n5 6 0\n10 20 30\n";

    fn params(tau: f64, rho: f64) -> ScenarioParams {
        ScenarioParams { tau, rho, alpha: 0.5, gauge: NormKind::L2, norm_c: NormKind::L2, norm_h: NormKind::L2 }
    }

    #[test]
    fn parses_small_file() {
        let raw = parse_raw(SMALL, "s", RawFormat::Ap, &LoadOptions::default()).unwrap();
        assert_eq!(raw.num_nodes(), 3);
        assert_eq!(raw.flows[2][1], 6.0);
        assert_eq!(raw.fixed_costs, vec![10.0, 20.0, 30.0]);
        assert_eq!(raw.edges, None);
    }

    #[test]
    fn empty_input_is_a_parse_error() {
        let err = parse_raw("", "e", RawFormat::Ap, &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, RawError::Parse { line: 1, col: 1, .. }), "{err}");
    }

    #[test]
    fn errors_carry_positions() {
        let text = "2\n0 0\n1 x\n";
        match parse_raw(text, "e", RawFormat::Ap, &LoadOptions::default()).unwrap_err() {
            RawError::Parse { line, col, .. } => assert_eq!((line, col), (3, 3)),
            other => panic!("{other}"),
        }
        let text = "2\n0 0\n1 1\n0 -1\n1 0\n1 1\n";
        match parse_raw(text, "e", RawFormat::Ap, &LoadOptions::default()).unwrap_err() {
            RawError::NegativeFlow { i, j, line, col, .. } => assert_eq!((i, j, line, col), (0, 1, 4, 3)),
            other => panic!("{other}"),
        }
        let text = "2\n0 0\n1 1\n0 1\n1 0\n1 1 1\n";
        assert!(parse_raw(text, "e", RawFormat::Ap, &LoadOptions::default()).is_err());
    }

    #[test]
    fn cab_flows_are_normalized_and_costs_flagged() {
        let text = "2\n0 0\n1 1\n1 3\n2 4\n";
        let opts = LoadOptions { uniform_fixed_cost: Some(100.0) };
        let raw = parse_raw(text, "c", RawFormat::Cab, &opts).unwrap();
        let total: f64 = raw.flows.iter().flatten().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(raw.fixed_costs, vec![100.0, 100.0]);
        assert_eq!(raw.meta["fixed_costs"], "uniform 100");
        assert!(matches!(parse_raw(text, "c", RawFormat::Cab, &LoadOptions::default()), Err(RawError::MissingFixedCosts)));
    }

    #[test]
    fn edge_section_is_read() {
        let text = format!("{SMALL}edges 2\n0 1\n2 1\n");
        let raw = parse_raw(&text, "s", RawFormat::Ap, &LoadOptions::default()).unwrap();
        assert_eq!(raw.edges, Some(vec![(0, 1), (1, 2)]));
        let inst = make_scenario(&raw, &params(1.0, 0.1)).unwrap();
        assert!(inst.admissible(0, 1) && inst.admissible(2, 2) && !inst.admissible(0, 2));
    }

    #[test]
    fn raw_text_round_trip() {
        let raw = tiny_fixture(5, 3);
        let back = parse_raw(&raw.to_text(), &raw.name, RawFormat::Ap, &LoadOptions::default()).unwrap();
        assert_eq!(back.nodes, raw.nodes);
        assert_eq!(back.flows, raw.flows);
        assert_eq!(back.fixed_costs, raw.fixed_costs);
    }

    #[test]
    fn recipe_on_collinear_nodes() {
        let raw = parse_raw(SMALL, "s", RawFormat::Ap, &LoadOptions::default()).unwrap();
        let inst = make_scenario(&raw, &params(0.5, 0.1)).unwrap();
        let r: Vec<f64> = (0..3).map(|k| inst.neighborhood(k).max_radius).collect();
        assert_eq!(r, vec![0.5, 0.5, 1.0]);
        for k in 0..3 {
            assert!((inst.var_cost(k).coeff - 0.1 * inst.fixed_cost(k)).abs() < 1e-15);
        }
        let zero = make_scenario(&raw, &params(0.0, 0.1)).unwrap();
        assert!((0..3).all(|k| zero.neighborhood(k).max_radius == 0.0));
        assert_eq!(inst.norm_d(), inst.norm_c());
        assert_eq!(inst.origin_total(1), 7.0);
        assert_eq!(inst.dest_total(1), 7.0);
        assert!(inst.validate().is_empty());
    }

    #[test]
    fn recipe_rejects_non_strict_pair_at_alpha_one() {
        let raw = tiny_fixture(3, 1);
        let mut p = params(1.0, 0.1);
        p.alpha = 1.0;
        assert!(matches!(make_scenario(&raw, &p), Err(InstanceError::EconomyOfScale { .. })));
        p.norm_h = NormKind::LInf;
        assert!(make_scenario(&raw, &p).is_ok());
    }

    #[test]
    fn validate_reports_problems() {
        let raw = tiny_fixture(3, 2);
        let inst = make_scenario(&raw, &params(1.0, 0.1)).unwrap();
        let mut flows = inst.flows().to_vec();
        flows[0][2] = -1.0;
        let bad = inst.clone().with_flows(flows).unwrap();
        let v = bad.validate();
        assert!(v.contains(&Violation::NegativeFlow { i: 0, j: 2 }));
        assert_eq!(Violation::NegativeFlow { i: 0, j: 2 }.to_string(), "negative flow at (0,2)");

        let f = inst.to_file();
        let mut f2 = f.clone();
        f2.alpha = 1.0;
        f2.norm_c = NormKind::LInf;
        f2.norm_d = NormKind::LInf;
        f2.norm_h = NormKind::L1;
        let v = Instance::from_file(f2).unwrap().validate();
        assert!(v.iter().any(|x| matches!(x, Violation::EconomyOfScale { .. })));
    }

    #[test]
    fn canonical_file_round_trips_bit_exactly() {
        let raw = tiny_fixture(4, 9);
        let inst = make_scenario(&raw, &params(1.0, 0.1)).unwrap();
        let text = inst.to_toml();
        let back = Instance::from_toml(&text).unwrap();
        assert_eq!(back, inst);
        assert_eq!(back.to_toml(), text);
    }

    #[test]
    fn benchmark_grid_count_follows_formula() {
        let g = ScenarioGrid::benchmark();
        let s = g.scenarios();
        assert_eq!(s.len(), g.expected_count());
        assert!(s.iter().filter(|p| p.alpha == 1.0).all(|p| p.norm_h.is_strictly_below(p.norm_c)));
        let pairs: BTreeSet<_> = s.iter().filter(|p| p.alpha == 1.0).map(|p| (p.norm_c, p.norm_h)).collect();
        assert_eq!(pairs.len(), 3);
    }

    #[test]
    fn singleton_grid_has_one_scenario() {
        let g = ScenarioGrid {
            alphas: vec![0.5],
            taus: vec![1.0],
            rhos: vec![0.1],
            gauges: vec![NormKind::L2],
            norm_pairs: vec![(NormKind::L2, NormKind::L2)],
        };
        assert_eq!(g.scenarios().len(), 1);
        assert_eq!(g.expected_count(), 1);
    }

    proptest! {
        #[test]
        fn scenario_generation_is_deterministic(seed in 0u64..1000, tau in 0.0f64..2.0, rho in 0.0f64..2.0) {
            let raw = tiny_fixture(4, seed);
            let a = make_scenario(&raw, &params(tau, rho)).unwrap().to_toml();
            let b = make_scenario(&raw, &params(tau, rho)).unwrap().to_toml();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn flow_totals_match_sums(seed in 0u64..1000) {
            let raw = tiny_fixture(5, seed);
            let inst = make_scenario(&raw, &params(1.0, 0.1)).unwrap();
            let grand: f64 = inst.flows().iter().flatten().sum();
            let o: f64 = (0..5).map(|i| inst.origin_total(i)).sum();
            let d: f64 = (0..5).map(|j| inst.dest_total(j)).sum();
            prop_assert!((o - grand).abs() < 1e-9 && (d - grand).abs() < 1e-9);
            prop_assert!(inst.validate().is_empty());
        }
    }
}
