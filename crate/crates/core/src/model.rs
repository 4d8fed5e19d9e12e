//! Hybrid mixed networks: discrete CPTs, linear-Gaussian CPDs and hard
//! constraints over discrete variables, sharing one set of variables.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};

/// Dense variable index, `0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

impl VarId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Discrete { cardinality: usize },
    Continuous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub id: VarId,
    pub name: String,
    pub kind: VarKind,
}

impl Variable {
    pub fn discrete(id: usize, name: impl Into<String>, cardinality: usize) -> Self {
        Variable {
            id: VarId(id),
            name: name.into(),
            kind: VarKind::Discrete { cardinality },
        }
    }

    pub fn continuous(id: usize, name: impl Into<String>) -> Self {
        Variable {
            id: VarId(id),
            name: name.into(),
            kind: VarKind::Continuous,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, VarKind::Discrete { .. })
    }

    /// Cardinality of a discrete variable, `None` for continuous ones.
    pub fn cardinality(&self) -> Option<usize> {
        match self.kind {
            VarKind::Discrete { cardinality } => Some(cardinality),
            VarKind::Continuous => None,
        }
    }
}

/// `P(child | parents)` as a table. Rows are parent configurations in
/// row-major order (last parent fastest); within a row the child value runs
/// fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularCpd {
    pub child: VarId,
    pub parents: Vec<VarId>,
    pub table: Vec<f64>,
}

/// One discrete-parent configuration of a linear-Gaussian CPD:
/// `child ~ N(intercept + coefficients . z, variance)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianConfig {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianCpd {
    pub child: VarId,
    pub discrete_parents: Vec<VarId>,
    pub continuous_parents: Vec<VarId>,
    /// One entry per discrete-parent configuration, row-major.
    pub configs: Vec<GaussianConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cpd {
    Tabular(TabularCpd),
    LinearGaussian(LinearGaussianCpd),
}

impl Cpd {
    pub fn child(&self) -> VarId {
        match self {
            Cpd::Tabular(t) => t.child,
            Cpd::LinearGaussian(g) => g.child,
        }
    }

    pub fn parents(&self) -> Vec<VarId> {
        match self {
            Cpd::Tabular(t) => t.parents.clone(),
            Cpd::LinearGaussian(g) => g
                .discrete_parents
                .iter()
                .chain(g.continuous_parents.iter())
                .copied()
                .collect(),
        }
    }
}

/// A hard constraint given by its allowed tuples.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintRelation {
    pub scope: Vec<VarId>,
    pub allowed: BTreeSet<Vec<usize>>,
}

impl ConstraintRelation {
    /// Builds a relation from the tuples it forbids.
    pub fn from_forbidden(scope: Vec<VarId>, cards: &[usize], forbidden: &[Vec<usize>]) -> Self {
        let forbidden: BTreeSet<&Vec<usize>> = forbidden.iter().collect();
        let allowed = all_tuples(cards)
            .into_iter()
            .filter(|t| !forbidden.contains(t))
            .collect();
        ConstraintRelation { scope, allowed }
    }

    pub fn allows(&self, tuple: &[usize]) -> bool {
        self.allowed.contains(tuple)
    }
}

/// Every tuple over the given cardinalities, row-major.
pub fn all_tuples(cards: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = cards.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut cur = vec![0; cards.len()];
    for _ in 0..total {
        out.push(cur.clone());
        for pos in (0..cards.len()).rev() {
            cur[pos] += 1;
            if cur[pos] < cards[pos] {
                break;
            }
            cur[pos] = 0;
        }
    }
    out
}

/// A function of the network: either the CPD of a variable or a constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FunctionId {
    Cpd(VarId),
    Constraint(usize),
}

/// A value held by a variable in an assignment or in evidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Discrete(usize),
    Continuous(f64),
}

impl Value {
    pub fn as_discrete(self) -> Option<usize> {
        match self {
            Value::Discrete(v) => Some(v),
            Value::Continuous(_) => None,
        }
    }

    pub fn as_continuous(self) -> Option<f64> {
        match self {
            Value::Continuous(v) => Some(v),
            Value::Discrete(_) => None,
        }
    }
}

/// Observed values keyed by variable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Evidence(BTreeMap<VarId, Value>);

impl Evidence {
    pub fn new() -> Self {
        Evidence(BTreeMap::new())
    }

    pub fn insert(&mut self, var: VarId, value: Value) -> Option<Value> {
        self.0.insert(var, value)
    }

    pub fn get(&self, var: VarId) -> Option<Value> {
        self.0.get(&var).copied()
    }

    pub fn contains(&self, var: VarId) -> bool {
        self.0.contains_key(&var)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, Value)> + '_ {
        self.0.iter().map(|(k, v)| (*k, *v))
    }

    pub fn vars(&self) -> BTreeSet<VarId> {
        self.0.keys().copied().collect()
    }

    /// Evidence extended with extra observations (later entries win).
    pub fn extended(&self, extra: impl IntoIterator<Item = (VarId, Value)>) -> Evidence {
        let mut out = self.clone();
        for (k, v) in extra {
            out.0.insert(k, v);
        }
        out
    }

    /// Checks kinds and ranges against the network.
    pub fn validate(&self, net: &HybridMixedNetwork) -> Result<()> {
        for (var, value) in self.iter() {
            let Some(v) = net.variables.get(var.index()) else {
                return Err(Error::DanglingVariableReference(format!("evidence on {var}")));
            };
            match (v.kind, value) {
                (VarKind::Discrete { cardinality }, Value::Discrete(x)) if x < cardinality => {}
                (VarKind::Continuous, Value::Continuous(x)) if x.is_finite() => {}
                _ => {
                    return Err(Error::InvalidEvidence(format!(
                        "value {value:?} is invalid for `{}`",
                        v.name
                    )))
                }
            }
        }
        Ok(())
    }
}

impl FromIterator<(VarId, Value)> for Evidence {
    fn from_iter<I: IntoIterator<Item = (VarId, Value)>>(iter: I) -> Self {
        Evidence(iter.into_iter().collect())
    }
}

/// Simple undirected graph over `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UndirectedGraph {
    adjacency: Vec<BTreeSet<usize>>,
}

impl UndirectedGraph {
    pub fn new(n: usize) -> Self {
        UndirectedGraph {
            adjacency: vec![BTreeSet::new(); n],
        }
    }

    pub fn add_edge(&mut self, a: usize, b: usize) {
        if a != b {
            self.adjacency[a].insert(b);
            self.adjacency[b].insert(a);
        }
    }

    pub fn add_clique(&mut self, vertices: &[usize]) {
        for (k, &a) in vertices.iter().enumerate() {
            for &b in &vertices[k + 1..] {
                self.add_edge(a, b);
            }
        }
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].contains(&b)
    }

    pub fn neighbors(&self, v: usize) -> &BTreeSet<usize> {
        &self.adjacency[v]
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    /// Edges as `(a, b)` pairs with `a < b`.
    pub fn edges(&self) -> BTreeSet<(usize, usize)> {
        let mut out = BTreeSet::new();
        for (a, nbrs) in self.adjacency.iter().enumerate() {
            for &b in nbrs {
                if a < b {
                    out.insert((a, b));
                }
            }
        }
        out
    }
}

/// A validated hybrid mixed network. Immutable after [`build_network`].
#[derive(Debug, Clone, PartialEq)]
pub struct HybridMixedNetwork {
    variables: Vec<Variable>,
    /// `cpds[v]` is the CPD whose child is `v`.
    cpds: Vec<Cpd>,
    constraints: Vec<ConstraintRelation>,
    parents: Vec<Vec<VarId>>,
    children: Vec<Vec<VarId>>,
    topological: Vec<VarId>,
}

const NORMALIZATION_TOL: f64 = 1e-12;

/// Validates the parts and assembles a network.
pub fn build_network(
    variables: Vec<Variable>,
    cpds: Vec<Cpd>,
    constraints: Vec<ConstraintRelation>,
) -> Result<HybridMixedNetwork> {
    let n = variables.len();
    for (i, v) in variables.iter().enumerate() {
        if v.id.index() != i {
            return Err(Error::InvalidNetwork(format!(
                "variable `{}` has id {} at position {i}",
                v.name,
                v.id.index()
            )));
        }
        if let VarKind::Discrete { cardinality } = v.kind {
            if cardinality < 2 {
                return Err(Error::InvalidNetwork(format!(
                    "discrete variable `{}` has cardinality {cardinality}",
                    v.name
                )));
            }
        }
    }
    let check_ref = |id: VarId, what: &str| -> Result<()> {
        if id.index() >= n {
            Err(Error::DanglingVariableReference(format!("{what} refers to {id}")))
        } else {
            Ok(())
        }
    };

    let mut slots: Vec<Option<Cpd>> = vec![None; n];
    for cpd in cpds {
        let child = cpd.child();
        check_ref(child, "CPD child")?;
        for p in cpd.parents() {
            check_ref(p, "CPD parent")?;
        }
        validate_cpd(&variables, &cpd)?;
        if slots[child.index()].is_some() {
            return Err(Error::InvalidNetwork(format!(
                "variable `{}` has more than one CPD",
                variables[child.index()].name
            )));
        }
        slots[child.index()] = Some(cpd);
    }
    let mut cpds = Vec::with_capacity(n);
    for (i, slot) in slots.into_iter().enumerate() {
        match slot {
            Some(c) => cpds.push(c),
            None => {
                return Err(Error::InvalidNetwork(format!(
                    "variable `{}` has no CPD",
                    variables[i].name
                )))
            }
        }
    }

    for (ci, rel) in constraints.iter().enumerate() {
        let mut seen = BTreeSet::new();
        for &v in &rel.scope {
            check_ref(v, "constraint scope")?;
            if !variables[v.index()].is_discrete() {
                return Err(Error::InvalidNetwork(format!(
                    "constraint {ci} mentions continuous variable `{}`",
                    variables[v.index()].name
                )));
            }
            if !seen.insert(v) {
                return Err(Error::InvalidNetwork(format!(
                    "constraint {ci} repeats a variable in its scope"
                )));
            }
        }
        if rel.allowed.is_empty() {
            return Err(Error::EmptyRelation(ci));
        }
        for t in &rel.allowed {
            if t.len() != rel.scope.len() {
                return Err(Error::InvalidNetwork(format!(
                    "constraint {ci} has a tuple of length {}",
                    t.len()
                )));
            }
            for (&v, &x) in rel.scope.iter().zip(t) {
                if x >= variables[v.index()].cardinality().unwrap_or(0) {
                    return Err(Error::InvalidNetwork(format!(
                        "constraint {ci} has value {x} out of range for `{}`",
                        variables[v.index()].name
                    )));
                }
            }
        }
    }

    let parents: Vec<Vec<VarId>> = cpds.iter().map(Cpd::parents).collect();
    let mut children = vec![Vec::new(); n];
    for (c, ps) in parents.iter().enumerate() {
        for p in ps {
            children[p.index()].push(VarId(c));
        }
    }
    let topological = topological_order(&variables, &parents, &children)?;

    Ok(HybridMixedNetwork {
        variables,
        cpds,
        constraints,
        parents,
        children,
        topological,
    })
}

fn validate_cpd(variables: &[Variable], cpd: &Cpd) -> Result<()> {
    let name = |v: VarId| variables[v.index()].name.clone();
    match cpd {
        Cpd::Tabular(t) => {
            let Some(child_card) = variables[t.child.index()].cardinality() else {
                return Err(Error::InvalidNetwork(format!(
                    "continuous variable `{}` has a tabular CPD",
                    name(t.child)
                )));
            };
            let mut rows = 1usize;
            let mut seen = BTreeSet::new();
            for &p in &t.parents {
                if p == t.child || !seen.insert(p) {
                    return Err(Error::InvalidNetwork(format!(
                        "CPD of `{}` has a repeated parent",
                        name(t.child)
                    )));
                }
                match variables[p.index()].cardinality() {
                    Some(c) => rows *= c,
                    None => {
                        return Err(Error::ContinuousHasDiscreteChild {
                            parent: name(p),
                            child: name(t.child),
                        })
                    }
                }
            }
            if t.table.len() != rows * child_card {
                return Err(Error::InvalidNetwork(format!(
                    "CPT of `{}` has {} entries, expected {}",
                    name(t.child),
                    t.table.len(),
                    rows * child_card
                )));
            }
            for (row, chunk) in t.table.chunks(child_card).enumerate() {
                let sum: f64 = chunk.iter().sum();
                let in_range = chunk.iter().all(|p| (0.0..=1.0).contains(p));
                if !in_range || (sum - 1.0).abs() > NORMALIZATION_TOL {
                    return Err(Error::UnnormalizedCpt {
                        child: name(t.child),
                        row,
                        sum,
                    });
                }
            }
        }
        Cpd::LinearGaussian(g) => {
            if variables[g.child.index()].is_discrete() {
                return Err(Error::InvalidNetwork(format!(
                    "discrete variable `{}` has a linear-Gaussian CPD",
                    name(g.child)
                )));
            }
            let mut configs = 1usize;
            let mut seen = BTreeSet::new();
            for &p in g.discrete_parents.iter().chain(&g.continuous_parents) {
                if p == g.child || !seen.insert(p) {
                    return Err(Error::InvalidNetwork(format!(
                        "CPD of `{}` has a repeated parent",
                        name(g.child)
                    )));
                }
            }
            for &p in &g.discrete_parents {
                match variables[p.index()].cardinality() {
                    Some(c) => configs *= c,
                    None => {
                        return Err(Error::InvalidNetwork(format!(
                            "`{}` is listed as a discrete parent but is continuous",
                            name(p)
                        )))
                    }
                }
            }
            for &p in &g.continuous_parents {
                if variables[p.index()].is_discrete() {
                    return Err(Error::InvalidNetwork(format!(
                        "`{}` is listed as a continuous parent but is discrete",
                        name(p)
                    )));
                }
            }
            if g.configs.len() != configs {
                return Err(Error::InvalidNetwork(format!(
                    "CPD of `{}` has {} configurations, expected {configs}",
                    name(g.child),
                    g.configs.len()
                )));
            }
            for c in &g.configs {
                if c.coefficients.len() != g.continuous_parents.len() {
                    return Err(Error::InvalidNetwork(format!(
                        "CPD of `{}` has a coefficient vector of the wrong length",
                        name(g.child)
                    )));
                }
                let finite = c.intercept.is_finite() && c.coefficients.iter().all(|b| b.is_finite());
                if !(c.variance > 0.0 && c.variance.is_finite()) || !finite {
                    return Err(Error::InvalidNetwork(format!(
                        "CPD of `{}` has a non-finite parameter or non-positive variance",
                        name(g.child)
                    )));
                }
            }
        }
    }
    Ok(())
}

fn topological_order(
    variables: &[Variable],
    parents: &[Vec<VarId>],
    children: &[Vec<VarId>],
) -> Result<Vec<VarId>> {
    let n = variables.len();
    let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut ready: BTreeSet<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop_first() {
        order.push(VarId(v));
        for c in &children[v] {
            indegree[c.index()] -= 1;
            if indegree[c.index()] == 0 {
                ready.insert(c.index());
            }
        }
    }
    if order.len() != n {
        let stuck = (0..n).find(|&v| indegree[v] > 0).unwrap_or(0);
        return Err(Error::CyclicGraph(variables[stuck].name.clone()));
    }
    Ok(order)
}

impl HybridMixedNetwork {
    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable(&self, id: VarId) -> &Variable {
        &self.variables[id.index()]
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn cpds(&self) -> &[Cpd] {
        &self.cpds
    }

    pub fn cpd(&self, child: VarId) -> &Cpd {
        &self.cpds[child.index()]
    }

    pub fn constraints(&self) -> &[ConstraintRelation] {
        &self.constraints
    }

    pub fn parents(&self, v: VarId) -> &[VarId] {
        &self.parents[v.index()]
    }

    pub fn children(&self, v: VarId) -> &[VarId] {
        &self.children[v.index()]
    }

    /// Variables with every parent before its children (ties by id).
    pub fn topological_order(&self) -> &[VarId] {
        &self.topological
    }

    pub fn is_discrete(&self, v: VarId) -> bool {
        self.variables[v.index()].is_discrete()
    }

    /// Cardinality of a discrete variable; panics for continuous ones.
    pub fn cardinality(&self, v: VarId) -> usize {
        self.variables[v.index()]
            .cardinality()
            .expect("cardinality of a continuous variable")
    }

    pub fn max_cardinality(&self) -> usize {
        self.variables.iter().filter_map(Variable::cardinality).max().unwrap_or(0)
    }

    pub fn discrete_vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.variables.iter().filter(|v| v.is_discrete()).map(|v| v.id)
    }

    pub fn continuous_vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.variables.iter().filter(|v| !v.is_discrete()).map(|v| v.id)
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.variables.iter().find(|v| v.name == name).map(|v| v.id)
    }

    /// Every CPD followed by every constraint.
    pub fn functions(&self) -> impl Iterator<Item = FunctionId> + '_ {
        (0..self.cpds.len())
            .map(|v| FunctionId::Cpd(VarId(v)))
            .chain((0..self.constraints.len()).map(FunctionId::Constraint))
    }

    /// Scope of a function, sorted by id.
    pub fn function_scope(&self, f: FunctionId) -> Vec<VarId> {
        let mut scope = match f {
            FunctionId::Cpd(v) => {
                let mut s = self.parents[v.index()].clone();
                s.push(v);
                s
            }
            FunctionId::Constraint(c) => self.constraints[c].scope.clone(),
        };
        scope.sort();
        scope
    }

    pub fn function_label(&self, f: FunctionId) -> String {
        let names = |vs: &[VarId]| {
            vs.iter()
                .map(|v| self.variables[v.index()].name.as_str())
                .collect::<Vec<_>>()
                .join(",")
        };
        match f {
            FunctionId::Cpd(v) => {
                let ps = &self.parents[v.index()];
                if ps.is_empty() {
                    format!("P({})", self.variables[v.index()].name)
                } else {
                    format!("P({}|{})", self.variables[v.index()].name, names(ps))
                }
            }
            FunctionId::Constraint(c) => format!("R({})", names(&self.constraints[c].scope)),
        }
    }

    /// Vertex per variable, a clique over the scope of every function.
    pub fn primal_graph(&self) -> UndirectedGraph {
        let mut g = UndirectedGraph::new(self.len());
        for f in self.functions() {
            let scope: Vec<usize> = self.function_scope(f).iter().map(|v| v.index()).collect();
            g.add_clique(&scope);
        }
        g
    }

    /// Natural log of the unnormalized joint: product of every CPD (Gaussian
    /// CPDs as densities) times the constraint indicators.
    pub fn log_joint_density(&self, assignment: &[Value]) -> Result<f64> {
        if assignment.len() < self.len() {
            return Err(Error::IncompleteAssignment(
                self.variables[assignment.len()].name.clone(),
            ));
        }
        let discrete = |v: VarId| -> Result<usize> {
            match assignment[v.index()] {
                Value::Discrete(x) if x < self.cardinality(v) => Ok(x),
                _ => Err(Error::InvalidEvidence(format!(
                    "bad value for `{}`",
                    self.variables[v.index()].name
                ))),
            }
        };
        let continuous = |v: VarId| -> Result<f64> {
            assignment[v.index()].as_continuous().ok_or_else(|| {
                Error::InvalidEvidence(format!("bad value for `{}`", self.variables[v.index()].name))
            })
        };
        let mut total = 0.0;
        for cpd in &self.cpds {
            match cpd {
                Cpd::Tabular(t) => {
                    let mut row = 0;
                    for &p in &t.parents {
                        row = row * self.cardinality(p) + discrete(p)?;
                    }
                    let idx = row * self.cardinality(t.child) + discrete(t.child)?;
                    total += t.table[idx].ln();
                }
                Cpd::LinearGaussian(g) => {
                    let mut row = 0;
                    for &p in &g.discrete_parents {
                        row = row * self.cardinality(p) + discrete(p)?;
                    }
                    let cfg = &g.configs[row];
                    let mut mean = cfg.intercept;
                    for (&z, &b) in g.continuous_parents.iter().zip(&cfg.coefficients) {
                        mean += b * continuous(z)?;
                    }
                    let x = continuous(g.child)?;
                    total += -0.5 * (2.0 * PI * cfg.variance).ln()
                        - (x - mean).powi(2) / (2.0 * cfg.variance);
                }
            }
        }
        for rel in &self.constraints {
            let tuple: Vec<usize> = rel.scope.iter().map(|&v| discrete(v)).collect::<Result<_>>()?;
            if !rel.allows(&tuple) {
                return Ok(f64::NEG_INFINITY);
            }
        }
        Ok(total)
    }
}
