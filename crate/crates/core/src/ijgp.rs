//! Iterative join-graph propagation with a synchronous schedule.
//!
//! Each round recomputes every directed message from the previous round's
//! messages. A message is the node product (functions and all other incoming
//! messages) projected onto the edge label. When the projection has to
//! collapse a Gaussian mixture, the collapse is taken over the full belief
//! and the reverse message is divided back out, which keeps propagation on
//! trees exact. Messages are rescaled so their largest `g` is zero.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::decomposition::JoinGraphDecomposition;
use crate::error::{Error, Result};
use crate::exact::normalize_log;
use crate::model::{Evidence, FunctionId, HybridMixedNetwork, Value, VarId};
use crate::potential::{log_sum_exp, CgPotential, Integration};

/// Default convergence tolerance on the message residual.
pub const DEFAULT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct IjgpState {
    graph: JoinGraphDecomposition,
    evidence: Evidence,
    functions: Vec<Vec<(FunctionId, CgPotential)>>,
    potentials: Vec<CgPotential>,
    messages: Vec<CgPotential>,
    iterations: usize,
    converged: bool,
    residual: f64,
    trace: Vec<f64>,
    cards: Vec<Option<usize>>,
    names: Vec<String>,
}

/// Index of the message `from -> to` along edge `edge`.
fn slot(graph: &JoinGraphDecomposition, edge: usize, from: usize) -> usize {
    if graph.edges()[edge].a == from {
        2 * edge
    } else {
        2 * edge + 1
    }
}

/// Runs up to `max_iterations` synchronous rounds, stopping early once the
/// residual falls below `tolerance`.
pub fn run(
    net: &HybridMixedNetwork,
    graph: &JoinGraphDecomposition,
    evidence: &Evidence,
    max_iterations: usize,
    tolerance: f64,
) -> Result<IjgpState> {
    evidence.validate(net)?;
    for v in 0..net.len() {
        if !graph.kept_vars().contains(&VarId(v)) && !evidence.contains(VarId(v)) {
            return Err(Error::VariableNotCovered(net.variable(VarId(v)).name.clone()));
        }
    }
    let functions: Vec<Vec<(FunctionId, CgPotential)>> = graph
        .nodes()
        .iter()
        .map(|c| {
            c.functions
                .iter()
                .map(|&f| (f, CgPotential::from_function(net, f).reduce_evidence(evidence)))
                .collect()
        })
        .collect();
    let potentials: Vec<CgPotential> = functions
        .iter()
        .map(|fs| fs.iter().fold(CgPotential::vacuous(), |acc, (_, p)| acc.multiply(p)))
        .collect();
    let mut state = IjgpState {
        graph: graph.clone(),
        evidence: evidence.clone(),
        functions,
        potentials,
        messages: vec![CgPotential::vacuous(); 2 * graph.edges().len()],
        iterations: 0,
        converged: false,
        residual: f64::INFINITY,
        trace: Vec::new(),
        cards: net.variables().iter().map(|v| v.cardinality()).collect(),
        names: net.variables().iter().map(|v| v.name.clone()).collect(),
    };
    if graph.edges().is_empty() {
        state.converged = true;
        state.residual = 0.0;
        return Ok(state);
    }
    while state.iterations < max_iterations {
        let fresh: Vec<CgPotential> = (0..state.messages.len())
            .into_par_iter()
            .map(|s| state.compute_message(s))
            .collect::<Result<_>>()?;
        let residual = fresh
            .iter()
            .zip(&state.messages)
            .map(|(new, old)| message_change(new, old))
            .fold(0.0, f64::max);
        state.messages = fresh;
        state.iterations += 1;
        state.residual = residual;
        state.trace.push(residual);
        log::debug!("ijgp round {}: residual {residual:.3e}", state.iterations);
        if residual < tolerance {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}

impl IjgpState {
    fn compute_message(&self, s: usize) -> Result<CgPotential> {
        let edge = &self.graph.edges()[s / 2];
        let from = if s.is_multiple_of(2) { edge.a } else { edge.b };
        let reverse = s ^ 1;
        let mut product = self.potentials[from].clone();
        for &(_, e) in self.graph.neighbors(from) {
            let incoming = slot(&self.graph, e, from) ^ 1;
            if incoming != reverse {
                product = product.multiply(&self.messages[incoming]);
            }
        }
        let label = &edge.label;
        let collapses = product.continuous_scope().iter().any(|v| label.contains(v))
            && product.discrete_scope().iter().any(|v| !label.contains(v));
        let mut msg = if collapses {
            product
                .multiply(&self.messages[reverse])
                .marginalize_onto(label, Integration::Lenient)?
                .divide(&self.messages[reverse])
        } else {
            product.marginalize_onto(label, Integration::Lenient)?
        };
        msg.normalize_max();
        Ok(msg)
    }

    pub fn graph(&self) -> &JoinGraphDecomposition {
        &self.graph
    }

    pub fn evidence(&self) -> &Evidence {
        &self.evidence
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Largest message change in the last round.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Residual after each round.
    pub fn residual_trace(&self) -> &[f64] {
        &self.trace
    }

    /// Evidence-reduced functions assigned to `node`.
    pub fn node_functions(&self, node: usize) -> &[(FunctionId, CgPotential)] {
        &self.functions[node]
    }

    /// Message `from -> to` along edge `edge`.
    pub fn message(&self, edge: usize, from: usize) -> &CgPotential {
        &self.messages[slot(&self.graph, edge, from)]
    }

    /// Every directed message as `(from, to, potential)`.
    pub fn messages(&self) -> impl Iterator<Item = (usize, usize, &CgPotential)> + '_ {
        self.graph.edges().iter().enumerate().flat_map(move |(k, e)| {
            [(e.a, e.b, &self.messages[2 * k]), (e.b, e.a, &self.messages[2 * k + 1])]
        })
    }

    /// Node functions times all incoming messages.
    pub fn belief(&self, node: usize) -> CgPotential {
        self.graph
            .neighbors(node)
            .iter()
            .fold(self.potentials[node].clone(), |acc, &(_, e)| {
                acc.multiply(&self.messages[slot(&self.graph, e, node) ^ 1])
            })
    }

    /// `true` when some node's belief has no support at all, meaning
    /// propagation found the evidence inconsistent.
    pub fn inconsistent(&self) -> bool {
        (0..self.graph.nodes().len()).any(|n| self.belief(n).is_all_zero())
    }

    fn name(&self, var: VarId) -> String {
        self.names.get(var.index()).cloned().unwrap_or_else(|| var.to_string())
    }

    fn card(&self, var: VarId) -> Result<usize> {
        self.cards
            .get(var.index())
            .copied()
            .flatten()
            .ok_or_else(|| Error::VariableNotCovered(self.name(var)))
    }

    fn covering_nodes(&self, var: VarId) -> Vec<usize> {
        (0..self.graph.nodes().len())
            .filter(|&n| self.graph.nodes()[n].vars.contains(&var))
            .collect()
    }

    /// Unnormalized log-masses of `var`'s values in one node's belief.
    fn log_marginal_at(&self, node: usize, var: VarId, card: usize) -> Result<Vec<f64>> {
        let belief = self.belief(node);
        if !belief.discrete_scope().contains(&var) {
            let total = log_sum_exp(
                belief
                    .marginalize_onto(&BTreeSet::new(), Integration::Lenient)?
                    .components()
                    .iter()
                    .map(|c| c.g),
            );
            return Ok(vec![total; card]);
        }
        let m = belief.marginalize_onto(&BTreeSet::from([var]), Integration::Lenient)?;
        Ok(m.components().iter().map(|c| c.g).collect())
    }

    /// Approximate posterior of a discrete variable from the lowest-id node
    /// covering it. Uniform when that belief has no support.
    pub fn approx_discrete_marginal(&self, var: VarId) -> Result<Vec<f64>> {
        let card = self.card(var)?;
        if let Some(Value::Discrete(x)) = self.evidence.get(var) {
            let mut out = vec![0.0; card];
            out[x] = 1.0;
            return Ok(out);
        }
        let node = *self
            .covering_nodes(var)
            .first()
            .ok_or_else(|| Error::VariableNotCovered(self.name(var)))?;
        let logs = self.log_marginal_at(node, var, card)?;
        if logs.iter().all(|g| *g == f64::NEG_INFINITY) {
            return Ok(vec![1.0 / card as f64; card]);
        }
        Ok(normalize_log(&logs))
    }

    /// Values of `var` with exactly zero belief in some covering node.
    pub fn zero_support(&self, var: VarId) -> Result<BTreeSet<usize>> {
        let card = self.card(var)?;
        if let Some(Value::Discrete(x)) = self.evidence.get(var) {
            return Ok((0..card).filter(|&y| y != x).collect());
        }
        let mut out = BTreeSet::new();
        for node in self.covering_nodes(var) {
            let logs = self.log_marginal_at(node, var, card)?;
            out.extend((0..card).filter(|&x| logs[x] == f64::NEG_INFINITY));
        }
        Ok(out)
    }
}

/// Change between two normalized messages: largest shift in normalized
/// configuration weights, or relative change of canonical parameters,
/// capped at 1.
fn message_change(new: &CgPotential, old: &CgPotential) -> f64 {
    if new.discrete_scope() != old.discrete_scope() || new.continuous_scope() != old.continuous_scope() {
        return 1.0;
    }
    let weights = |p: &CgPotential| {
        let total = log_sum_exp(p.components().iter().map(|c| c.g));
        p.components()
            .iter()
            .map(|c| if total.is_finite() { (c.g - total).exp() } else { 0.0 })
            .collect::<Vec<f64>>()
    };
    let (wn, wo) = (weights(new), weights(old));
    let mut change = wn.iter().zip(&wo).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    for (a, b) in new.components().iter().zip(old.components()) {
        match (a.is_zero_mass(), b.is_zero_mass()) {
            (true, true) => continue,
            (false, false) => {}
            _ => return 1.0,
        }
        if a.dim() == 0 {
            continue;
        }
        let scale = 1.0_f64.max(b.h.amax()).max(b.k.amax());
        let diff = (&a.h - &b.h).amax().max((&a.k - &b.k).amax());
        change = change.max((diff / scale).min(1.0));
    }
    change
}
