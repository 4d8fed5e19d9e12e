//! Exact inference by join-tree clustering.
//!
//! The collect pass sends unnormalized messages toward the strong root,
//! integrating continuous variables before summing discrete ones. The
//! distribute pass sends `weak_marginal(belief) / reverse message`, so a
//! mixture is collapsed only after it has absorbed all evidence.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};

use crate::decomposition::JoinTreeDecomposition;
use crate::error::{Error, Result};
use crate::model::{Evidence, HybridMixedNetwork, Value, VarId};
use crate::potential::{log_sum_exp, CgPotential, GaussianMoments, Integration};

/// Message between adjacent nodes of a calibrated tree.
#[derive(Debug, Clone)]
pub struct Message {
    pub from: usize,
    pub to: usize,
    pub potential: CgPotential,
}

/// Join tree with cached function potentials, ready to be calibrated
/// against any evidence over the excluded variables.
#[derive(Debug, Clone)]
pub struct Calibrator {
    tree: JoinTreeDecomposition,
    functions: Vec<Vec<CgPotential>>,
    schedule: Vec<(usize, Option<usize>)>,
    children: Vec<Vec<usize>>,
    cards: Vec<Option<usize>>,
    names: Vec<String>,
}

/// Beliefs and messages of a calibrated tree.
#[derive(Debug, Clone)]
pub struct CalibratedTree {
    tree: JoinTreeDecomposition,
    evidence: Evidence,
    cards: Vec<Option<usize>>,
    names: Vec<String>,
    beliefs: Vec<CgPotential>,
    messages: Vec<Message>,
    log_evidence: f64,
}

impl Calibrator {
    pub fn new(net: &HybridMixedNetwork, tree: JoinTreeDecomposition) -> Self {
        let functions = tree
            .nodes()
            .iter()
            .map(|c| c.functions.iter().map(|&f| CgPotential::from_function(net, f)).collect())
            .collect();
        let schedule = tree.rooted_order();
        let mut children = vec![Vec::new(); tree.nodes().len()];
        for &(v, p) in &schedule {
            if let Some(p) = p {
                children[p].push(v);
            }
        }
        Calibrator {
            tree,
            functions,
            schedule,
            children,
            cards: net.variables().iter().map(|v| v.cardinality()).collect(),
            names: net.variables().iter().map(|v| v.name.clone()).collect(),
        }
    }

    pub fn tree(&self) -> &JoinTreeDecomposition {
        &self.tree
    }

    fn check_evidence(&self, evidence: &Evidence) -> Result<()> {
        for (v, value) in evidence.iter() {
            let card = self
                .cards
                .get(v.index())
                .ok_or_else(|| Error::InvalidEvidence(format!("unknown variable {v}")))?;
            match (card, value) {
                (Some(c), Value::Discrete(x)) if x < *c => {}
                (None, Value::Continuous(x)) if x.is_finite() => {}
                _ => return Err(Error::InvalidEvidence(format!("bad value for `{}`", self.names[v.index()]))),
            }
        }
        for v in 0..self.cards.len() {
            if !self.tree.kept_vars().contains(&VarId(v)) && !evidence.contains(VarId(v)) {
                return Err(Error::VariableNotCovered(self.names[v].clone()));
            }
        }
        Ok(())
    }

    fn node_potentials(&self, evidence: &Evidence) -> Vec<CgPotential> {
        self.functions
            .iter()
            .map(|fs| {
                fs.iter()
                    .map(|f| f.reduce_evidence(evidence))
                    .fold(CgPotential::vacuous(), |acc, f| acc.multiply(&f))
            })
            .collect()
    }

    /// Upward pass; returns per-node products (function potentials times
    /// child messages) and the message each non-root node sent.
    fn collect(&self, evidence: &Evidence) -> Result<(Vec<CgPotential>, Vec<Option<CgPotential>>)> {
        let mut products = self.node_potentials(evidence);
        let mut up: Vec<Option<CgPotential>> = vec![None; products.len()];
        for &(v, parent) in self.schedule.iter().rev() {
            for &c in &self.children[v] {
                let msg = up[c].as_ref().expect("children precede parents");
                products[v] = products[v].multiply(msg);
            }
            if let Some(p) = parent {
                let sep = self.tree.separator(v, p);
                up[v] = Some(products[v].marginalize_onto(&sep, Integration::Strict)?);
            }
        }
        Ok((products, up))
    }

    /// `log P(evidence)`, or `-inf` when the evidence has zero probability.
    pub fn log_evidence(&self, evidence: &Evidence) -> Result<f64> {
        self.check_evidence(evidence)?;
        let (products, _) = self.collect(evidence)?;
        products[self.tree.strong_root()].log_total_mass()
    }

    pub fn calibrate(&self, evidence: &Evidence) -> Result<CalibratedTree> {
        self.check_evidence(evidence)?;
        let (products, up) = self.collect(evidence)?;
        let root = self.tree.strong_root();
        let log_evidence = products[root].log_total_mass()?;
        if log_evidence == f64::NEG_INFINITY {
            return Err(Error::InconsistentEvidence);
        }
        let mut beliefs = products;
        let mut messages = Vec::with_capacity(2 * self.schedule.len());
        for &(v, parent) in &self.schedule {
            let Some(p) = parent else { continue };
            let upward = up[v].clone().unwrap();
            let sep = self.tree.separator(v, p);
            let down = beliefs[p].marginalize_onto(&sep, Integration::Strict)?.divide(&upward);
            beliefs[v] = beliefs[v].multiply(&down);
            messages.push(Message {
                from: v,
                to: p,
                potential: upward,
            });
            messages.push(Message {
                from: p,
                to: v,
                potential: down,
            });
        }
        Ok(CalibratedTree {
            tree: self.tree.clone(),
            evidence: evidence.clone(),
            cards: self.cards.clone(),
            names: self.names.clone(),
            beliefs,
            messages,
            log_evidence,
        })
    }
}

/// Calibrates `tree` against `evidence`. Fails with
/// [`Error::InconsistentEvidence`] when the evidence has zero probability.
pub fn calibrate(net: &HybridMixedNetwork, tree: &JoinTreeDecomposition, evidence: &Evidence) -> Result<CalibratedTree> {
    Calibrator::new(net, tree.clone()).calibrate(evidence)
}

/// `log P(assignment, evidence)`; `-inf` for an inconsistent combination.
/// `tree` must cover every variable outside the evidence and assignment.
pub fn joint_probability(
    net: &HybridMixedNetwork,
    tree: &JoinTreeDecomposition,
    evidence: &Evidence,
    assignment: &[(VarId, usize)],
) -> Result<f64> {
    let full = evidence.extended(assignment.iter().map(|&(v, x)| (v, Value::Discrete(x))));
    Calibrator::new(net, tree.clone()).log_evidence(&full)
}

/// Normalizes log-masses into probabilities.
pub(crate) fn normalize_log(values: &[f64]) -> Vec<f64> {
    let total = log_sum_exp(values.iter().copied());
    values.iter().map(|g| (g - total).exp()).collect()
}

impl CalibratedTree {
    pub fn tree(&self) -> &JoinTreeDecomposition {
        &self.tree
    }

    pub fn evidence(&self) -> &Evidence {
        &self.evidence
    }

    pub fn beliefs(&self) -> &[CgPotential] {
        &self.beliefs
    }

    /// Both directions of every tree edge.
    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    /// `log P(e)` read from the strong root's belief.
    pub fn log_evidence_probability(&self) -> f64 {
        self.log_evidence
    }

    /// Log total mass of one node's belief; equal across nodes.
    pub fn log_mass_at(&self, node: usize) -> Result<f64> {
        self.beliefs[node].log_total_mass()
    }

    fn covering_node(&self, var: VarId, discrete: bool) -> Result<usize> {
        self.beliefs
            .iter()
            .position(|b| {
                if discrete {
                    b.discrete_scope().contains(&var)
                } else {
                    b.continuous_scope().contains(&var)
                }
            })
            .ok_or_else(|| Error::VariableNotCovered(self.name(var)))
    }

    fn name(&self, var: VarId) -> String {
        self.names.get(var.index()).cloned().unwrap_or_else(|| var.to_string())
    }

    /// Posterior of a discrete variable.
    pub fn query_discrete_marginal(&self, var: VarId) -> Result<Vec<f64>> {
        let card = self
            .cards
            .get(var.index())
            .copied()
            .flatten()
            .ok_or_else(|| Error::VariableNotCovered(self.name(var)))?;
        if let Some(Value::Discrete(x)) = self.evidence.get(var) {
            let mut out = vec![0.0; card];
            out[x] = 1.0;
            return Ok(out);
        }
        let node = self.covering_node(var, true)?;
        self.discrete_marginal_at(node, var)
    }

    /// Posterior of `var` read from a specific node's belief.
    pub fn discrete_marginal_at(&self, node: usize, var: VarId) -> Result<Vec<f64>> {
        let marginal = self.beliefs[node].marginalize_onto(&BTreeSet::from([var]), Integration::Strict)?;
        let logs = marginal
            .components()
            .iter()
            .map(|c| c.log_mass())
            .collect::<Result<Vec<_>>>()?;
        Ok(normalize_log(&logs))
    }

    /// Posterior mean and variance of a continuous variable, as weight-1
    /// moments.
    pub fn query_continuous_moments(&self, var: VarId) -> Result<GaussianMoments> {
        if let Some(Value::Continuous(x)) = self.evidence.get(var) {
            return Ok(GaussianMoments {
                weight: 1.0,
                mean: DVector::from_element(1, x),
                covariance: DMatrix::zeros(1, 1),
            });
        }
        if self.cards.get(var.index()).is_none_or(|c| c.is_some()) {
            return Err(Error::VariableNotCovered(self.name(var)));
        }
        let node = self.covering_node(var, false)?;
        let marginal = self.beliefs[node].marginalize_onto(&BTreeSet::from([var]), Integration::Strict)?;
        let mut m = marginal.to_moments()?.remove(0);
        m.weight = 1.0;
        Ok(m)
    }

    /// Posterior of every unobserved discrete variable, keyed by id.
    pub fn all_discrete_marginals(&self) -> Result<BTreeMap<VarId, Vec<f64>>> {
        (0..self.cards.len())
            .map(VarId)
            .filter(|v| self.cards[v.index()].is_some() && !self.evidence.contains(*v))
            .map(|v| Ok((v, self.query_discrete_marginal(v)?)))
            .collect()
    }

    /// Posterior moments of every unobserved continuous variable.
    pub fn all_continuous_moments(&self) -> Result<BTreeMap<VarId, GaussianMoments>> {
        (0..self.cards.len())
            .map(VarId)
            .filter(|v| self.cards[v.index()].is_none() && !self.evidence.contains(*v))
            .map(|v| Ok((v, self.query_continuous_moments(v)?)))
            .collect()
    }
}

/// Number of table entries across all nodes, a proxy for memory use.
pub fn tree_table_size(net: &HybridMixedNetwork, tree: &JoinTreeDecomposition) -> f64 {
    tree.nodes()
        .iter()
        .map(|c| {
            let dim = c.vars.iter().filter(|v| !net.is_discrete(**v)).count() as f64;
            let configs: f64 = c
                .vars
                .iter()
                .filter(|v| net.is_discrete(**v))
                .map(|v| net.cardinality(*v) as f64)
                .product();
            configs * (1.0 + dim + dim * dim)
        })
        .sum()
}
