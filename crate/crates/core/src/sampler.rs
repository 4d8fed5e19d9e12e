//! Rao-Blackwellised importance sampling over a w-cutset.
//!
//! Cutset assignments are drawn from an ordered-buckets proposal, built
//! either from IJGP functions and messages or from the prior. Each distinct
//! assignment is weighed once by exact inference on the remainder, and the
//! remainder's conditional beliefs are averaged under the normalized
//! weights.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::decomposition::{build_join_graph, elimination_order_over, select_wcutset, WCutset};
use crate::error::{Error, Result};
use crate::exact::Calibrator;
use crate::ijgp::{self, IjgpState};
use crate::model::{Cpd, Evidence, FunctionId, HybridMixedNetwork, Value, VarId};
use crate::potential::{log_sum_exp, CgPotential, GaussianMoments, Integration};

/// Where a bucket function came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum BucketSource {
    Function(FunctionId),
    Message { from: usize, to: usize },
    Prior(VarId),
}

/// A discrete-only function placed in a bucket, with lookup strides over
/// positions of the sampling order.
#[derive(Debug, Clone)]
pub struct BucketEntry {
    pub source: BucketSource,
    pub potential: CgPotential,
    positions: Vec<usize>,
    strides: Vec<usize>,
    target_stride: usize,
}

/// Proposal over cutset variables: one bucket per position of the sampling
/// order, holding functions whose latest variable sits at that position.
#[derive(Debug, Clone)]
pub struct OrderedBuckets {
    order: Vec<VarId>,
    cards: Vec<usize>,
    buckets: Vec<Vec<BucketEntry>>,
}

impl OrderedBuckets {
    fn new(net: &HybridMixedNetwork, order: &[VarId], sources: Vec<(BucketSource, CgPotential)>) -> Self {
        let pos: BTreeMap<VarId, usize> = order.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut buckets: Vec<Vec<BucketEntry>> = vec![Vec::new(); order.len()];
        for (source, potential) in sources {
            let scope = potential.discrete_scope();
            let fits = potential.is_discrete_only() && !scope.is_empty() && scope.iter().all(|v| pos.contains_key(v));
            if !fits {
                continue;
            }
            let positions: Vec<usize> = scope.iter().map(|v| pos[v]).collect();
            let cards = potential.cards();
            let mut strides = vec![1; cards.len()];
            for k in (0..cards.len().saturating_sub(1)).rev() {
                strides[k] = strides[k + 1] * cards[k + 1];
            }
            let (latest_k, &latest) = positions.iter().enumerate().max_by_key(|(_, p)| **p).unwrap();
            let target_stride = strides[latest_k];
            buckets[latest].push(BucketEntry {
                source,
                potential,
                positions,
                strides,
                target_stride,
            });
        }
        OrderedBuckets {
            order: order.to_vec(),
            cards: order.iter().map(|&v| net.cardinality(v)).collect(),
            buckets,
        }
    }

    /// Sampling order of the cutset variables.
    pub fn order(&self) -> &[VarId] {
        &self.order
    }

    pub fn bucket(&self, position: usize) -> &[BucketEntry] {
        &self.buckets[position]
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Unnormalized log-proposal over the values at `position`, given values
    /// for every earlier position.
    pub fn conditional_logs(&self, position: usize, prefix: &[usize]) -> Vec<f64> {
        let mut logs = vec![0.0; self.cards[position]];
        for entry in &self.buckets[position] {
            let base: usize = entry
                .positions
                .iter()
                .zip(&entry.strides)
                .filter(|(p, _)| **p != position)
                .map(|(p, s)| prefix[*p] * s)
                .sum();
            for (x, l) in logs.iter_mut().enumerate() {
                *l += entry.potential.components()[base + x * entry.target_stride].g;
            }
        }
        logs
    }
}

/// IJGP node functions and messages whose scope lies inside the cutset,
/// bucketed along `order` (a permutation of the cutset).
pub fn build_ordered_buckets(net: &HybridMixedNetwork, state: &IjgpState, order: &[VarId]) -> OrderedBuckets {
    let mut sources = Vec::new();
    for node in 0..state.graph().nodes().len() {
        for (f, p) in state.node_functions(node) {
            sources.push((BucketSource::Function(*f), p.clone()));
        }
    }
    for (from, to, p) in state.messages() {
        sources.push((BucketSource::Message { from, to }, p.clone()));
    }
    OrderedBuckets::new(net, order, sources)
}

/// Prior proposal over the cutset: each variable drawn from its CPT in
/// topological order, with evidence parents fixed and other non-cutset
/// parents averaged uniformly.
pub fn build_prior_buckets(net: &HybridMixedNetwork, evidence: &Evidence, cutset: &[VarId]) -> OrderedBuckets {
    let members: BTreeSet<VarId> = cutset.iter().copied().collect();
    let order: Vec<VarId> = net.topological_order().iter().copied().filter(|v| members.contains(v)).collect();
    let mut sources = Vec::new();
    for &v in &order {
        let Cpd::Tabular(t) = net.cpd(v) else { unreachable!("cutset variables are discrete") };
        let mut p = CgPotential::from_tabular(net, t).reduce_evidence(evidence);
        let free: Vec<VarId> = p.discrete_scope().iter().copied().filter(|u| !members.contains(u)).collect();
        for u in free {
            p = p
                .marginalize_discrete(&[u], Integration::Strict)
                .expect("discrete sums cannot fail");
            p.scale_log(-(net.cardinality(u) as f64).ln());
        }
        sources.push((BucketSource::Prior(v), p));
    }
    OrderedBuckets::new(net, &order, sources)
}

/// Outcome of one proposal draw.
#[derive(Debug, Clone, PartialEq)]
pub enum Draw {
    Sample { assignment: Vec<usize>, log_q: f64 },
    /// Every value had zero proposal mass at this position.
    DeadEnd { position: usize },
}

/// Draws the cutset variables in order, each from the normalized product of
/// its bucket at the current prefix.
pub fn draw_sample<R: Rng + ?Sized>(buckets: &OrderedBuckets, rng: &mut R) -> Draw {
    let mut assignment = Vec::with_capacity(buckets.order.len());
    let mut log_q = 0.0;
    for position in 0..buckets.order.len() {
        let logs = buckets.conditional_logs(position, &assignment);
        let total = log_sum_exp(logs.iter().copied());
        if total == f64::NEG_INFINITY {
            return Draw::DeadEnd { position };
        }
        let probs: Vec<f64> = logs.iter().map(|l| (l - total).exp()).collect();
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = None;
        for (x, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc && *p > 0.0 {
                pick = Some(x);
                break;
            }
        }
        // Rounding can leave `u` just past the cumulative sum.
        let x = pick.unwrap_or_else(|| probs.iter().rposition(|p| *p > 0.0).unwrap());
        log_q += logs[x] - total;
        assignment.push(x);
    }
    Draw::Sample { assignment, log_q }
}

/// The RNG stream for sample `index` under `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Exact beliefs of the remainder given one cutset assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalBeliefs {
    pub discrete: BTreeMap<VarId, Vec<f64>>,
    pub continuous: BTreeMap<VarId, GaussianMoments>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub assignment: Vec<usize>,
    /// Number of draws that produced this assignment.
    pub count: usize,
    pub log_q: f64,
    pub log_p_joint: f64,
    pub log_weight: f64,
    pub rejected: bool,
    pub dead_end: bool,
    pub beliefs: Option<Arc<ConditionalBeliefs>>,
}

/// Drawn samples, one record per distinct assignment in order of first
/// appearance. A record's normalized weight covers all of its draws.
#[derive(Debug, Clone)]
pub struct WeightedSampleSet {
    pub cutset: Vec<VarId>,
    pub records: Vec<SampleRecord>,
    pub normalized_weights: Vec<f64>,
    pub rejection_count: usize,
    pub total_drawn: usize,
}

impl WeightedSampleSet {
    pub fn rejection_rate(&self) -> f64 {
        if self.total_drawn == 0 {
            0.0
        } else {
            self.rejection_count as f64 / self.total_drawn as f64
        }
    }
}

/// Posterior estimates of every unobserved variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimates {
    pub discrete: BTreeMap<VarId, Vec<f64>>,
    pub continuous: BTreeMap<VarId, GaussianMoments>,
}

/// Exact inference on the remainder, reused across samples.
#[derive(Debug, Clone)]
pub struct Weigher {
    calibrator: Calibrator,
    evidence: Evidence,
    cutset: Vec<VarId>,
}

/// `log P(assignment, e)` plus conditional beliefs, or `None` when the
/// combination has zero probability.
type Weighed = Option<(f64, Arc<ConditionalBeliefs>)>;

impl Weigher {
    pub fn new(net: &HybridMixedNetwork, wcutset: &WCutset, evidence: &Evidence) -> Self {
        Weigher {
            calibrator: Calibrator::new(net, wcutset.remainder_tree.clone()),
            evidence: evidence.clone(),
            cutset: wcutset.cutset.clone(),
        }
    }

    /// `cutset` lists the assignment's variables in assignment order.
    fn with_order(mut self, cutset: &[VarId]) -> Self {
        self.cutset = cutset.to_vec();
        self
    }

    fn weigh(&self, assignment: &[usize]) -> Result<Weighed> {
        let full = self
            .evidence
            .extended(self.cutset.iter().zip(assignment).map(|(&v, &x)| (v, Value::Discrete(x))));
        match self.calibrator.calibrate(&full) {
            Ok(cal) => {
                let beliefs = ConditionalBeliefs {
                    discrete: cal
                        .all_discrete_marginals()?
                        .into_iter()
                        .filter(|(v, _)| !full.contains(*v))
                        .collect(),
                    continuous: cal.all_continuous_moments()?,
                };
                Ok(Some((cal.log_evidence_probability(), Arc::new(beliefs))))
            }
            Err(Error::InconsistentEvidence) => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// A full record for one drawn assignment.
    pub fn weigh_sample(&self, assignment: &[usize], log_q: f64) -> Result<SampleRecord> {
        Ok(record(assignment.to_vec(), log_q, self.weigh(assignment)?))
    }
}

fn record(assignment: Vec<usize>, log_q: f64, weighed: Weighed) -> SampleRecord {
    match weighed {
        Some((log_p, beliefs)) => SampleRecord {
            assignment,
            count: 1,
            log_q,
            log_p_joint: log_p,
            log_weight: log_p - log_q,
            rejected: false,
            dead_end: false,
            beliefs: Some(beliefs),
        },
        None => SampleRecord {
            assignment,
            count: 1,
            log_q,
            log_p_joint: f64::NEG_INFINITY,
            log_weight: f64::NEG_INFINITY,
            rejected: true,
            dead_end: false,
            beliefs: None,
        },
    }
}

/// Weighs one assignment of `cutset` (given in that order) against the
/// remainder tree of `wcutset`.
pub fn weigh_sample(
    net: &HybridMixedNetwork,
    wcutset: &WCutset,
    evidence: &Evidence,
    cutset: &[VarId],
    assignment: &[usize],
    log_q: f64,
) -> Result<SampleRecord> {
    Weigher::new(net, wcutset, evidence).with_order(cutset).weigh_sample(assignment, log_q)
}

/// How long a sampler runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    Samples(usize),
    /// Draw until the wall clock runs out, checked every 64 samples.
    Time(Duration),
}

const CLOCK_BATCH: usize = 64;
const SAMPLE_BATCH: usize = 1024;

/// Draws and weighs samples under `budget`. Sample `k` always uses the RNG
/// stream `(seed, k)` and each distinct assignment is weighed once.
pub fn run_sampler(buckets: &OrderedBuckets, weigher: &Weigher, budget: Budget, seed: u64) -> Result<WeightedSampleSet> {
    let cutset = buckets.order().to_vec();
    let weigher = weigher.clone().with_order(&cutset);
    if cutset.is_empty() {
        let rec = record(vec![], 0.0, weigher.weigh(&[])?);
        return finish(cutset, vec![rec]);
    }
    let start = Instant::now();
    // Identical draws share one record; dead ends share the record keyed by
    // the empty assignment.
    let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut records: Vec<SampleRecord> = Vec::new();
    let mut drawn = 0usize;
    loop {
        let batch = match budget {
            Budget::Samples(n) => SAMPLE_BATCH.min(n - drawn),
            Budget::Time(limit) => {
                if start.elapsed() >= limit {
                    0
                } else {
                    CLOCK_BATCH
                }
            }
        };
        if batch == 0 {
            break;
        }
        let first = drawn as u64;
        drawn += batch;
        let draws: Vec<Draw> = (0..batch as u64)
            .into_par_iter()
            .map(|k| draw_sample(buckets, &mut sample_rng(seed, first + k)))
            .collect();
        let mut fresh: Vec<(Vec<usize>, f64)> = Vec::new();
        let mut queued: BTreeSet<&Vec<usize>> = BTreeSet::new();
        for d in &draws {
            if let Draw::Sample { assignment, log_q } = d {
                if !index.contains_key(assignment) && queued.insert(assignment) {
                    fresh.push((assignment.clone(), *log_q));
                }
            }
        }
        let weighed: Vec<Weighed> = fresh.par_iter().map(|(a, _)| weigher.weigh(a)).collect::<Result<_>>()?;
        for ((assignment, log_q), w) in fresh.into_iter().zip(weighed) {
            let mut rec = record(assignment.clone(), log_q, w);
            rec.count = 0;
            index.insert(assignment, records.len());
            records.push(rec);
        }
        for d in draws {
            let key = match d {
                Draw::Sample { assignment, .. } => assignment,
                Draw::DeadEnd { .. } => {
                    if !index.contains_key(&[][..]) {
                        index.insert(vec![], records.len());
                        records.push(SampleRecord {
                            assignment: vec![],
                            count: 0,
                            log_q: f64::NEG_INFINITY,
                            log_p_joint: f64::NEG_INFINITY,
                            log_weight: f64::NEG_INFINITY,
                            rejected: true,
                            dead_end: true,
                            beliefs: None,
                        });
                    }
                    vec![]
                }
            };
            records[index[&key]].count += 1;
        }
    }
    finish(cutset, records)
}

fn finish(cutset: Vec<VarId>, records: Vec<SampleRecord>) -> Result<WeightedSampleSet> {
    let total = log_sum_exp(records.iter().map(|r| r.log_weight + (r.count as f64).ln()));
    let normalized_weights = records
        .iter()
        .map(|r| {
            if r.rejected {
                0.0
            } else {
                (r.log_weight + (r.count as f64).ln() - total).exp()
            }
        })
        .collect();
    Ok(WeightedSampleSet {
        cutset,
        rejection_count: records.iter().filter(|r| r.rejected).map(|r| r.count).sum(),
        total_drawn: records.iter().map(|r| r.count).sum(),
        records,
        normalized_weights,
    })
}

/// Weighted estimates: indicator averages for cutset variables, averaged
/// conditional beliefs for the remainder and collapsed moments for
/// continuous variables.
pub fn estimate_marginals(net: &HybridMixedNetwork, set: &WeightedSampleSet) -> Result<Estimates> {
    if set.records.iter().all(|r| r.rejected) {
        return Err(Error::AllSamplesRejected);
    }
    // Pool weights of identical assignments; beliefs are shared through Arc.
    let mut pooled: Vec<(f64, &SampleRecord)> = Vec::new();
    let mut index: HashMap<&[usize], usize> = HashMap::new();
    for (r, &w) in set.records.iter().zip(&set.normalized_weights) {
        if r.rejected {
            continue;
        }
        match index.get(r.assignment.as_slice()) {
            Some(&k) => pooled[k].0 += w,
            None => {
                index.insert(&r.assignment, pooled.len());
                pooled.push((w, r));
            }
        }
    }

    let mut discrete: BTreeMap<VarId, Vec<f64>> = BTreeMap::new();
    for (k, &v) in set.cutset.iter().enumerate() {
        let mut table = vec![0.0; net.cardinality(v)];
        for (w, r) in &pooled {
            table[r.assignment[k]] += w;
        }
        discrete.insert(v, table);
    }
    let first = pooled[0].1.beliefs.as_ref().unwrap();
    for (&v, m) in &first.discrete {
        let mut table = vec![0.0; m.len()];
        for (w, r) in &pooled {
            for (t, p) in table.iter_mut().zip(&r.beliefs.as_ref().unwrap().discrete[&v]) {
                *t += w * p;
            }
        }
        discrete.insert(v, table);
    }
    let mut continuous = BTreeMap::new();
    for &v in first.continuous.keys() {
        let parts: Vec<GaussianMoments> = pooled
            .iter()
            .map(|(w, r)| {
                let m = &r.beliefs.as_ref().unwrap().continuous[&v];
                GaussianMoments {
                    weight: *w,
                    mean: m.mean.clone(),
                    covariance: m.covariance.clone(),
                }
            })
            .collect();
        continuous.insert(v, GaussianMoments::collapse(&parts));
    }
    Ok(Estimates { discrete, continuous })
}

/// Result of a sampling run.
#[derive(Debug, Clone)]
pub struct SamplingOutcome {
    pub samples: WeightedSampleSet,
    pub estimates: Estimates,
}

fn unobserved(net: &HybridMixedNetwork, evidence: &Evidence) -> BTreeSet<VarId> {
    (0..net.len()).map(VarId).filter(|v| !evidence.contains(*v)).collect()
}

/// IJGP(i) for `k` rounds feeds an ordered-buckets proposal over a greedy
/// w-cutset; samples are weighed by exact inference on the remainder.
pub fn ijgp_rb_sampling(
    net: &HybridMixedNetwork,
    evidence: &Evidence,
    i_bound: usize,
    iterations: usize,
    w: usize,
    budget: Budget,
    seed: u64,
) -> Result<SamplingOutcome> {
    evidence.validate(net)?;
    let order = elimination_order_over(net, &unobserved(net, evidence));
    let graph = build_join_graph(net, &order, i_bound)?;
    let state = ijgp::run(net, &graph, evidence, iterations, ijgp::DEFAULT_TOLERANCE)?;
    let wcutset = select_wcutset(net, &evidence.vars(), w)?;
    let members: BTreeSet<VarId> = wcutset.cutset.iter().copied().collect();
    let pi: Vec<VarId> = order.vars().iter().rev().copied().filter(|v| members.contains(v)).collect();
    let buckets = build_ordered_buckets(net, &state, &pi);
    sample_with(net, evidence, &wcutset, &buckets, budget, seed)
}

/// The same pipeline with the prior proposal of [`build_prior_buckets`].
pub fn pure_rb_sampling(
    net: &HybridMixedNetwork,
    evidence: &Evidence,
    w: usize,
    budget: Budget,
    seed: u64,
) -> Result<SamplingOutcome> {
    evidence.validate(net)?;
    let wcutset = select_wcutset(net, &evidence.vars(), w)?;
    let buckets = build_prior_buckets(net, evidence, &wcutset.cutset);
    sample_with(net, evidence, &wcutset, &buckets, budget, seed)
}

fn sample_with(
    net: &HybridMixedNetwork,
    evidence: &Evidence,
    wcutset: &WCutset,
    buckets: &OrderedBuckets,
    budget: Budget,
    seed: u64,
) -> Result<SamplingOutcome> {
    let weigher = Weigher::new(net, wcutset, evidence);
    let samples = run_sampler(buckets, &weigher, budget, seed)?;
    log::debug!(
        "cutset of {} variables: {} draws, {} rejected",
        samples.cutset.len(),
        samples.total_drawn,
        samples.rejection_count
    );
    let estimates = estimate_marginals(net, &samples)?;
    Ok(SamplingOutcome { samples, estimates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_network, ConstraintRelation, TabularCpd, Variable};
    use approx::assert_abs_diff_eq;

    fn tab(child: usize, parents: &[usize], table: &[f64]) -> Cpd {
        Cpd::Tabular(TabularCpd {
            child: VarId(child),
            parents: parents.iter().map(|&p| VarId(p)).collect(),
            table: table.to_vec(),
        })
    }

    fn chain_neq() -> HybridMixedNetwork {
        let vars = vec![Variable::discrete(0, "A", 2), Variable::discrete(1, "B", 2)];
        let cpds = vec![tab(0, &[], &[0.5, 0.5]), tab(1, &[0], &[0.9, 0.1, 0.2, 0.8])];
        let neq = ConstraintRelation::from_forbidden(vec![VarId(0), VarId(1)], &[2, 2], &[vec![0, 0], vec![1, 1]]);
        build_network(vars, cpds, vec![neq]).unwrap()
    }

    /// Bucket of A holds the marginal of `joint`, bucket of B the joint.
    fn table_buckets(net: &HybridMixedNetwork, joint: [f64; 4]) -> OrderedBuckets {
        let marg = vec![(joint[0] + joint[1]).ln(), (joint[2] + joint[3]).ln()];
        let cond: Vec<f64> = (0..4).map(|k| (joint[k] / (joint[k / 2 * 2] + joint[k / 2 * 2 + 1])).ln()).collect();
        let pa = CgPotential::from_log_table(vec![VarId(0)], vec![2], marg).unwrap();
        let pab = CgPotential::from_log_table(vec![VarId(0), VarId(1)], vec![2, 2], cond).unwrap();
        OrderedBuckets::new(
            net,
            &[VarId(0), VarId(1)],
            vec![(BucketSource::Prior(VarId(0)), pa), (BucketSource::Prior(VarId(1)), pab)],
        )
    }

    #[test]
    fn point_mass_proposal() {
        let net = chain_neq();
        let buckets = table_buckets(&net, [0.0, 0.0, 1.0, 0.0]);
        assert_eq!(buckets.bucket(0).len(), 1);
        assert_eq!(buckets.bucket(1).len(), 1);
        for k in 0..20 {
            let draw = draw_sample(&buckets, &mut sample_rng(7, k));
            assert_eq!(
                draw,
                Draw::Sample {
                    assignment: vec![1, 0],
                    log_q: 0.0
                }
            );
        }
    }

    #[test]
    fn dead_end_is_reported() {
        let net = chain_neq();
        let ninf = f64::NEG_INFINITY;
        let p = CgPotential::from_log_table(vec![VarId(0)], vec![2], vec![ninf, ninf]).unwrap();
        let buckets = OrderedBuckets::new(&net, &[VarId(0), VarId(1)], vec![(BucketSource::Prior(VarId(0)), p)]);
        assert_eq!(draw_sample(&buckets, &mut sample_rng(1, 0)), Draw::DeadEnd { position: 0 });
    }

    #[test]
    fn draw_frequencies_match_proposal() {
        let net = chain_neq();
        let q = [0.1, 0.2, 0.3, 0.4];
        let buckets = table_buckets(&net, q);
        let n = 100_000;
        let mut counts = [0usize; 4];
        for k in 0..n {
            if let Draw::Sample { assignment, log_q } = draw_sample(&buckets, &mut sample_rng(3, k)) {
                let idx = assignment[0] * 2 + assignment[1];
                assert_abs_diff_eq!(log_q, q[idx].ln(), epsilon = 1e-12);
                counts[idx] += 1;
            }
        }
        let chi2: f64 = counts
            .iter()
            .zip(&q)
            .map(|(&c, &p)| (c as f64 - n as f64 * p).powi(2) / (n as f64 * p))
            .sum();
        // 3 degrees of freedom; 16.27 is the 0.999 quantile.
        assert!(chi2 < 16.27, "chi2 = {chi2}");
    }

    #[test]
    fn weighing_against_enumeration() {
        let net = chain_neq();
        let wc = select_wcutset(&net, &BTreeSet::new(), 0).unwrap();
        assert_eq!(wc.cutset.len(), 1);
        let cut = [VarId(0), VarId(1)];
        let two = WCutset {
            cutset: cut.to_vec(),
            remainder: BTreeSet::new(),
            bound: 0,
            remainder_order: elimination_order_over(&net, &BTreeSet::new()),
            remainder_tree: crate::decomposition::build_join_tree(&net, &elimination_order_over(&net, &BTreeSet::new()))
                .unwrap(),
        };
        let ev = Evidence::new();
        let r = weigh_sample(&net, &two, &ev, &cut, &[0, 1], 0.5f64.ln()).unwrap();
        assert!(!r.rejected);
        assert_abs_diff_eq!(r.log_p_joint, 0.05f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(r.log_weight, (0.05f64 / 0.5).ln(), epsilon = 1e-12);
        let bad = weigh_sample(&net, &two, &ev, &cut, &[0, 0], 0.5f64.ln()).unwrap();
        assert!(bad.rejected);
        assert_eq!(bad.log_p_joint, f64::NEG_INFINITY);
    }

    #[test]
    fn exact_proposal_gives_equal_weights() {
        let net = chain_neq();
        let wc = select_wcutset(&net, &BTreeSet::new(), 0).unwrap();
        let v = wc.cutset[0];
        let cal = crate::exact::calibrate(
            &net,
            &crate::decomposition::build_join_tree(&net, &elimination_order_over(&net, &BTreeSet::from([VarId(0), VarId(1)])))
                .unwrap(),
            &Evidence::new(),
        )
        .unwrap();
        let post = cal.query_discrete_marginal(v).unwrap();
        let p = CgPotential::from_log_table(vec![v], vec![2], post.iter().map(|x| x.ln()).collect()).unwrap();
        let buckets = OrderedBuckets::new(&net, &[v], vec![(BucketSource::Prior(v), p)]);
        let weigher = Weigher::new(&net, &wc, &Evidence::new());
        let set = run_sampler(&buckets, &weigher, Budget::Samples(500), 11).unwrap();
        let live: usize = set.records.iter().filter(|r| !r.rejected).map(|r| r.count).sum();
        for (r, w) in set.records.iter().zip(&set.normalized_weights) {
            if !r.rejected {
                assert_abs_diff_eq!(*w, r.count as f64 / live as f64, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn empty_cutset_is_exact() {
        let net = chain_neq();
        let out = ijgp_rb_sampling(&net, &Evidence::new(), 2, 10, 5, Budget::Samples(100), 1).unwrap();
        assert!(out.samples.cutset.is_empty());
        assert_eq!(out.samples.total_drawn, 1);
        assert_eq!(out.samples.normalized_weights, vec![1.0]);
        let b = &out.estimates.discrete[&VarId(1)];
        assert_abs_diff_eq!(b[1], 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let net = chain_neq();
        let a = ijgp_rb_sampling(&net, &Evidence::new(), 1, 5, 0, Budget::Samples(300), 9).unwrap();
        let b = ijgp_rb_sampling(&net, &Evidence::new(), 1, 5, 0, Budget::Samples(300), 9).unwrap();
        assert_eq!(a.samples.records, b.samples.records);
        assert_eq!(a.estimates, b.estimates);
        let sum: f64 = a.samples.normalized_weights.iter().sum();
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn single_sample_estimates_equal_its_beliefs() {
        let net = chain_neq();
        let out = pure_rb_sampling(&net, &Evidence::new(), 0, Budget::Samples(1), 4).unwrap();
        let rec = &out.samples.records[0];
        for (v, m) in &rec.beliefs.as_ref().unwrap().discrete {
            assert_eq!(&out.estimates.discrete[v], m);
        }
    }
}
