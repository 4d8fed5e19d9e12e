use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::decomposition::{build_join_tree, constrained_elimination_order};
use crate::error::{Error, Result};
use crate::exact::{tree_table_size, Calibrator};
use crate::model::{Cpd, Evidence, HybridMixedNetwork, Value, VarId};

const FORWARD_ATTEMPTS: usize = 1000;
/// Largest join tree, in table entries, used for exact evidence sampling.
const EXACT_SAMPLING_LIMIT: f64 = 5e7;

fn categorical<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (x, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc && *p > 0.0 {
            return x;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// Samples continuous variables in topological order given discrete values.
fn sample_continuous<R: Rng>(net: &HybridMixedNetwork, values: &mut [Value], rng: &mut R) {
    for &v in net.topological_order() {
        let Cpd::LinearGaussian(cpd) = net.cpd(v) else { continue };
        let row = cpd
            .discrete_parents
            .iter()
            .fold(0, |acc, p| acc * net.cardinality(*p) + values[p.index()].as_discrete().unwrap());
        let cfg = &cpd.configs[row];
        let mean = cfg.intercept
            + cfg
                .coefficients
                .iter()
                .zip(&cpd.continuous_parents)
                .map(|(b, p)| b * values[p.index()].as_continuous().unwrap())
                .sum::<f64>();
        let x = Normal::new(mean, cfg.variance.sqrt()).unwrap().sample(rng);
        values[v.index()] = Value::Continuous(x);
    }
}

/// One ancestral sample of the network, ignoring constraints.
fn forward_sample<R: Rng>(net: &HybridMixedNetwork, rng: &mut R) -> Vec<Value> {
    let mut values = vec![Value::Discrete(0); net.len()];
    for &v in net.topological_order() {
        if let Cpd::Tabular(t) = net.cpd(v) {
            let k = net.cardinality(v);
            let row = t
                .parents
                .iter()
                .fold(0, |acc, p| acc * net.cardinality(*p) + values[p.index()].as_discrete().unwrap());
            values[v.index()] = Value::Discrete(categorical(rng, &t.table[row * k..(row + 1) * k]));
        }
    }
    sample_continuous(net, &mut values, rng);
    values
}

fn satisfies_constraints(net: &HybridMixedNetwork, values: &[Value]) -> bool {
    net.constraints().iter().all(|c| {
        let tuple: Vec<usize> = c.scope.iter().map(|v| values[v.index()].as_discrete().unwrap()).collect();
        c.allows(&tuple)
    })
}

/// Exact sample of the constrained distribution: discrete variables drawn
/// one at a time from their exact conditionals, then continuous ones
/// forward-sampled.
fn exact_sample<R: Rng>(net: &HybridMixedNetwork, rng: &mut R) -> Result<Vec<Value>> {
    let tree = build_join_tree(net, &constrained_elimination_order(net, &net.primal_graph()))?;
    let size = tree_table_size(net, &tree);
    if size > EXACT_SAMPLING_LIMIT {
        return Err(Error::EvidenceGenerationFailed(format!("join tree needs {size:.0} entries")));
    }
    let calibrator = Calibrator::new(net, tree);
    let mut fixed = Evidence::new();
    let mut values = vec![Value::Discrete(0); net.len()];
    for v in net.discrete_vars().collect::<Vec<_>>() {
        let cal = calibrator.calibrate(&fixed).map_err(|e| match e {
            Error::InconsistentEvidence => Error::EvidenceGenerationFailed("constraints admit no solution".into()),
            other => other,
        })?;
        let x = categorical(rng, &cal.query_discrete_marginal(v)?);
        fixed.insert(v, Value::Discrete(x));
        values[v.index()] = Value::Discrete(x);
    }
    sample_continuous(net, &mut values, rng);
    Ok(values)
}

/// Picks `floor(fraction * n)` variables uniformly and observes them at the
/// values of one sample of the constrained distribution. Forward samples are
/// redrawn until they satisfy the constraints; after 1000 failures the
/// sample is drawn exactly from the join tree instead.
pub fn select_evidence(net: &HybridMixedNetwork, fraction: f64, seed: u64) -> Result<Evidence> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidEvidence(format!("fraction {fraction} outside [0, 1)")));
    }
    let count = (fraction * net.len() as f64).floor() as usize;
    if count == 0 {
        return Ok(Evidence::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = sample(&mut rng, net.len(), count).into_vec();
    chosen.sort();
    let mut values = None;
    for _ in 0..FORWARD_ATTEMPTS {
        let candidate = forward_sample(net, &mut rng);
        if satisfies_constraints(net, &candidate) {
            values = Some(candidate);
            break;
        }
    }
    let values = match values {
        Some(v) => v,
        None => {
            log::info!("forward sampling failed {FORWARD_ATTEMPTS} times; sampling evidence exactly");
            exact_sample(net, &mut rng)?
        }
    };
    Ok(chosen.into_iter().map(|v| (VarId(v), values[v])).collect())
}
