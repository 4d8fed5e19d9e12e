//! Brute-force reference inference and random test instances.
//!
//! The oracle enumerates every discrete configuration, builds the joint
//! Gaussian of the continuous variables in covariance form from the
//! structural equations `X = c + B X + noise`, conditions it on continuous
//! evidence and mixes the results.
#![allow(dead_code)]

use std::collections::BTreeMap;

use hmn_core::genbench::{generate, select_evidence, GeneratorParams};
use hmn_core::model::{all_tuples, Cpd, Evidence, HybridMixedNetwork, Value, VarId};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct OracleResult {
    pub log_evidence: f64,
    pub discrete: BTreeMap<VarId, Vec<f64>>,
    /// Posterior mean and variance.
    pub continuous: BTreeMap<VarId, (f64, f64)>,
}

fn cpt_row(net: &HybridMixedNetwork, parents: &[VarId], config: &[usize]) -> usize {
    parents.iter().fold(0, |acc, p| acc * net.cardinality(*p) + config[p.index()])
}

/// Exact posteriors by enumeration. `None` when the evidence has zero
/// probability.
pub fn oracle(net: &HybridMixedNetwork, evidence: &Evidence) -> Option<OracleResult> {
    let disc: Vec<VarId> = net.discrete_vars().collect();
    let cont: Vec<VarId> = net.continuous_vars().collect();
    let cpos: BTreeMap<VarId, usize> = cont.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    let observed: Vec<usize> = (0..cont.len()).filter(|&i| evidence.contains(cont[i])).collect();
    let hidden: Vec<usize> = (0..cont.len()).filter(|&i| !evidence.contains(cont[i])).collect();
    let obs_vals = DVector::from_iterator(
        observed.len(),
        observed.iter().map(|&i| evidence.get(cont[i]).unwrap().as_continuous().unwrap()),
    );

    let cards: Vec<usize> = disc.iter().map(|v| net.cardinality(*v)).collect();
    let mut weights: Vec<f64> = Vec::new();
    let mut configs: Vec<Vec<usize>> = Vec::new();
    let mut moments: Vec<(DVector<f64>, DMatrix<f64>)> = Vec::new();
    for tuple in all_tuples(&cards) {
        let mut config = vec![0usize; net.len()];
        for (v, x) in disc.iter().zip(&tuple) {
            config[v.index()] = *x;
        }
        if disc
            .iter()
            .any(|v| matches!(evidence.get(*v), Some(Value::Discrete(e)) if e != config[v.index()]))
        {
            continue;
        }
        if !net.constraints().iter().all(|c| {
            let t: Vec<usize> = c.scope.iter().map(|v| config[v.index()]).collect();
            c.allows(&t)
        }) {
            continue;
        }
        let mut w = 1.0;
        for v in &disc {
            let Cpd::Tabular(t) = net.cpd(*v) else { unreachable!() };
            let k = net.cardinality(*v);
            w *= t.table[cpt_row(net, &t.parents, &config) * k + config[v.index()]];
        }
        if w == 0.0 {
            continue;
        }
        // Structural equations for this configuration.
        let n = cont.len();
        let mut c = DVector::zeros(n);
        let mut b = DMatrix::zeros(n, n);
        let mut d = DMatrix::zeros(n, n);
        for v in &cont {
            let Cpd::LinearGaussian(g) = net.cpd(*v) else { unreachable!() };
            let cfg = &g.configs[cpt_row(net, &g.discrete_parents, &config)];
            let i = cpos[v];
            c[i] = cfg.intercept;
            d[(i, i)] = cfg.variance;
            for (beta, p) in cfg.coefficients.iter().zip(&g.continuous_parents) {
                b[(i, cpos[p])] = *beta;
            }
        }
        let a = (DMatrix::identity(n, n) - b).try_inverse().unwrap();
        let mean = &a * c;
        let cov = &a * d * a.transpose();

        let pick_v = |m: &DVector<f64>, idx: &[usize]| DVector::from_iterator(idx.len(), idx.iter().map(|&i| m[i]));
        let pick_m = |m: &DMatrix<f64>, r: &[usize], cc: &[usize]| DMatrix::from_fn(r.len(), cc.len(), |i, j| m[(r[i], cc[j])]);
        let (mh, ch) = if observed.is_empty() {
            (pick_v(&mean, &hidden), pick_m(&cov, &hidden, &hidden))
        } else {
            let s_oo = pick_m(&cov, &observed, &observed);
            let s_ho = pick_m(&cov, &hidden, &observed);
            let inv = s_oo.clone().try_inverse().unwrap();
            let resid = &obs_vals - pick_v(&mean, &observed);
            let quad = resid.dot(&(&inv * &resid));
            let det = s_oo.determinant();
            let dens = (-0.5 * quad).exp() / ((2.0 * std::f64::consts::PI).powi(observed.len() as i32) * det).sqrt();
            w *= dens;
            (
                pick_v(&mean, &hidden) + &s_ho * &inv * resid,
                pick_m(&cov, &hidden, &hidden) - &s_ho * &inv * s_ho.transpose(),
            )
        };
        weights.push(w);
        configs.push(config);
        moments.push((mh, ch));
    }
    let z: f64 = weights.iter().sum();
    if z <= 0.0 {
        return None;
    }
    let mut discrete = BTreeMap::new();
    for v in &disc {
        if evidence.contains(*v) {
            continue;
        }
        let mut table = vec![0.0; net.cardinality(*v)];
        for (w, c) in weights.iter().zip(&configs) {
            table[c[v.index()]] += w / z;
        }
        discrete.insert(*v, table);
    }
    let mut continuous = BTreeMap::new();
    for (k, &i) in hidden.iter().enumerate() {
        let mean: f64 = weights.iter().zip(&moments).map(|(w, m)| w / z * m.0[k]).sum();
        let var: f64 = weights
            .iter()
            .zip(&moments)
            .map(|(w, m)| w / z * (m.1[(k, k)] + (m.0[k] - mean).powi(2)))
            .sum();
        continuous.insert(cont[i], (mean, var));
    }
    Some(OracleResult {
        log_evidence: z.ln(),
        discrete,
        continuous,
    })
}

/// Random small instance: at most 10 discrete variables of cardinality up
/// to 3, at most 3 continuous ones and at most 4 constraints, with evidence
/// drawn from the constrained distribution. Networks whose constraints
/// admit no solution are redrawn.
pub fn random_small_instance(seed: u64) -> (HybridMixedNetwork, Evidence) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let n1 = rng.random_range(2..=10);
        let n2 = rng.random_range(0..=3);
        let k = rng.random_range(2..=3);
        let scopes = n1 * (n1 - 1) / 2;
        let c1 = rng.random_range(0..=4usize.min(scopes));
        let c2 = rng.random_range(0..=n1 + n2);
        let p = rng.random_range(0..=3);
        let t = rng.random_range(0..k * k);
        let params = GeneratorParams::new(n1, n2, k, c1, c2, p, t, rng.random());
        let net = generate(&params).unwrap();
        let fraction = [0.0, 0.1, 0.2, 0.3][rng.random_range(0..4)];
        if let Ok(ev) = select_evidence(&net, fraction, rng.random()) {
            if oracle(&net, &ev).is_some() {
                return (net, ev);
            }
        }
    }
}

/// Like [`random_small_instance`] but with at least two constraints of
/// tightness at least 2, so constraint propagation has something to prune.
pub fn random_tight_instance(seed: u64) -> (HybridMixedNetwork, Evidence) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let n1 = rng.random_range(4..=10);
        let n2 = rng.random_range(0..=3);
        let k = rng.random_range(2..=3);
        let c1 = rng.random_range(2..=4);
        let t = rng.random_range(2..k * k);
        let p = rng.random_range(1..=3);
        let params = GeneratorParams::new(n1, n2, k, c1, n1 + n2, p, t, rng.random());
        let net = generate(&params).unwrap();
        if let Ok(ev) = select_evidence(&net, 0.2, rng.random()) {
            if oracle(&net, &ev).is_some() {
                return (net, ev);
            }
        }
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
