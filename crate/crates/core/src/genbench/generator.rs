use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    build_network, ConstraintRelation, Cpd, GaussianConfig, HybridMixedNetwork, LinearGaussianCpd, TabularCpd,
    VarId, Variable,
};

/// Smallest conditional variance the generator emits.
const MIN_VARIANCE: f64 = 1e-3;

/// Random network parameters `(N1, N2, K, C1, C2, P, T)` plus a seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorParams {
    /// Discrete variables.
    pub n1: usize,
    /// Continuous variables.
    pub n2: usize,
    /// Discrete cardinality.
    pub k: usize,
    /// Binary constraints.
    pub c1: usize,
    /// Variables that get parents.
    pub c2: usize,
    /// Parents per child.
    pub p: usize,
    /// Forbidden tuples per constraint.
    pub t: usize,
    #[serde(default)]
    pub seed: u64,
}

impl GeneratorParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(n1: usize, n2: usize, k: usize, c1: usize, c2: usize, p: usize, t: usize, seed: u64) -> Self {
        GeneratorParams {
            n1,
            n2,
            k,
            c1,
            c2,
            p,
            t,
            seed,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        GeneratorParams { seed, ..self }
    }

    pub fn available_scopes(&self) -> usize {
        self.n1 * self.n1.saturating_sub(1) / 2
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InfeasibleParams(m));
        if self.n1 + self.n2 == 0 {
            return fail("network has no variables".into());
        }
        if self.n1 > 0 && self.k < 2 {
            return fail(format!("cardinality {} is below 2", self.k));
        }
        if self.c1 > 0 && self.t >= self.k * self.k {
            return fail(format!("tightness {} leaves no allowed tuple out of {}", self.t, self.k * self.k));
        }
        if self.c1 > self.available_scopes() {
            return fail(format!("{} constraints but only {} binary scopes", self.c1, self.available_scopes()));
        }
        if self.c2 > self.n1 + self.n2 {
            return fail(format!("{} children but only {} variables", self.c2, self.n1 + self.n2));
        }
        Ok(())
    }
}

fn random_row<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| 1.0 - rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

fn open_unit<R: Rng>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Generates a random network. Discrete variables `A0..` come first, then
/// continuous `G0..`. Children and parents follow a random layout in which
/// parents precede children; discrete children only get discrete parents.
pub fn generate(params: &GeneratorParams) -> Result<HybridMixedNetwork> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = params.n1 + params.n2;
    let is_discrete = |v: usize| v < params.n1;
    let mut variables: Vec<Variable> = (0..params.n1)
        .map(|i| Variable::discrete(i, format!("A{i}"), params.k))
        .collect();
    variables.extend((0..params.n2).map(|j| Variable::continuous(params.n1 + j, format!("G{j}"))));

    let layout: Vec<usize> = sample(&mut rng, n, n).into_vec();
    let mut rank = vec![0; n];
    for (r, &v) in layout.iter().enumerate() {
        rank[v] = r;
    }
    let mut is_child = vec![false; n];
    for v in sample(&mut rng, n, params.c2) {
        is_child[v] = true;
    }

    let mut cpds = Vec::with_capacity(n);
    for v in 0..n {
        let mut parents: Vec<usize> = Vec::new();
        if is_child[v] {
            let candidates: Vec<usize> = layout[..rank[v]]
                .iter()
                .copied()
                .filter(|&u| !is_discrete(v) || is_discrete(u))
                .collect();
            let take = params.p.min(candidates.len());
            parents = sample(&mut rng, candidates.len(), take).into_iter().map(|k| candidates[k]).collect();
            parents.sort();
        }
        let disc: Vec<VarId> = parents.iter().copied().filter(|&u| is_discrete(u)).map(VarId).collect();
        let cont: Vec<VarId> = parents.iter().copied().filter(|&u| !is_discrete(u)).map(VarId).collect();
        let configs = params.k.pow(disc.len() as u32);
        if is_discrete(v) {
            let table = (0..configs).flat_map(|_| random_row(&mut rng, params.k)).collect();
            cpds.push(Cpd::Tabular(TabularCpd {
                child: VarId(v),
                parents: disc,
                table,
            }));
        } else {
            let configs = (0..configs)
                .map(|_| GaussianConfig {
                    intercept: open_unit(&mut rng),
                    coefficients: cont.iter().map(|_| rng.random_range(-1.0..1.0)).collect(),
                    variance: open_unit(&mut rng).max(MIN_VARIANCE),
                })
                .collect();
            cpds.push(Cpd::LinearGaussian(LinearGaussianCpd {
                child: VarId(v),
                discrete_parents: disc,
                continuous_parents: cont,
                configs,
            }));
        }
    }

    let pairs: Vec<(usize, usize)> = (0..params.n1)
        .flat_map(|a| (a + 1..params.n1).map(move |b| (a, b)))
        .collect();
    let mut chosen: Vec<usize> = sample(&mut rng, pairs.len(), params.c1).into_vec();
    chosen.sort();
    let k = params.k;
    let constraints = chosen
        .into_iter()
        .map(|s| {
            let (a, b) = pairs[s];
            let mut forbidden: Vec<usize> = sample(&mut rng, k * k, params.t).into_vec();
            forbidden.sort();
            let tuples: Vec<Vec<usize>> = forbidden.into_iter().map(|x| vec![x / k, x % k]).collect();
            ConstraintRelation::from_forbidden(vec![VarId(a), VarId(b)], &[k, k], &tuples)
        })
        .collect();
    build_network(variables, cpds, constraints)
}
