//! Conditional-Gaussian potentials in canonical form.
//!
//! A [`CgPotential`] holds one [`CanonicalGaussian`] `(g, h, K)` per
//! configuration of its discrete scope, representing
//! `exp(g + h.x - x'Kx/2)` over the continuous scope. Forbidden
//! configurations carry the zero-mass sentinel `g = -inf`.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{
    ConstraintRelation, Cpd, Evidence, FunctionId, HybridMixedNetwork, LinearGaussianCpd,
    TabularCpd, Value, VarId,
};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Relative tolerance under which two components' `(h, K)` are treated as
/// the same Gaussian shape.
const SAME_SHAPE_TOL: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalGaussian {
    pub g: f64,
    pub h: DVector<f64>,
    pub k: DMatrix<f64>,
}

impl CanonicalGaussian {
    pub fn zero_mass(dim: usize) -> Self {
        CanonicalGaussian {
            g: f64::NEG_INFINITY,
            h: DVector::zeros(dim),
            k: DMatrix::zeros(dim, dim),
        }
    }

    pub fn constant(g: f64, dim: usize) -> Self {
        CanonicalGaussian {
            g,
            h: DVector::zeros(dim),
            k: DMatrix::zeros(dim, dim),
        }
    }

    #[inline]
    pub fn is_zero_mass(&self) -> bool {
        self.g == f64::NEG_INFINITY
    }

    pub fn dim(&self) -> usize {
        self.h.len()
    }

    /// `log` of the integral over the continuous scope. Needs `K` positive
    /// definite unless the scope is empty.
    pub fn log_mass(&self) -> Result<f64> {
        if self.is_zero_mass() {
            return Ok(f64::NEG_INFINITY);
        }
        if self.dim() == 0 {
            return Ok(self.g);
        }
        let chol = self.k.clone().cholesky().ok_or(Error::SingularBlock)?;
        let mean = chol.solve(&self.h);
        let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(self.g + 0.5 * self.h.dot(&mean) + 0.5 * (self.dim() as f64 * LN_2PI - log_det))
    }

    pub fn to_moments(&self) -> Result<GaussianMoments> {
        let dim = self.dim();
        if self.is_zero_mass() {
            return Ok(GaussianMoments {
                weight: 0.0,
                mean: DVector::zeros(dim),
                covariance: DMatrix::zeros(dim, dim),
            });
        }
        if dim == 0 {
            return Ok(GaussianMoments {
                weight: self.g.exp(),
                mean: DVector::zeros(0),
                covariance: DMatrix::zeros(0, 0),
            });
        }
        let chol = self.k.clone().cholesky().ok_or(Error::SingularBlock)?;
        let covariance = chol.inverse();
        let mean = &covariance * &self.h;
        let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let log_w = self.g + 0.5 * self.h.dot(&mean) + 0.5 * (dim as f64 * LN_2PI - log_det);
        Ok(GaussianMoments {
            weight: log_w.exp(),
            mean,
            covariance: symmetrize(covariance),
        })
    }

    /// Canonical form of `log_weight + log N(mean, covariance)`.
    pub fn from_log_moments(log_weight: f64, mean: &DVector<f64>, covariance: &DMatrix<f64>) -> Result<Self> {
        let dim = mean.len();
        if log_weight == f64::NEG_INFINITY {
            return Ok(Self::zero_mass(dim));
        }
        if dim == 0 {
            return Ok(Self::constant(log_weight, 0));
        }
        let chol = covariance.clone().cholesky().ok_or(Error::SingularBlock)?;
        let k = symmetrize(chol.inverse());
        let h = &k * mean;
        let log_det_cov = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let g = log_weight - 0.5 * mean.dot(&h) - 0.5 * (dim as f64 * LN_2PI + log_det_cov);
        Ok(CanonicalGaussian { g, h, k })
    }

    fn same_shape(&self, other: &Self) -> bool {
        let scale = 1.0 + self.h.amax().max(self.k.amax());
        let dh = (&self.h - &other.h).amax();
        let dk = (&self.k - &other.k).amax();
        dh <= SAME_SHAPE_TOL * scale && dk <= SAME_SHAPE_TOL * scale
    }
}

/// Weight, mean and covariance of one component.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMoments {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianMoments {
    /// Collapses a weighted mixture into the single Gaussian with the same
    /// total weight, mean and covariance.
    pub fn collapse(parts: &[GaussianMoments]) -> GaussianMoments {
        let dim = parts.first().map_or(0, |p| p.mean.len());
        let weight: f64 = parts.iter().map(|p| p.weight).sum();
        if weight <= 0.0 {
            return GaussianMoments {
                weight: 0.0,
                mean: DVector::zeros(dim),
                covariance: DMatrix::zeros(dim, dim),
            };
        }
        let mut mean = DVector::zeros(dim);
        for p in parts {
            mean += &p.mean * (p.weight / weight);
        }
        let mut covariance = DMatrix::zeros(dim, dim);
        for p in parts {
            let d = &p.mean - &mean;
            covariance += (&p.covariance + &d * d.transpose()) * (p.weight / weight);
        }
        GaussianMoments {
            weight,
            mean,
            covariance: symmetrize(covariance),
        }
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// How continuous integration treats a precision block that is not
/// positive definite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integration {
    /// Fail with [`Error::SingularBlock`].
    Strict,
    /// Integrate the informative eigen-directions and drop flat ones; the
    /// collapse of improper mixtures falls back to weight-averaged canonical
    /// parameters. Used by loopy propagation, where partial products can be
    /// improper.
    Lenient,
}

/// `log(sum(exp(xs)))`, `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// A conditional-Gaussian potential over a discrete and a continuous scope.
#[derive(Debug, Clone, PartialEq)]
pub struct CgPotential {
    discrete: Vec<VarId>,
    cards: Vec<usize>,
    continuous: Vec<VarId>,
    components: Vec<CanonicalGaussian>,
}

/// Row-major strides for a scope.
fn strides(cards: &[usize]) -> Vec<usize> {
    let mut s = vec![1; cards.len()];
    for i in (0..cards.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * cards[i + 1];
    }
    s
}

/// For every configuration of `(scope, cards)`, the index of its restriction
/// to `sub` (which must be a subset of `scope`; both sorted).
fn projection(scope: &[VarId], cards: &[usize], sub: &[VarId], sub_cards: &[usize]) -> Vec<usize> {
    let sub_strides = strides(sub_cards);
    let mut step = vec![0usize; scope.len()];
    for (k, v) in scope.iter().enumerate() {
        if let Ok(pos) = sub.binary_search(v) {
            step[k] = sub_strides[pos];
        }
    }
    let total: usize = cards.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut digits = vec![0usize; scope.len()];
    let mut idx = 0usize;
    for _ in 0..total {
        out.push(idx);
        for pos in (0..scope.len()).rev() {
            digits[pos] += 1;
            idx += step[pos];
            if digits[pos] < cards[pos] {
                break;
            }
            idx -= step[pos] * cards[pos];
            digits[pos] = 0;
        }
    }
    out
}

fn merge_sorted(a: &[VarId], b: &[VarId]) -> Vec<VarId> {
    let set: BTreeSet<VarId> = a.iter().chain(b).copied().collect();
    set.into_iter().collect()
}

fn positions(sub: &[VarId], scope: &[VarId]) -> Vec<usize> {
    sub.iter()
        .map(|v| scope.binary_search(v).expect("variable in scope"))
        .collect()
}

impl CgPotential {
    /// The multiplicative identity: empty scopes, `g = 0`.
    pub fn vacuous() -> Self {
        CgPotential {
            discrete: vec![],
            cards: vec![],
            continuous: vec![],
            components: vec![CanonicalGaussian::constant(0.0, 0)],
        }
    }

    /// Builds a potential from explicit parts. Scopes must be sorted by id
    /// and `components` dense row-major over `cards`.
    pub fn new(
        discrete: Vec<VarId>,
        cards: Vec<usize>,
        continuous: Vec<VarId>,
        components: Vec<CanonicalGaussian>,
    ) -> Result<Self> {
        let ok = discrete.windows(2).all(|w| w[0] < w[1])
            && continuous.windows(2).all(|w| w[0] < w[1])
            && discrete.len() == cards.len()
            && components.len() == cards.iter().product::<usize>()
            && components
                .iter()
                .all(|c| c.h.len() == continuous.len() && c.k.shape() == (continuous.len(), continuous.len()));
        if !ok {
            return Err(Error::InvalidNetwork("malformed potential".into()));
        }
        Ok(CgPotential {
            discrete,
            cards,
            continuous,
            components,
        })
    }

    /// A discrete-only potential from log-values, row-major over `cards`.
    pub fn from_log_table(discrete: Vec<VarId>, cards: Vec<usize>, log_values: Vec<f64>) -> Result<Self> {
        let comps = log_values.into_iter().map(|g| CanonicalGaussian::constant(g, 0)).collect();
        Self::new(discrete, cards, vec![], comps)
    }

    pub fn discrete_scope(&self) -> &[VarId] {
        &self.discrete
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn continuous_scope(&self) -> &[VarId] {
        &self.continuous
    }

    pub fn components(&self) -> &[CanonicalGaussian] {
        &self.components
    }

    pub fn is_discrete_only(&self) -> bool {
        self.continuous.is_empty()
    }

    /// Every variable in either scope.
    pub fn scope(&self) -> BTreeSet<VarId> {
        self.discrete.iter().chain(&self.continuous).copied().collect()
    }

    /// Index of a full discrete configuration given as values aligned with
    /// the discrete scope.
    pub fn config_index(&self, values: &[usize]) -> usize {
        values
            .iter()
            .zip(&self.cards)
            .fold(0, |acc, (&x, &c)| acc * c + x)
    }

    /// `true` when every component carries the zero-mass sentinel.
    pub fn is_all_zero(&self) -> bool {
        self.components.iter().all(CanonicalGaussian::is_zero_mass)
    }

    pub fn from_function(net: &HybridMixedNetwork, f: FunctionId) -> Self {
        match f {
            FunctionId::Cpd(v) => match net.cpd(v) {
                Cpd::Tabular(t) => Self::from_tabular(net, t),
                Cpd::LinearGaussian(g) => Self::from_linear_gaussian(net, g),
            },
            FunctionId::Constraint(c) => Self::from_constraint(net, &net.constraints()[c]),
        }
    }

    /// Discrete potential with `g = log P(child | parents)`.
    pub fn from_tabular(net: &HybridMixedNetwork, cpd: &TabularCpd) -> Self {
        let mut own: Vec<VarId> = cpd.parents.clone();
        own.push(cpd.child);
        let own_cards: Vec<usize> = own.iter().map(|&v| net.cardinality(v)).collect();
        let mut discrete = own.clone();
        discrete.sort();
        let cards: Vec<usize> = discrete.iter().map(|&v| net.cardinality(v)).collect();
        // Stride of each sorted-scope variable inside the CPD's own layout.
        let own_strides = strides(&own_cards);
        let step: Vec<usize> = discrete
            .iter()
            .map(|v| own_strides[own.iter().position(|o| o == v).unwrap()])
            .collect();
        let components = crate::model::all_tuples(&cards)
            .into_iter()
            .map(|t| {
                let idx: usize = t.iter().zip(&step).map(|(x, s)| x * s).sum();
                CanonicalGaussian::constant(cpd.table[idx].ln(), 0)
            })
            .collect();
        CgPotential {
            discrete,
            cards,
            continuous: vec![],
            components,
        }
    }

    /// Canonical form of the conditional density of a linear-Gaussian CPD,
    /// one component per discrete-parent configuration.
    pub fn from_linear_gaussian(net: &HybridMixedNetwork, cpd: &LinearGaussianCpd) -> Self {
        let mut discrete = cpd.discrete_parents.clone();
        discrete.sort();
        let cards: Vec<usize> = discrete.iter().map(|&v| net.cardinality(v)).collect();
        let own_cards: Vec<usize> = cpd.discrete_parents.iter().map(|&v| net.cardinality(v)).collect();
        let own_strides = strides(&own_cards);
        let step: Vec<usize> = discrete
            .iter()
            .map(|v| own_strides[cpd.discrete_parents.iter().position(|o| o == v).unwrap()])
            .collect();

        let mut continuous = cpd.continuous_parents.clone();
        continuous.push(cpd.child);
        continuous.sort();
        let dim = continuous.len();
        let child_pos = continuous.binary_search(&cpd.child).unwrap();
        let parent_pos = positions_unsorted(&cpd.continuous_parents, &continuous);

        let components = crate::model::all_tuples(&cards)
            .into_iter()
            .map(|t| {
                let idx: usize = t.iter().zip(&step).map(|(x, s)| x * s).sum();
                let cfg = &cpd.configs[idx];
                // x - beta.z = a.u with a = e_child - sum beta_j e_{z_j}
                let mut a = DVector::zeros(dim);
                a[child_pos] = 1.0;
                for (&p, &b) in parent_pos.iter().zip(&cfg.coefficients) {
                    a[p] = -b;
                }
                let gamma = cfg.variance;
                let k = &a * a.transpose() / gamma;
                let h = &a * (cfg.intercept / gamma);
                let g = -0.5 * (2.0 * PI * gamma).ln() - cfg.intercept * cfg.intercept / (2.0 * gamma);
                CanonicalGaussian { g, h, k }
            })
            .collect();
        CgPotential {
            discrete,
            cards,
            continuous,
            components,
        }
    }

    /// Indicator of the allowed tuples: `g = 0` allowed, sentinel otherwise.
    pub fn from_constraint(net: &HybridMixedNetwork, rel: &ConstraintRelation) -> Self {
        let mut discrete = rel.scope.clone();
        discrete.sort();
        let cards: Vec<usize> = discrete.iter().map(|&v| net.cardinality(v)).collect();
        let order: Vec<usize> = rel
            .scope
            .iter()
            .map(|v| discrete.binary_search(v).unwrap())
            .collect();
        let components = crate::model::all_tuples(&cards)
            .into_iter()
            .map(|t| {
                let tuple: Vec<usize> = order.iter().map(|&p| t[p]).collect();
                let g = if rel.allows(&tuple) { 0.0 } else { f64::NEG_INFINITY };
                CanonicalGaussian::constant(g, 0)
            })
            .collect();
        CgPotential {
            discrete,
            cards,
            continuous: vec![],
            components,
        }
    }

    /// Pointwise product on the union scope.
    pub fn multiply(&self, other: &CgPotential) -> CgPotential {
        self.combine(other, 1.0)
    }

    /// Pointwise quotient `self / other`, where `other`'s scope is contained
    /// in `self`'s. Zero-mass divisors give zero-mass results (`0/0 = 0`).
    pub fn divide(&self, other: &CgPotential) -> CgPotential {
        self.combine(other, -1.0)
    }

    fn combine(&self, other: &CgPotential, sign: f64) -> CgPotential {
        let discrete = merge_sorted(&self.discrete, &other.discrete);
        let cards: Vec<usize> = discrete
            .iter()
            .map(|v| {
                self.discrete
                    .binary_search(v)
                    .map(|p| self.cards[p])
                    .unwrap_or_else(|_| other.cards[other.discrete.binary_search(v).unwrap()])
            })
            .collect();
        let continuous = merge_sorted(&self.continuous, &other.continuous);
        let dim = continuous.len();
        let idx_a = projection(&discrete, &cards, &self.discrete, &self.cards);
        let idx_b = projection(&discrete, &cards, &other.discrete, &other.cards);
        let pos_a = positions(&self.continuous, &continuous);
        let pos_b = positions(&other.continuous, &continuous);
        let same_a = pos_a.len() == dim;

        let components = idx_a
            .iter()
            .zip(&idx_b)
            .map(|(&ia, &ib)| {
                let a = &self.components[ia];
                let b = &other.components[ib];
                if a.is_zero_mass() || b.is_zero_mass() {
                    return CanonicalGaussian::zero_mass(dim);
                }
                if dim == 0 {
                    return CanonicalGaussian::constant(a.g + sign * b.g, 0);
                }
                let (mut h, mut k) = if same_a {
                    (a.h.clone(), a.k.clone())
                } else {
                    let mut h = DVector::zeros(dim);
                    let mut k = DMatrix::zeros(dim, dim);
                    scatter_add(&mut h, &mut k, a, &pos_a, 1.0);
                    (h, k)
                };
                scatter_add(&mut h, &mut k, b, &pos_b, sign);
                CanonicalGaussian { g: a.g + sign * b.g, h, k }
            })
            .collect();
        CgPotential {
            discrete,
            cards,
            continuous,
            components,
        }
    }

    /// Integrates the given continuous variables out of every component.
    pub fn marginalize_continuous(&self, vars: &[VarId], mode: Integration) -> Result<CgPotential> {
        let remove: BTreeSet<VarId> = vars.iter().copied().filter(|v| self.continuous.contains(v)).collect();
        if remove.is_empty() {
            return Ok(self.clone());
        }
        let keep_idx: Vec<usize> = (0..self.continuous.len())
            .filter(|&i| !remove.contains(&self.continuous[i]))
            .collect();
        let drop_idx: Vec<usize> = (0..self.continuous.len())
            .filter(|&i| remove.contains(&self.continuous[i]))
            .collect();
        let continuous: Vec<VarId> = keep_idx.iter().map(|&i| self.continuous[i]).collect();
        let mut components = Vec::with_capacity(self.components.len());
        for c in &self.components {
            if c.is_zero_mass() {
                components.push(CanonicalGaussian::zero_mass(keep_idx.len()));
                continue;
            }
            components.push(integrate(c, &keep_idx, &drop_idx, mode)?);
        }
        Ok(CgPotential {
            discrete: self.discrete.clone(),
            cards: self.cards.clone(),
            continuous,
            components,
        })
    }

    /// Sums the given discrete variables out. Exact when the continuous scope
    /// is empty; otherwise each retained configuration's mixture is collapsed
    /// to the moment-matched Gaussian.
    pub fn marginalize_discrete(&self, vars: &[VarId], mode: Integration) -> Result<CgPotential> {
        let remove: BTreeSet<VarId> = vars.iter().copied().filter(|v| self.discrete.contains(v)).collect();
        if remove.is_empty() {
            return Ok(self.clone());
        }
        let (discrete, cards): (Vec<VarId>, Vec<usize>) = self
            .discrete
            .iter()
            .zip(&self.cards)
            .filter(|(v, _)| !remove.contains(v))
            .map(|(v, c)| (*v, *c))
            .unzip();
        let target = projection(&self.discrete, &self.cards, &discrete, &cards);
        let total: usize = cards.iter().product();
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); total];
        for (src, &dst) in target.iter().enumerate() {
            groups[dst].push(src);
        }
        let dim = self.continuous.len();
        let mut components = Vec::with_capacity(total);
        for group in groups {
            let live: Vec<&CanonicalGaussian> = group
                .iter()
                .map(|&i| &self.components[i])
                .filter(|c| !c.is_zero_mass())
                .collect();
            components.push(collapse_components(&live, dim, mode)?);
        }
        Ok(CgPotential {
            discrete,
            cards,
            continuous: self.continuous.clone(),
            components,
        })
    }

    /// Marginal onto `keep`: continuous variables are integrated first, then
    /// discrete ones summed.
    pub fn marginalize_onto(&self, keep: &BTreeSet<VarId>, mode: Integration) -> Result<CgPotential> {
        let cont: Vec<VarId> = self.continuous.iter().filter(|v| !keep.contains(v)).copied().collect();
        let disc: Vec<VarId> = self.discrete.iter().filter(|v| !keep.contains(v)).copied().collect();
        self.marginalize_continuous(&cont, mode)?.marginalize_discrete(&disc, mode)
    }

    /// Instantiates observed variables. Discrete evidence selects matching
    /// configurations; continuous evidence is substituted into `(g, h, K)`.
    pub fn reduce_evidence(&self, evidence: &Evidence) -> CgPotential {
        let disc_obs: Vec<(usize, usize)> = self
            .discrete
            .iter()
            .enumerate()
            .filter_map(|(pos, v)| evidence.get(*v).and_then(Value::as_discrete).map(|x| (pos, x)))
            .collect();
        let cont_obs: Vec<(usize, f64)> = self
            .continuous
            .iter()
            .enumerate()
            .filter_map(|(pos, v)| evidence.get(*v).and_then(Value::as_continuous).map(|x| (pos, x)))
            .collect();
        if disc_obs.is_empty() && cont_obs.is_empty() {
            return self.clone();
        }

        let observed_pos: BTreeSet<usize> = disc_obs.iter().map(|&(p, _)| p).collect();
        let (discrete, cards): (Vec<VarId>, Vec<usize>) = self
            .discrete
            .iter()
            .zip(&self.cards)
            .enumerate()
            .filter(|(p, _)| !observed_pos.contains(p))
            .map(|(_, (v, c))| (*v, *c))
            .unzip();
        let full_strides = strides(&self.cards);
        let base: usize = disc_obs.iter().map(|&(p, x)| x * full_strides[p]).sum();
        let free_strides: Vec<usize> = (0..self.discrete.len())
            .filter(|p| !observed_pos.contains(p))
            .map(|p| full_strides[p])
            .collect();

        let obs_cont: BTreeSet<usize> = cont_obs.iter().map(|&(p, _)| p).collect();
        let keep_idx: Vec<usize> = (0..self.continuous.len()).filter(|p| !obs_cont.contains(p)).collect();
        let continuous: Vec<VarId> = keep_idx.iter().map(|&p| self.continuous[p]).collect();
        let obs_idx: Vec<usize> = cont_obs.iter().map(|&(p, _)| p).collect();
        let obs_val = DVector::from_iterator(cont_obs.len(), cont_obs.iter().map(|&(_, x)| x));

        let components = crate::model::all_tuples(&cards)
            .into_iter()
            .map(|t| {
                let idx = base + t.iter().zip(&free_strides).map(|(x, s)| x * s).sum::<usize>();
                let c = &self.components[idx];
                if obs_idx.is_empty() {
                    return c.clone();
                }
                if c.is_zero_mass() {
                    return CanonicalGaussian::zero_mass(keep_idx.len());
                }
                let h_o = select_vec(&c.h, &obs_idx);
                let k_oo = select_mat(&c.k, &obs_idx, &obs_idx);
                let k_ko = select_mat(&c.k, &keep_idx, &obs_idx);
                let g = c.g + h_o.dot(&obs_val) - 0.5 * obs_val.dot(&(&k_oo * &obs_val));
                let h = select_vec(&c.h, &keep_idx) - &k_ko * &obs_val;
                let k = select_mat(&c.k, &keep_idx, &keep_idx);
                CanonicalGaussian { g, h, k }
            })
            .collect();
        CgPotential {
            discrete,
            cards,
            continuous,
            components,
        }
    }

    /// Weight, mean and covariance of every component.
    pub fn to_moments(&self) -> Result<Vec<GaussianMoments>> {
        self.components.iter().map(CanonicalGaussian::to_moments).collect()
    }

    /// Inverse of [`CgPotential::to_moments`].
    pub fn from_moments(
        discrete: Vec<VarId>,
        cards: Vec<usize>,
        continuous: Vec<VarId>,
        moments: &[GaussianMoments],
    ) -> Result<CgPotential> {
        let components = moments
            .iter()
            .map(|m| CanonicalGaussian::from_log_moments(m.weight.ln(), &m.mean, &m.covariance))
            .collect::<Result<Vec<_>>>()?;
        Self::new(discrete, cards, continuous, components)
    }

    /// `log` of the total mass (sum over configurations of the integral).
    pub fn log_total_mass(&self) -> Result<f64> {
        let masses = self
            .components
            .iter()
            .map(CanonicalGaussian::log_mass)
            .collect::<Result<Vec<_>>>()?;
        Ok(log_sum_exp(masses))
    }

    /// Shifts every `g` so the largest is zero; returns the shift applied.
    pub fn normalize_max(&mut self) -> f64 {
        let max = self
            .components
            .iter()
            .map(|c| c.g)
            .fold(f64::NEG_INFINITY, f64::max);
        if max.is_finite() {
            for c in &mut self.components {
                c.g -= max;
            }
            max
        } else {
            0.0
        }
    }

    /// Adds a constant to every live `g`.
    pub fn scale_log(&mut self, delta: f64) {
        for c in &mut self.components {
            c.g += delta;
        }
    }
}

fn positions_unsorted(sub: &[VarId], scope: &[VarId]) -> Vec<usize> {
    sub.iter().map(|v| scope.binary_search(v).unwrap()).collect()
}

fn scatter_add(h: &mut DVector<f64>, k: &mut DMatrix<f64>, c: &CanonicalGaussian, pos: &[usize], sign: f64) {
    for (i, &pi) in pos.iter().enumerate() {
        h[pi] += sign * c.h[i];
        for (j, &pj) in pos.iter().enumerate() {
            k[(pi, pj)] += sign * c.k[(i, j)];
        }
    }
}

fn select_vec(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

fn select_mat(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Schur-complement integration of `drop` out of one component.
fn integrate(c: &CanonicalGaussian, keep: &[usize], drop: &[usize], mode: Integration) -> Result<CanonicalGaussian> {
    let h_a = select_vec(&c.h, keep);
    let h_b = select_vec(&c.h, drop);
    let k_aa = select_mat(&c.k, keep, keep);
    let k_ab = select_mat(&c.k, keep, drop);
    let k_bb = select_mat(&c.k, drop, drop);

    if let Some(chol) = k_bb.clone().cholesky() {
        let sol_h = chol.solve(&h_b);
        let sol_k = chol.solve(&k_ab.transpose());
        let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let g = c.g + 0.5 * h_b.dot(&sol_h) + 0.5 * (drop.len() as f64 * LN_2PI - log_det);
        let h = h_a - &k_ab * sol_h;
        let k = symmetrize(k_aa - &k_ab * sol_k);
        return Ok(CanonicalGaussian { g, h, k });
    }
    if mode == Integration::Strict {
        return Err(Error::SingularBlock);
    }
    // Pseudo-inverse over the informative eigen-directions.
    let eig = k_bb.symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(1e-300);
    let mut pinv = DMatrix::zeros(drop.len(), drop.len());
    let mut log_det = 0.0;
    let mut rank = 0usize;
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > 1e-10 * scale.max(1.0) {
            let u = eig.eigenvectors.column(i);
            pinv += u * u.transpose() / lambda;
            log_det += lambda.ln();
            rank += 1;
        }
    }
    let g = c.g + 0.5 * h_b.dot(&(&pinv * &h_b)) + 0.5 * (rank as f64 * LN_2PI - log_det);
    let h = h_a - &k_ab * (&pinv * h_b);
    let k = symmetrize(k_aa - &k_ab * &pinv * k_ab.transpose());
    Ok(CanonicalGaussian { g, h, k })
}

/// Sum of live components sharing a discrete configuration after
/// marginalization.
fn collapse_components(live: &[&CanonicalGaussian], dim: usize, mode: Integration) -> Result<CanonicalGaussian> {
    let Some(first) = live.first() else {
        return Ok(CanonicalGaussian::zero_mass(dim));
    };
    let g = log_sum_exp(live.iter().map(|c| c.g));
    if dim == 0 || live.iter().all(|c| c.same_shape(first)) {
        return Ok(CanonicalGaussian {
            g,
            h: first.h.clone(),
            k: first.k.clone(),
        });
    }
    // Moments relative to the largest component keep the weights in range.
    let shift = live.iter().map(|c| c.g).fold(f64::NEG_INFINITY, f64::max);
    let mut parts = Vec::with_capacity(live.len());
    for c in live {
        let shifted = CanonicalGaussian {
            g: c.g - shift,
            h: c.h.clone(),
            k: c.k.clone(),
        };
        match shifted.to_moments() {
            Ok(m) => parts.push(m),
            Err(e) => {
                if mode == Integration::Strict {
                    return Err(e);
                }
                return Ok(average_canonical(live, g, dim));
            }
        }
    }
    let m = GaussianMoments::collapse(&parts);
    match CanonicalGaussian::from_log_moments(m.weight.ln() + shift, &m.mean, &m.covariance) {
        Ok(c) => Ok(c),
        Err(e) if mode == Integration::Strict => Err(e),
        Err(_) => Ok(average_canonical(live, g, dim)),
    }
}

fn average_canonical(live: &[&CanonicalGaussian], g: f64, dim: usize) -> CanonicalGaussian {
    let mut h = DVector::zeros(dim);
    let mut k = DMatrix::zeros(dim, dim);
    for c in live {
        let w = (c.g - g).exp();
        h += &c.h * w;
        k += &c.k * w;
    }
    CanonicalGaussian { g, h, k }
}
