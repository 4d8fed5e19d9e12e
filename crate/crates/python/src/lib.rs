//! Python bindings: network generation and I/O, exact inference, IJGP,
//! Rao-Blackwellised sampling and the error metrics.

use std::collections::BTreeMap;
use std::time::Duration;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use hmn_core::decomposition::{build_join_graph, build_join_tree, elimination_order_over};
use hmn_core::exact::Calibrator;
use hmn_core::genbench::io::{network_to_string, parse_evidence, NetworkJson};
use hmn_core::genbench::{self, GeneratorParams};
use hmn_core::model::{Evidence, HybridMixedNetwork, Value, VarId};
use hmn_core::potential::GaussianMoments;
use hmn_core::sampler::{self, Budget};
use hmn_core::{ijgp, Error};

create_exception!(hmn, HmnError, PyException, "Error raised by the inference library.");
create_exception!(hmn, InconsistentEvidenceError, HmnError, "The evidence has zero probability.");

fn to_py(err: Error) -> PyErr {
    match err {
        Error::InconsistentEvidence => InconsistentEvidenceError::new_err(err.to_string()),
        other => HmnError::new_err(other.to_string()),
    }
}

type Moments = BTreeMap<String, (f64, f64)>;

/// A hybrid mixed network.
#[pyclass(module = "hmn", frozen)]
struct Network {
    inner: HybridMixedNetwork,
}

impl Network {
    fn evidence(&self, raw: Option<BTreeMap<String, f64>>) -> PyResult<Evidence> {
        parse_evidence(&self.inner, &raw.unwrap_or_default()).map_err(to_py)
    }

    fn names<T: Clone>(&self, map: &BTreeMap<VarId, T>) -> BTreeMap<String, T> {
        map.iter()
            .map(|(v, x)| (self.inner.variable(*v).name.clone(), x.clone()))
            .collect()
    }

    fn moments(&self, map: &BTreeMap<VarId, GaussianMoments>) -> Moments {
        map.iter()
            .map(|(v, m)| (self.inner.variable(*v).name.clone(), (m.mean[0], m.covariance[(0, 0)])))
            .collect()
    }

    fn unobserved(&self, ev: &Evidence) -> std::collections::BTreeSet<VarId> {
        (0..self.inner.len()).map(VarId).filter(|v| !ev.contains(*v)).collect()
    }
}

#[pymethods]
impl Network {
    /// Random network from the parametric model `(n1, n2, k, c1, c2, p, t)`.
    #[staticmethod]
    #[pyo3(signature = (n1, n2, k, c1, c2, p, t, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn generate(n1: usize, n2: usize, k: usize, c1: usize, c2: usize, p: usize, t: usize, seed: u64) -> PyResult<Self> {
        let inner = genbench::generate(&GeneratorParams::new(n1, n2, k, c1, c2, p, t, seed)).map_err(to_py)?;
        Ok(Network { inner })
    }

    /// Parses a network file; returns the network and its evidence.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<(Self, BTreeMap<String, f64>)> {
        let json: NetworkJson = serde_json::from_str(text).map_err(|e| to_py(e.into()))?;
        let (inner, _) = json.to_network().map_err(to_py)?;
        Ok((Network { inner }, json.evidence))
    }

    #[pyo3(signature = (evidence=None))]
    fn to_json(&self, evidence: Option<BTreeMap<String, f64>>) -> PyResult<String> {
        let ev = self.evidence(evidence)?;
        network_to_string(&self.inner, &ev).map_err(to_py)
    }

    /// Variable names in id order.
    #[getter]
    fn variables(&self) -> Vec<String> {
        self.inner.variables().iter().map(|v| v.name.clone()).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Cardinality of a discrete variable, `None` for a continuous one.
    fn cardinality(&self, name: &str) -> PyResult<Option<usize>> {
        let v = self
            .inner
            .var_by_name(name)
            .ok_or_else(|| to_py(Error::DanglingVariableReference(name.into())))?;
        Ok(self.inner.variable(v).cardinality())
    }

    /// Observes `floor(fraction * n)` random variables at values of one
    /// sample of the constrained distribution.
    #[pyo3(signature = (fraction, seed=0))]
    fn select_evidence(&self, fraction: f64, seed: u64) -> PyResult<BTreeMap<String, f64>> {
        let ev = genbench::select_evidence(&self.inner, fraction, seed).map_err(to_py)?;
        Ok(ev
            .iter()
            .map(|(v, x)| {
                let value = match x {
                    Value::Discrete(d) => d as f64,
                    Value::Continuous(c) => c,
                };
                (self.inner.variable(v).name.clone(), value)
            })
            .collect())
    }

    fn __repr__(&self) -> String {
        let discrete = self.inner.discrete_vars().count();
        format!(
            "Network({} discrete, {} continuous, {} constraints)",
            discrete,
            self.inner.len() - discrete,
            self.inner.constraints().len()
        )
    }
}

/// Posterior marginals of unobserved variables.
#[pyclass(module = "hmn", frozen, get_all)]
struct Marginals {
    log_evidence: Option<f64>,
    discrete: BTreeMap<String, Vec<f64>>,
    /// `name -> (mean, variance)`.
    continuous: Moments,
}

#[pyclass(module = "hmn", frozen, get_all)]
struct IjgpResult {
    iterations: usize,
    converged: bool,
    residual: f64,
    discrete: BTreeMap<String, Vec<f64>>,
}

#[pyclass(module = "hmn", frozen, get_all)]
struct SamplingResult {
    cutset: Vec<String>,
    total_drawn: usize,
    rejection_rate: f64,
    discrete: BTreeMap<String, Vec<f64>>,
    continuous: Moments,
}

/// Exact posteriors by join-tree clustering.
#[pyfunction]
#[pyo3(signature = (net, evidence=None))]
fn exact(net: &Network, evidence: Option<BTreeMap<String, f64>>) -> PyResult<Marginals> {
    let ev = net.evidence(evidence)?;
    let run = || -> hmn_core::Result<Marginals> {
        let tree = build_join_tree(&net.inner, &elimination_order_over(&net.inner, &net.unobserved(&ev)))?;
        let cal = Calibrator::new(&net.inner, tree).calibrate(&ev)?;
        Ok(Marginals {
            log_evidence: Some(cal.log_evidence_probability()),
            discrete: net.names(&cal.all_discrete_marginals()?),
            continuous: net.moments(&cal.all_continuous_moments()?),
        })
    };
    run().map_err(to_py)
}

/// Approximate discrete marginals by iterative join-graph propagation.
#[pyfunction]
#[pyo3(name = "ijgp", signature = (net, evidence=None, i_bound=2, iterations=10, tolerance=ijgp::DEFAULT_TOLERANCE))]
fn run_ijgp(
    net: &Network,
    evidence: Option<BTreeMap<String, f64>>,
    i_bound: usize,
    iterations: usize,
    tolerance: f64,
) -> PyResult<IjgpResult> {
    let ev = net.evidence(evidence)?;
    let run = || -> hmn_core::Result<IjgpResult> {
        let graph = build_join_graph(
            &net.inner,
            &elimination_order_over(&net.inner, &net.unobserved(&ev)),
            i_bound,
        )?;
        let state = ijgp::run(&net.inner, &graph, &ev, iterations, tolerance)?;
        let discrete = net
            .inner
            .discrete_vars()
            .filter(|v| !ev.contains(*v))
            .map(|v| Ok((v, state.approx_discrete_marginal(v)?)))
            .collect::<hmn_core::Result<BTreeMap<_, _>>>()?;
        Ok(IjgpResult {
            iterations: state.iterations(),
            converged: state.converged(),
            residual: state.residual(),
            discrete: net.names(&discrete),
        })
    };
    run().map_err(to_py)
}

/// IJGP-RB sampling (`mode="ijgp-rb"`) or pure RB sampling
/// (`mode="pure-rb"`) over a w-cutset. `time_budget` in seconds overrides
/// `samples`.
#[pyfunction]
#[pyo3(signature = (net, evidence=None, mode="ijgp-rb", i_bound=2, w=0, samples=10_000, time_budget=None, iterations=10, seed=0))]
#[allow(clippy::too_many_arguments)]
fn sample(
    net: &Network,
    evidence: Option<BTreeMap<String, f64>>,
    mode: &str,
    i_bound: usize,
    w: usize,
    samples: usize,
    time_budget: Option<f64>,
    iterations: usize,
    seed: u64,
) -> PyResult<SamplingResult> {
    let ev = net.evidence(evidence)?;
    let budget = match time_budget {
        Some(s) if s > 0.0 => Budget::Time(Duration::from_secs_f64(s)),
        Some(_) => return Err(HmnError::new_err("time budget must be positive")),
        None if samples == 0 => return Err(HmnError::new_err("sample budget must be positive")),
        None => Budget::Samples(samples),
    };
    let outcome = match mode {
        "ijgp-rb" => sampler::ijgp_rb_sampling(&net.inner, &ev, i_bound, iterations, w, budget, seed),
        "pure-rb" => sampler::pure_rb_sampling(&net.inner, &ev, w, budget, seed),
        other => return Err(HmnError::new_err(format!("unknown mode `{other}`"))),
    }
    .map_err(to_py)?;
    Ok(SamplingResult {
        cutset: outcome
            .samples
            .cutset
            .iter()
            .map(|v| net.inner.variable(*v).name.clone())
            .collect(),
        total_drawn: outcome.samples.total_drawn,
        rejection_rate: outcome.samples.rejection_rate(),
        discrete: net.names(&outcome.estimates.discrete),
        continuous: net.moments(&outcome.estimates.continuous),
    })
}

#[pyfunction]
fn absolute_error(exact: Vec<f64>, approx: Vec<f64>) -> PyResult<f64> {
    genbench::absolute_error(&exact, &approx).map_err(to_py)
}

#[pyfunction]
fn relative_error(exact: Vec<f64>, approx: Vec<f64>) -> PyResult<f64> {
    genbench::relative_error(&exact, &approx).map_err(to_py)
}

#[pyfunction]
fn kl_distance(exact: Vec<f64>, approx: Vec<f64>) -> PyResult<f64> {
    genbench::kl_distance(&exact, &approx).map_err(to_py)
}

#[pymodule]
fn hmn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("HmnError", m.py().get_type::<HmnError>())?;
    m.add("InconsistentEvidenceError", m.py().get_type::<InconsistentEvidenceError>())?;
    m.add_class::<Network>()?;
    m.add_class::<Marginals>()?;
    m.add_class::<IjgpResult>()?;
    m.add_class::<SamplingResult>()?;
    m.add_function(wrap_pyfunction!(exact, m)?)?;
    m.add_function(wrap_pyfunction!(run_ijgp, m)?)?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(absolute_error, m)?)?;
    m.add_function(wrap_pyfunction!(relative_error, m)?)?;
    m.add_function(wrap_pyfunction!(kl_distance, m)?)?;
    Ok(())
}
