use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write;
use std::time::{Duration, Instant};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomposition::{build_join_graph, build_join_tree, elimination_order_over};
use crate::error::{Error, Result};
use crate::exact::{tree_table_size, Calibrator};
use crate::ijgp;
use crate::model::{Evidence, HybridMixedNetwork, VarId};
use crate::potential::GaussianMoments;
use crate::sampler::{ijgp_rb_sampling, pure_rb_sampling, Budget, SamplingOutcome};

use super::evidence::select_evidence;
use super::generator::{generate, GeneratorParams};
use super::metrics::{compare_marginals, Metrics};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetConfig {
    Seconds(f64),
    Samples(usize),
}

impl BudgetConfig {
    pub fn to_budget(self) -> Budget {
        match self {
            BudgetConfig::Seconds(s) => Budget::Time(Duration::from_secs_f64(s)),
            BudgetConfig::Samples(n) => Budget::Samples(n),
        }
    }
}

fn default_fraction() -> f64 {
    0.1
}

fn default_iterations() -> usize {
    10
}

fn default_grid() -> Vec<usize> {
    vec![0, 2, 4, 6]
}

fn default_true() -> bool {
    true
}

fn default_table_limit() -> f64 {
    5e7
}

/// Benchmark configuration, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Problem classes; each one's `seed` is replaced per instance.
    pub params: Vec<GeneratorParams>,
    /// Instances per problem class.
    pub instances: usize,
    #[serde(default = "default_fraction")]
    pub evidence_fraction: f64,
    /// Budget given to every sampling cell.
    pub budget: BudgetConfig,
    #[serde(default = "default_iterations")]
    pub ijgp_iterations: usize,
    #[serde(default = "default_grid")]
    pub i_values: Vec<usize>,
    #[serde(default = "default_grid")]
    pub w_values: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    /// When false, `wall_ms` is written as 0 so reruns are byte-identical.
    #[serde(default = "default_true")]
    pub record_wall_time: bool,
    /// Join trees above this many table entries are skipped as intractable.
    #[serde(default = "default_table_limit")]
    pub max_table_size: f64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.evidence_fraction) {
            return Err(Error::InvalidEvidence(format!("fraction {} outside [0, 1)", self.evidence_fraction)));
        }
        match self.budget {
            BudgetConfig::Seconds(s) if s.is_nan() || s <= 0.0 => {
                return Err(Error::InfeasibleParams("time budget must be positive".into()))
            }
            BudgetConfig::Samples(0) => return Err(Error::InfeasibleParams("sample budget must be positive".into())),
            _ => {}
        }
        self.params.iter().try_for_each(GeneratorParams::validate)
    }
}

/// Which algorithm a grid cell runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Algorithm {
    #[serde(rename = "pure-rb")]
    PureRb,
    #[serde(rename = "ijgp")]
    Ijgp,
    #[serde(rename = "ijgp-rb")]
    IjgpRb,
}

impl Algorithm {
    /// Column `i = 0` samples from the prior; row `w = 0` runs IJGP alone.
    pub fn for_cell(i: usize, w: usize) -> Algorithm {
        if i == 0 {
            Algorithm::PureRb
        } else if w == 0 {
            Algorithm::Ijgp
        } else {
            Algorithm::IjgpRb
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::PureRb => "pure-rb",
            Algorithm::Ijgp => "ijgp",
            Algorithm::IjgpRb => "ijgp-rb",
        }
    }
}

/// One CSV line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CsvRow {
    pub instance_id: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub algorithm: Algorithm,
    pub i: usize,
    pub w: usize,
    pub abs_err: f64,
    pub rel_err: f64,
    pub kl: f64,
    pub kl_summed: f64,
    pub rejection_rate: Option<f64>,
    pub wall_ms: u64,
}

/// A cell result with the extra figures kept out of the CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub row: CsvRow,
    pub metrics: Metrics,
    /// Mean absolute error of posterior means and variances of continuous
    /// variables, for samplers.
    pub continuous_error: Option<(f64, f64)>,
    pub samples_drawn: Option<usize>,
    pub all_rejected: bool,
}

/// A generated problem with consistent evidence.
#[derive(Debug, Clone)]
pub struct Instance {
    pub id: usize,
    pub params: GeneratorParams,
    pub net: HybridMixedNetwork,
    pub evidence: Evidence,
    pub sampler_seed: u64,
}

/// Exact posteriors of one instance.
#[derive(Debug, Clone)]
pub struct ExactSolution {
    pub log_evidence: f64,
    pub discrete: BTreeMap<VarId, Vec<f64>>,
    pub continuous: BTreeMap<VarId, GaussianMoments>,
}

#[derive(Debug, Clone, Default)]
pub struct ErrorReport {
    pub cells: Vec<CellResult>,
    /// Instances left out, with the reason.
    pub skipped: Vec<(usize, String)>,
}

/// Averages of one `(T, w, i)` cell over instances.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct CellSummary {
    pub absolute: f64,
    pub relative: f64,
    pub kl: f64,
    pub kl_summed: f64,
    pub rejection_rate: Option<f64>,
    pub wall_ms: f64,
    pub count: usize,
}

/// Seeds for every instance, drawn in a fixed order from the master seed.
fn instance_seeds(config: &ExperimentConfig) -> Vec<(usize, GeneratorParams, u64, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = Vec::new();
    for params in &config.params {
        for _ in 0..config.instances {
            let id = out.len();
            let gen_seed = rng.next_u64();
            let ev_seed = rng.next_u64();
            let sampler_seed = rng.next_u64();
            out.push((id, params.with_seed(gen_seed), ev_seed, sampler_seed));
        }
    }
    out
}

/// Instance ids paired with the reason they were dropped.
pub type Skipped = Vec<(usize, String)>;

/// Generates every configured instance, dropping those whose evidence
/// could not be drawn.
pub fn build_instances(config: &ExperimentConfig) -> Result<(Vec<Instance>, Skipped)> {
    config.validate()?;
    let mut instances = Vec::new();
    let mut skipped = Vec::new();
    for (id, params, ev_seed, sampler_seed) in instance_seeds(config) {
        let net = generate(&params)?;
        match select_evidence(&net, config.evidence_fraction, ev_seed) {
            Ok(evidence) => instances.push(Instance {
                id,
                params,
                net,
                evidence,
                sampler_seed,
            }),
            Err(e) => {
                log::warn!("instance {id} skipped: {e}");
                skipped.push((id, e.to_string()));
            }
        }
    }
    Ok((instances, skipped))
}

fn unobserved(net: &HybridMixedNetwork, evidence: &Evidence) -> BTreeSet<VarId> {
    (0..net.len()).map(VarId).filter(|v| !evidence.contains(*v)).collect()
}

/// Exact posteriors, or [`Error::ExactIntractable`] when the join tree
/// exceeds `max_table_size` entries.
pub fn solve_exact(net: &HybridMixedNetwork, evidence: &Evidence, max_table_size: f64) -> Result<ExactSolution> {
    let order = elimination_order_over(net, &unobserved(net, evidence));
    let tree = build_join_tree(net, &order)?;
    let size = tree_table_size(net, &tree);
    if size > max_table_size {
        return Err(Error::ExactIntractable(format!(
            "join tree needs {size:.0} entries (adjusted width {})",
            tree.adjusted_width()
        )));
    }
    let cal = Calibrator::new(net, tree).calibrate(evidence)?;
    Ok(ExactSolution {
        log_evidence: cal.log_evidence_probability(),
        discrete: cal.all_discrete_marginals()?,
        continuous: cal.all_continuous_moments()?,
    })
}

fn uniform_estimates(net: &HybridMixedNetwork, exact: &ExactSolution) -> BTreeMap<VarId, Vec<f64>> {
    exact
        .discrete
        .keys()
        .map(|&v| {
            let k = net.cardinality(v);
            (v, vec![1.0 / k as f64; k])
        })
        .collect()
}

fn continuous_error(exact: &ExactSolution, approx: &BTreeMap<VarId, GaussianMoments>) -> Option<(f64, f64)> {
    if exact.continuous.is_empty() {
        return None;
    }
    let n = exact.continuous.len() as f64;
    let (mut dm, mut dv) = (0.0, 0.0);
    for (v, e) in &exact.continuous {
        let a = approx.get(v)?;
        dm += (e.mean[0] - a.mean[0]).abs();
        dv += (e.covariance[(0, 0)] - a.covariance[(0, 0)]).abs();
    }
    Some((dm / n, dv / n))
}

/// Runs one grid cell on one instance.
pub fn run_cell(
    instance: &Instance,
    exact: &ExactSolution,
    config: &ExperimentConfig,
    i: usize,
    w: usize,
) -> Result<CellResult> {
    let algorithm = Algorithm::for_cell(i, w);
    let net = &instance.net;
    let ev = &instance.evidence;
    let budget = config.budget.to_budget();
    // Distinct but reproducible streams per cell.
    let seed = instance.sampler_seed ^ ((i as u64) << 32 | w as u64);
    let start = Instant::now();
    let mut all_rejected = false;
    let mut cont = None;
    let mut drawn = None;
    let mut rejection = None;
    let estimates = match algorithm {
        Algorithm::Ijgp => {
            let order = elimination_order_over(net, &unobserved(net, ev));
            let graph = build_join_graph(net, &order, i)?;
            let state = ijgp::run(net, &graph, ev, config.ijgp_iterations, ijgp::DEFAULT_TOLERANCE)?;
            exact
                .discrete
                .keys()
                .map(|&v| Ok((v, state.approx_discrete_marginal(v)?)))
                .collect::<Result<BTreeMap<_, _>>>()?
        }
        Algorithm::PureRb | Algorithm::IjgpRb => {
            let outcome = if algorithm == Algorithm::PureRb {
                pure_rb_sampling(net, ev, w, budget, seed)
            } else {
                ijgp_rb_sampling(net, ev, i, config.ijgp_iterations, w, budget, seed)
            };
            match outcome {
                Ok(SamplingOutcome { samples, estimates }) => {
                    rejection = Some(samples.rejection_rate());
                    drawn = Some(samples.total_drawn);
                    cont = continuous_error(exact, &estimates.continuous);
                    estimates.discrete
                }
                Err(Error::AllSamplesRejected) => {
                    all_rejected = true;
                    rejection = Some(1.0);
                    uniform_estimates(net, exact)
                }
                Err(e) => return Err(e),
            }
        }
    };
    let wall = start.elapsed();
    let metrics = compare_marginals(&exact.discrete, &estimates)?;
    Ok(CellResult {
        row: CsvRow {
            instance_id: instance.id,
            t: instance.params.t,
            algorithm,
            i,
            w,
            abs_err: metrics.absolute,
            rel_err: metrics.relative,
            kl: metrics.kl,
            kl_summed: metrics.kl_summed,
            rejection_rate: rejection,
            wall_ms: if config.record_wall_time { wall.as_millis() as u64 } else { 0 },
        },
        metrics,
        continuous_error: cont,
        samples_drawn: drawn,
        all_rejected,
    })
}

/// Runs every cell of the grid on one instance, rows `w` outer, columns `i`
/// inner.
pub fn run_instance(instance: &Instance, config: &ExperimentConfig) -> Result<Vec<CellResult>> {
    let exact = solve_exact(&instance.net, &instance.evidence, config.max_table_size)?;
    if exact.discrete.is_empty() {
        return Err(Error::UndefinedMetric("no unobserved discrete variable".into()));
    }
    let mut cells = Vec::new();
    for &w in &config.w_values {
        for &i in &config.i_values {
            cells.push(run_cell(instance, &exact, config, i, w)?);
        }
    }
    Ok(cells)
}

/// Generates the instances, solves each exactly and runs the grid.
/// Instances run concurrently; cells within one instance run in sequence.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ErrorReport> {
    let (instances, mut skipped) = build_instances(config)?;
    let results: Vec<(usize, Result<Vec<CellResult>>)> = instances
        .par_iter()
        .map(|inst| (inst.id, run_instance(inst, config)))
        .collect();
    let mut cells = Vec::new();
    for (id, r) in results {
        match r {
            Ok(c) => cells.extend(c),
            Err(e @ (Error::ExactIntractable(_) | Error::UndefinedMetric(_))) => {
                log::warn!("instance {id} skipped: {e}");
                skipped.push((id, e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    skipped.sort();
    Ok(ErrorReport { cells, skipped })
}

impl ErrorReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        for c in &self.cells {
            writer.serialize(&c.row)?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
    }

    /// Cell averages keyed by `(T, w, i)`.
    pub fn grid(&self) -> BTreeMap<(usize, usize, usize), CellSummary> {
        let mut grid: BTreeMap<(usize, usize, usize), (CellSummary, f64, usize)> = BTreeMap::new();
        for c in &self.cells {
            let r = &c.row;
            let (s, rej, rej_n) = grid.entry((r.t, r.w, r.i)).or_default();
            s.absolute += r.abs_err;
            s.relative += r.rel_err;
            s.kl += r.kl;
            s.kl_summed += r.kl_summed;
            s.wall_ms += r.wall_ms as f64;
            s.count += 1;
            if let Some(x) = r.rejection_rate {
                *rej += x;
                *rej_n += 1;
            }
        }
        grid.into_iter()
            .map(|(k, (mut s, rej, rej_n))| {
                let n = s.count as f64;
                s.absolute /= n;
                s.relative /= n;
                s.kl /= n;
                s.kl_summed /= n;
                s.wall_ms /= n;
                s.rejection_rate = (rej_n > 0).then(|| rej / rej_n as f64);
                (k, s)
            })
            .collect()
    }

    /// One matrix per tightness: rows `w`, columns `i`, each cell showing
    /// absolute, relative and KL error.
    pub fn summary_table(&self) -> String {
        let grid = self.grid();
        let ts: BTreeSet<usize> = grid.keys().map(|k| k.0).collect();
        let is: BTreeSet<usize> = grid.keys().map(|k| k.2).collect();
        let ws: BTreeSet<usize> = grid.keys().map(|k| k.1).collect();
        let mut out = String::new();
        for t in ts {
            let _ = writeln!(out, "T = {t}   (abs / rel / kl; rows w, columns i)");
            let _ = write!(out, "{:>6}", "w\\i");
            for i in &is {
                let _ = write!(out, " | {:^28}", i);
            }
            out.push('\n');
            for w in &ws {
                let _ = write!(out, "{:>6}", w);
                for i in &is {
                    match grid.get(&(t, *w, *i)) {
                        Some(s) => {
                            let _ = write!(out, " | {:>8.5} {:>8.5} {:>9.5}", s.absolute, s.relative, s.kl);
                        }
                        None => {
                            let _ = write!(out, " | {:^28}", "-");
                        }
                    }
                }
                out.push('\n');
            }
            out.push('\n');
        }
        if !self.skipped.is_empty() {
            let _ = writeln!(out, "skipped instances: {}", self.skipped.len());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            params: vec![GeneratorParams::new(6, 2, 2, 3, 5, 2, 1, 0)],
            instances: 1,
            evidence_fraction: 0.1,
            budget: BudgetConfig::Samples(200),
            ijgp_iterations: 10,
            i_values: default_grid(),
            w_values: default_grid(),
            seed: 5,
            record_wall_time: false,
            max_table_size: 1e6,
        }
    }

    #[test]
    fn cell_semantics() {
        assert_eq!(Algorithm::for_cell(0, 0), Algorithm::PureRb);
        assert_eq!(Algorithm::for_cell(0, 4), Algorithm::PureRb);
        assert_eq!(Algorithm::for_cell(2, 0), Algorithm::Ijgp);
        assert_eq!(Algorithm::for_cell(2, 2), Algorithm::IjgpRb);
    }

    #[test]
    fn tiny_run_fills_the_grid() {
        let report = run_experiment(&tiny_config()).unwrap();
        assert_eq!(report.cells.len(), 16);
        assert_eq!(report.grid().len(), 16);
        let csv = report.to_csv_string().unwrap();
        assert!(csv.starts_with("instance_id,T,algorithm,i,w,abs_err,rel_err,kl,kl_summed,rejection_rate,wall_ms\n"));
        assert_eq!(csv.lines().count(), 17);
        assert!(report.summary_table().contains("T = 1"));
    }

    #[test]
    fn config_parses_with_defaults() {
        let text = r#"{"params":[{"n1":4,"n2":1,"k":2,"c1":1,"c2":2,"p":1,"t":1}],
                       "instances":2,"budget":{"seconds":1.5}}"#;
        let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
        assert_eq!(cfg.i_values, vec![0, 2, 4, 6]);
        assert_eq!(cfg.ijgp_iterations, 10);
        assert_eq!(cfg.budget, BudgetConfig::Seconds(1.5));
        assert!(cfg.record_wall_time);
    }
}
