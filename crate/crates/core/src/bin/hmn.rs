use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use hmn_core::decomposition::{build_join_graph, build_join_tree, elimination_order_over};
use hmn_core::exact::Calibrator;
use hmn_core::genbench::io::{network_to_string, read_network, MarginalsJson};
use hmn_core::genbench::{generate, run_experiment, select_evidence, ExperimentConfig, GeneratorParams};
use hmn_core::model::{Evidence, HybridMixedNetwork, VarId};
use hmn_core::sampler::{ijgp_rb_sampling, pure_rb_sampling, Budget};
use hmn_core::{ijgp, Error, Result};

#[derive(Parser)]
#[command(name = "hmn", version, about = "Inference and benchmarks for hybrid mixed networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Output {
    /// Write the result here instead of standard output.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random network, with evidence when a fraction is given.
    Generate {
        #[arg(long)]
        n1: usize,
        #[arg(long, default_value_t = 0)]
        n2: usize,
        #[arg(long, short)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        c1: usize,
        #[arg(long, default_value_t = 0)]
        c2: usize,
        #[arg(long, short, default_value_t = 2)]
        p: usize,
        #[arg(long, short, default_value_t = 0)]
        t: usize,
        #[arg(long, default_value_t = 0.0)]
        evidence_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: Output,
    },
    /// Exact posterior marginals by join-tree clustering.
    Exact {
        network: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: Output,
    },
    /// Approximate discrete marginals by iterative join-graph propagation.
    Ijgp {
        network: PathBuf,
        #[arg(long, default_value_t = 2)]
        i_bound: usize,
        #[arg(long, default_value_t = 10)]
        iterations: usize,
        #[arg(long, default_value_t = ijgp::DEFAULT_TOLERANCE)]
        tolerance: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: Output,
    },
    /// Rao-Blackwellised importance sampling over a w-cutset.
    Sample {
        network: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::IjgpRb)]
        mode: Mode,
        #[arg(long, default_value_t = 2)]
        i_bound: usize,
        #[arg(long, default_value_t = 0)]
        w: usize,
        #[arg(long, default_value_t = 10)]
        iterations: usize,
        #[arg(long, conflicts_with = "time_budget")]
        samples: Option<usize>,
        /// Seconds of sampling.
        #[arg(long)]
        time_budget: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: Output,
    },
    /// Run the error grid described by a JSON config; writes CSV and prints
    /// a summary table.
    Benchmark {
        config: PathBuf,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: Output,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    IjgpRb,
    PureRb,
}

#[derive(Serialize)]
struct SampleReport {
    cutset: Vec<String>,
    total_drawn: usize,
    rejection_rate: f64,
    #[serde(flatten)]
    marginals: MarginalsJson,
}

#[derive(Serialize)]
struct IjgpReport {
    iterations: usize,
    converged: bool,
    residual: f64,
    inconsistent: bool,
    #[serde(flatten)]
    marginals: MarginalsJson,
}

fn emit(out: &Output, text: &str) -> Result<()> {
    match &out.output {
        Some(path) => std::fs::write(path, format!("{text}\n"))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn unobserved(net: &HybridMixedNetwork, evidence: &Evidence) -> std::collections::BTreeSet<VarId> {
    (0..net.len()).map(VarId).filter(|v| !evidence.contains(*v)).collect()
}

fn load(path: &Path) -> Result<(HybridMixedNetwork, Evidence)> {
    let (net, ev) = read_network(path)?;
    log::info!("{} variables, {} observed", net.len(), ev.len());
    Ok((net, ev))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            n1,
            n2,
            k,
            c1,
            c2,
            p,
            t,
            evidence_fraction,
            seed,
            out,
        } => {
            let params = GeneratorParams::new(n1, n2, k, c1, c2, p, t, seed);
            let net = generate(&params)?;
            let ev = if evidence_fraction > 0.0 {
                select_evidence(&net, evidence_fraction, seed)?
            } else {
                Evidence::new()
            };
            emit(&out, &network_to_string(&net, &ev)?)
        }
        Command::Exact { network, out, .. } => {
            let (net, ev) = load(&network)?;
            let tree = build_join_tree(&net, &elimination_order_over(&net, &unobserved(&net, &ev)))?;
            log::info!("join tree of {} nodes, adjusted width {}", tree.nodes().len(), tree.adjusted_width());
            let cal = Calibrator::new(&net, tree).calibrate(&ev)?;
            let m = MarginalsJson::new(
                &net,
                Some(cal.log_evidence_probability()),
                &cal.all_discrete_marginals()?,
                &cal.all_continuous_moments()?,
            );
            emit(&out, &serde_json::to_string_pretty(&m)?)
        }
        Command::Ijgp {
            network,
            i_bound,
            iterations,
            tolerance,
            out,
            ..
        } => {
            let (net, ev) = load(&network)?;
            let graph = build_join_graph(&net, &elimination_order_over(&net, &unobserved(&net, &ev)), i_bound)?;
            let state = ijgp::run(&net, &graph, &ev, iterations, tolerance)?;
            let discrete = net
                .discrete_vars()
                .filter(|v| !ev.contains(*v))
                .map(|v| Ok((v, state.approx_discrete_marginal(v)?)))
                .collect::<Result<BTreeMap<_, _>>>()?;
            let report = IjgpReport {
                iterations: state.iterations(),
                converged: state.converged(),
                residual: state.residual(),
                inconsistent: state.inconsistent(),
                marginals: MarginalsJson::new(&net, None, &discrete, &BTreeMap::new()),
            };
            emit(&out, &serde_json::to_string_pretty(&report)?)
        }
        Command::Sample {
            network,
            mode,
            i_bound,
            w,
            iterations,
            samples,
            time_budget,
            seed,
            out,
        } => {
            let (net, ev) = load(&network)?;
            let budget = match (samples, time_budget) {
                (_, Some(s)) if s.is_nan() || s <= 0.0 => {
                    return Err(Error::InfeasibleParams("time budget must be positive".into()))
                }
                (_, Some(s)) => Budget::Time(Duration::from_secs_f64(s)),
                (Some(0), None) => return Err(Error::InfeasibleParams("sample budget must be positive".into())),
                (Some(n), None) => Budget::Samples(n),
                (None, None) => Budget::Samples(10_000),
            };
            let outcome = match mode {
                Mode::IjgpRb => ijgp_rb_sampling(&net, &ev, i_bound, iterations, w, budget, seed)?,
                Mode::PureRb => pure_rb_sampling(&net, &ev, w, budget, seed)?,
            };
            let report = SampleReport {
                cutset: outcome
                    .samples
                    .cutset
                    .iter()
                    .map(|v| net.variable(*v).name.clone())
                    .collect(),
                total_drawn: outcome.samples.total_drawn,
                rejection_rate: outcome.samples.rejection_rate(),
                marginals: MarginalsJson::new(&net, None, &outcome.estimates.discrete, &outcome.estimates.continuous),
            };
            emit(&out, &serde_json::to_string_pretty(&report)?)
        }
        Command::Benchmark { config, seed, out } => {
            let text = std::fs::read_to_string(&config)?;
            let mut config: ExperimentConfig = serde_json::from_str(&text)?;
            if let Some(s) = seed {
                config.seed = s;
            }
            let report = run_experiment(&config)?;
            for (id, reason) in &report.skipped {
                log::warn!("instance {id} skipped: {reason}");
            }
            match &out.output {
                Some(path) => {
                    report.write_csv(std::fs::File::create(path)?)?;
                    print!("{}", report.summary_table());
                }
                None => {
                    report.write_csv(std::io::stdout().lock())?;
                    eprint!("{}", report.summary_table());
                }
            }
            Ok(())
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InconsistentEvidence => 3,
        Error::Io(_) | Error::AllSamplesRejected | Error::ExactIntractable(_) | Error::SingularBlock => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
