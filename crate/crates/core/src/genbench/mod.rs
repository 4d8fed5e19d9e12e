//! Random problem generation, error metrics, JSON files and the benchmark
//! harness.

pub mod evidence;
pub mod experiment;
pub mod generator;
pub mod io;
pub mod metrics;

pub use evidence::select_evidence;
pub use experiment::{run_experiment, BudgetConfig, ErrorReport, ExperimentConfig};
pub use generator::{generate, GeneratorParams};
pub use metrics::{absolute_error, kl_distance, relative_error, Metrics};
