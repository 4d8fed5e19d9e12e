use thiserror::Error;

/// Errors produced while building networks or running inference.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("the network graph contains a directed cycle through `{0}`")]
    CyclicGraph(String),
    #[error("continuous variable `{parent}` has discrete child `{child}`")]
    ContinuousHasDiscreteChild { parent: String, child: String },
    #[error("CPT of `{child}` is not normalized: row {row} sums to {sum}")]
    UnnormalizedCpt { child: String, row: usize, sum: f64 },
    #[error("constraint {0} allows no tuple")]
    EmptyRelation(usize),
    #[error("dangling variable reference: {0}")]
    DanglingVariableReference(String),
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("assignment does not cover variable `{0}`")]
    IncompleteAssignment(String),
    #[error("precision sub-block is not positive definite")]
    SingularBlock,
    #[error("the join tree has no strong root")]
    NoStrongRoot,
    #[error("i-bound must be at least 1, got {0}")]
    InvalidIBound(usize),
    #[error("evidence has zero probability")]
    InconsistentEvidence,
    #[error("variable `{0}` is not covered by the decomposition")]
    VariableNotCovered(String),
    #[error("all samples were rejected")]
    AllSamplesRejected,
    #[error("infeasible generator parameters: {0}")]
    InfeasibleParams(String),
    #[error("could not generate consistent evidence: {0}")]
    EvidenceGenerationFailed(String),
    #[error("exact inference is intractable: {0}")]
    ExactIntractable(String),
    #[error("invalid evidence: {0}")]
    InvalidEvidence(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Parse(err.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Io(err.to_string())
    }
}
