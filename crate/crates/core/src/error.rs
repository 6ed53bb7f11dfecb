//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // graph construction / queries
    #[error("graph contains a directed cycle")]
    Cycle,
    #[error("target node {target} has outgoing edges and is not a sink")]
    TargetNotSink { target: usize },
    #[error("invalid edge ({from}, {to}) for graph with {nodes} nodes")]
    InvalidEdge { from: usize, to: usize, nodes: usize },
    #[error("graph has {nodes} nodes, exceeding the path-enumeration guard of {limit}")]
    GraphTooLarge { nodes: usize, limit: usize },
    #[error("vector length {got} does not match expected {expected}")]
    LengthMismatch { expected: usize, got: usize },

    // simulation
    #[error("failed to generate a random graph satisfying the constraints after {attempts} attempts")]
    GenerationFailed { attempts: usize },
    #[error("anomaly threshold is unset; call compute_threshold first")]
    ThresholdUnset,
    #[error("interventions on the target variable are not allowed")]
    InterventionOnTarget,
    #[error("anomaly pattern {pattern} perturbs the target variable")]
    PatternOnTarget { pattern: usize },

    // clustering
    #[error("component {component} degenerated and re-seeding failed {attempts} times")]
    DegenerateComponent { component: usize, attempts: usize },
    #[error("cannot fit {k} components to {n} samples")]
    TooFewSamples { k: usize, n: usize },

    // neural nets / surrogate
    #[error("shape mismatch: {context}")]
    ShapeMismatch { context: String },
    #[error("non-finite loss at epoch {epoch}, batch {batch}, node {node}")]
    NonFiniteLoss { epoch: usize, batch: usize, node: usize },

    // decision
    #[error("factual sample is not abnormal (y = {y}, threshold = {threshold})")]
    FactualNotAbnormal { y: f64, threshold: f64 },

    // metrics
    #[error("empty input to metric computation")]
    EmptyInput,
    #[error("reference cost is zero")]
    ZeroReference,
    #[error("no relevant items in the ranking universe")]
    NoRelevantItems,
    #[error("ground-truth vector has zero variance")]
    ZeroVariance,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed data file: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn shape(context: impl Into<String>) -> Self {
        Error::ShapeMismatch { context: context.into() }
    }
}
