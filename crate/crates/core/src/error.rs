use thiserror::Error;

/// Errors produced by model construction, factor algebra and the samplers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid density parameter: {0}")]
    InvalidDensity(String),

    #[error("sampling is not supported for the {0} kernel")]
    UnsupportedSample(&'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("edge list is not a tree: {0}")]
    NotATree(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("improper Gaussian factor: precision {precision} is not positive")]
    ImproperFactor { precision: f64 },

    #[error("quadrature needs at least 3 points, got {0}")]
    EmptyQuadrature(usize),

    #[error("degenerate importance weights for message {node} -> {target}")]
    DegenerateWeights { node: usize, target: usize },

    #[error("numerical failure at node {node}, iteration {iteration}: {detail}")]
    NumericalFailure {
        node: usize,
        iteration: usize,
        detail: String,
    },

    #[error("unsupported graph for brute-force marginals: {0}")]
    UnsupportedGraph(String),

    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
}

pub type Result<T> = std::result::Result<T, Error>;
