use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid environment graph: {0}")]
    InvalidGraph(String),

    #[error("environment generation failed: {0}")]
    GenerationFailed(String),

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("reduced Laplacian is singular: {0}")]
    SingularLaplacian(String),

    #[error("ground set has no candidate loop edges")]
    NoCandidates,

    #[error("brute force refused: {0} candidates exceeds the limit of {1}")]
    TooManyCandidates(usize, usize),

    #[error("linear program is infeasible (residual {0:e})")]
    InfeasibleLp(f64),

    #[error("support distribution grew to {size} pairs (cap {cap})")]
    SupportOverflow { size: usize, cap: usize },

    #[error("plan consistency: {0}")]
    Consistency(String),

    #[error("coverage violated: {0} vertices not visited")]
    CoverageViolation(usize),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
