use thiserror::Error;

/// Every failure the library reports.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("kernel probabilities sum to {sum}, expected 1")]
    ProbabilitySum { sum: f64 },
    #[error("kernel support does not span R^{dim} (second-moment matrix is singular)")]
    DegenerateSupport { dim: usize },
    #[error("kernel lists site {site:?} more than once")]
    DuplicateSite { site: Vec<i64> },
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("operation needs a smooth test function")]
    NotSmooth,
    #[error("no closed form and quadrature did not converge: {0}")]
    UnsupportedCombination(String),
    #[error("quadrature did not converge: {0}")]
    QuadratureNotConverged(String),
    #[error("time must be positive, got {0}")]
    NonPositiveTime(f64),
    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("Gram matrix is not positive semidefinite even with jitter {jitter:e}")]
    GramNotPsd { jitter: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid simulation plan: {0}")]
    PlanInvalid(String),
    #[error("summary and limit specification disagree: {0}")]
    SpecMismatch(String),
    #[error("normality test needs at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("theta vector is degenerate: {0}")]
    InvalidTheta(String),
    #[error("{0}")]
    EmptyInput(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
