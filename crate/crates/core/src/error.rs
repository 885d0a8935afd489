use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: ({l1}, {n1}) vs ({l2}, {n2})")]
    GridMismatch { l1: f64, n1: usize, l2: f64, n2: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no convergence after {iterations} iterations (last residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("lost positivity at iteration {0}")]
    LostPositivity(usize),
    #[error("solver diverged: {0}")]
    Diverged(String),
    #[error("ill-conditioned solve: {0}")]
    IllConditioned(String),
    #[error("solvability violated: {name} = {value:.3e}")]
    SolvabilityViolated { name: String, value: f64 },
    #[error("kernel certificate failed: {0}")]
    KernelCertificate(String),
    #[error("eigensolver failure: {0}")]
    Eigen(String),
    #[error("parameters out of range: {0}")]
    OutOfRange(String),
    #[error("blowup resolution exceeded at t = {t}")]
    ResolutionExceeded { t: f64 },
    #[error("scale unresolved: lambda = {0:.3e}")]
    ScaleUnresolved(f64),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
