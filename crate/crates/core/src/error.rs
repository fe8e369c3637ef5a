use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("infeasible half-cell parameters: {0}")]
    InfeasibleParameters(String),

    #[error("peak deficit: found {found} peak(s), need {needed}")]
    PeakDeficit { found: usize, needed: usize },

    #[error("fit failure: {0}")]
    FitFailure(String),

    #[error("generation error: {0}")]
    Generation(String),

    #[error("bounds too narrow: only {feasible} of {drawn} draws were feasible; widen the bounds")]
    WidenBounds { feasible: usize, drawn: usize },

    #[error("ill-conditioned matrix: factorization failed up to relative jitter {jitter:e}")]
    IllConditioned { jitter: f64 },

    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("surrogate accuracy not met: max relative residual {residual:.4e} (limit {limit:.1e})")]
    SurrogateAccuracy { residual: f64, limit: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
