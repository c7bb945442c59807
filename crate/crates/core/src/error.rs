use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("stepsize {gamma} outside (0, {max}]")]
    InvalidStepsize { gamma: f64, max: f64 },

    #[error("empty problem: {0}")]
    Empty(&'static str),

    #[error("iterate diverged at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("budget exhausted before tolerance; best certified estimate {achieved:e}")]
    BudgetExhausted { achieved: f64 },

    #[error("target not reached; best suboptimality {best:e}")]
    TargetNotReached { best: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("refused: {0}")]
    Refused(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
