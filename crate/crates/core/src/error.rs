use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("constraint violation: {0}")]
    Constraint(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("infeasible epsilon bounds: epsilon_min = {epsilon_min} exceeds 1 - y_best = {upper} (y_best = {y_best})")]
    InfeasibleBounds {
        epsilon_min: f64,
        y_best: f64,
        upper: f64,
    },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("all {0} optimizer starts failed")]
    AllStartsFailed(usize),

    #[error("need at least 2 per-seed values for bootstrap, got {0}")]
    InsufficientSeeds(usize),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Format(_) | Error::Io(_) => 2,
            Error::Factorization(_) | Error::AllStartsFailed(_) => 4,
            _ => 3,
        }
    }
}
