use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid tolerance {epsilon:e} for n = {n}: require 0 < epsilon < 2n")]
    InvalidTolerance { n: usize, epsilon: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical breakdown at iteration {iteration}: {detail}")]
    NumericalBreakdown { iteration: usize, detail: String },

    #[error("invariant violated at iteration {iteration}: {detail}")]
    InvariantViolated { iteration: usize, detail: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("plant became unstable at substep {substep}")]
    PlantInstability { substep: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    /// Process exit status used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NumericalBreakdown { .. } | Error::InvariantViolated { .. } => 3,
            Error::PlantInstability { .. } => 4,
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}
