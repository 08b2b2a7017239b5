use thiserror::Error;

/// Errors raised by the decomposition, field, reservoir and harness layers.
///
/// Variants split into two families: bad input (`exit code 1` at the CLI)
/// and numerical failure (`exit code 2`).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("simulation failed at probe {index}: {source}")]
    ProbeFailed {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("descent diverged after {steps} steps (objective {objective:e})")]
    Diverged { steps: usize, objective: f64 },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Wraps the error with the name of the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Numerical(_) | Error::Diverged { .. } => true,
            Error::ProbeFailed { source, .. } | Error::Stage { source, .. } => {
                source.is_numerical()
            }
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
