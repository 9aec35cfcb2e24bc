use thiserror::Error;

/// Errors raised by the simulators and estimators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("numerical blow-up: non-finite {what} at monitoring step {step}")]
    NonFinite { what: &'static str, step: usize },

    #[error("weights must be non-empty")]
    EmptyWeights,

    #[error("weight vector is not normalized (sum = {sum})")]
    Unnormalized { sum: f64 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("estimator requested at step {actual}, but the system must be at step {expected}")]
    StepMismatch { expected: usize, actual: usize },

    #[error("duration {duration} is not an integer multiple of step {step}")]
    OffGrid { duration: f64, step: f64 },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Attaches the monitoring step to a non-finite error raised deeper in the stack.
    pub(crate) fn at_step(self, step: usize) -> Self {
        match self {
            Error::NonFinite { what, .. } => Error::NonFinite { what, step },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
