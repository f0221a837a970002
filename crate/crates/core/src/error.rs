use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("transmission probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),

    #[error("estimator {0} is below 1")]
    EstimatorBelowOne(f64),

    #[error("{function} has no sign change on [{lo}, {hi}]")]
    NoBracket {
        function: &'static str,
        lo: f64,
        hi: f64,
    },

    #[error("infeasible rate band: {0}")]
    Infeasible(String),

    #[error("{kind} function rejected by class validation: {failed}")]
    ClassValidation { kind: &'static str, failed: String },

    #[error("sweep grid is empty")]
    EmptyGrid,

    #[error("classification needs at least {needed} traces, got {got}")]
    TooFewTraces { needed: usize, got: usize },

    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
