use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NouError {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value at index {index}: {what}")]
    NonFinite { index: usize, what: String },

    #[error("covariance matrix is not positive definite: {0}")]
    Conditioning(String),

    #[error("value {value} outside the domain {domain}")]
    Domain { value: f64, domain: String },

    #[error("root bracketing failed: {0}")]
    Bracketing(String),

    #[error("Riccati solution blew up at t = {time} (|A| = {norm:e})")]
    BlowUp { time: f64, norm: f64 },

    #[error("ergodic coefficients did not stabilize after {doublings} horizon doublings")]
    NotStabilized { doublings: usize },

    #[error("time step {dt} violates thinning bound: need dt <= {max_dt}")]
    ThinningBound { dt: f64, max_dt: f64 },

    #[error("path {path} failed for gamma = {gamma}: {source}")]
    PathFailure {
        gamma: f64,
        path: usize,
        source: Box<NouError>,
    },

    #[error("{0}")]
    Io(String),
}

impl NouError {
    /// True for errors raised by numerical routines rather than by input validation.
    pub fn is_numerical(&self) -> bool {
        match self {
            NouError::Conditioning(_)
            | NouError::Bracketing(_)
            | NouError::BlowUp { .. }
            | NouError::NotStabilized { .. } => true,
            NouError::PathFailure { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

impl From<std::io::Error> for NouError {
    fn from(e: std::io::Error) -> Self {
        NouError::Io(e.to_string())
    }
}

impl From<csv::Error> for NouError {
    fn from(e: csv::Error) -> Self {
        NouError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for NouError {
    fn from(e: serde_json::Error) -> Self {
        NouError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, NouError>;
