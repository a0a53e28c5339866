use thiserror::Error;

/// Errors raised by the laboratory. Failing certificates are not errors;
/// they are returned as reports with `passed == false`.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("non-finite value in state point")]
    NonFiniteState,
    #[error("state kind mismatch: expected {expected}, got {found}")]
    KindMismatch { expected: String, found: String },
    #[error("state index {index} out of range for {states} states")]
    StateOutOfRange { index: usize, states: usize },
    #[error("invalid metric: {0}")]
    InvalidMetric(String),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("invalid generator: {0}")]
    InvalidGenerator(String),
    #[error("reducible chain: state {from} cannot reach state {to}")]
    Reducible { from: usize, to: usize },
    #[error("observable is not centered: mean {mean:e}")]
    NotCentered { mean: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("singular linear system: {0}")]
    Singular(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate variance")]
    DegenerateVariance,
    #[error("too few paths: need at least {needed}, got {got}")]
    TooFewPaths { needed: usize, got: usize },
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, LabError>;

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for LabError {
    fn from(e: serde_json::Error) -> Self {
        LabError::Config(e.to_string())
    }
}
