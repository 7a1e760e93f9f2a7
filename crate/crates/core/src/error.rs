use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad grouping used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad arguments or configuration.
    Config,
    /// Bad or insufficient observations.
    Data,
    /// The requested quantity does not exist for these inputs.
    Numeric,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid probability vector: {0}")]
    InvalidProbability(String),

    #[error("invalid accuracy profile: {0}")]
    InvalidAccuracy(String),

    #[error("invalid confusion matrix: {0}")]
    InvalidConfusion(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error(
        "chance-level classifier: alpha0 + alpha1 = {sum} is too close to 1, \
         the error correction is undefined (use a classifier better than chance)"
    )]
    ChanceLevelClassifier { sum: f64 },

    #[error("channel matrix is not invertible (reciprocal condition number {rcond:e})")]
    SingularChannel { rcond: f64 },

    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("{0} is undefined for a zero reference value")]
    Undefined(&'static str),

    #[error("divergence is infinite: estimate has a zero entry at class {0}")]
    InfiniteDivergence(usize),

    #[error("value {value} out of range [{lower}, {upper}]")]
    OutOfRange { value: f64, lower: f64, upper: f64 },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidProbability(_)
            | Error::InvalidAccuracy(_)
            | Error::InvalidConfusion(_)
            | Error::Dimension { .. }
            | Error::InvalidArgument(_)
            | Error::OutOfRange { .. } => ErrorClass::Config,
            Error::InsufficientSamples { .. } => ErrorClass::Data,
            Error::ChanceLevelClassifier { .. }
            | Error::SingularChannel { .. }
            | Error::DegenerateModel(_)
            | Error::Undefined(_)
            | Error::InfiniteDivergence(_) => ErrorClass::Numeric,
        }
    }
}
