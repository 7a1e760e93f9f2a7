use std::path::PathBuf;

use cleam::ErrorClass;
use serde::Serialize;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },

    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },

    #[error("{path}: empty input")]
    EmptyInput { path: PathBuf },

    #[error("{path}:{line}: malformed row: {reason}")]
    MalformedRow { path: PathBuf, line: u64, reason: String },

    #[error("{path}:{line}: class {class} is not below the declared number of classes {n_classes}")]
    UnknownClass { path: PathBuf, line: u64, class: i64, n_classes: usize },

    #[error("batch '{batch_id}' has {got} samples, but batch '{first_id}' has {expected}")]
    InconsistentBatchSize { batch_id: String, got: u64, first_id: String, expected: u64 },

    #[error(transparent)]
    Core(#[from] cleam::Error),
}

/// Exit statuses: 2 config, 3 data, 4 numeric or degenerate input.
impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Write { .. } => 2,
            CliError::Read { .. }
            | CliError::EmptyInput { .. }
            | CliError::MalformedRow { .. }
            | CliError::UnknownClass { .. }
            | CliError::InconsistentBatchSize { .. } => 3,
            CliError::Core(e) => match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Data => 3,
                ErrorClass::Numeric => 4,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "config",
            3 => "data",
            _ => "numeric",
        }
    }

    fn hint(&self) -> Option<&'static str> {
        match self {
            CliError::Core(cleam::Error::ChanceLevelClassifier { .. }) => Some(
                "the classifier accuracies satisfy alpha0 + alpha1 = 1, so its output carries no \
                 information about the true class; measure with a better classifier",
            ),
            CliError::Core(cleam::Error::SingularChannel { .. }) => {
                Some("the confusion matrix cannot be inverted; check for duplicated or constant columns")
            }
            CliError::Core(cleam::Error::InsufficientSamples { .. }) => {
                Some("provide more batches (at least two are needed for a variance)")
            }
            CliError::InconsistentBatchSize { .. } => Some("every batch must contain the same number of samples"),
            _ => None,
        }
    }

    /// Machine-readable form written to stderr on failure.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Body<'a> {
            kind: &'a str,
            exit_code: u8,
            message: String,
            #[serde(skip_serializing_if = "Option::is_none")]
            hint: Option<&'a str>,
        }
        #[derive(Serialize)]
        struct Wrapper<'a> {
            error: Body<'a>,
        }
        serde_json::to_string(&Wrapper {
            error: Body {
                kind: self.kind(),
                exit_code: self.exit_code(),
                message: self.to_string(),
                hint: self.hint(),
            },
        })
        .expect("error body serializes")
    }
}
