use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Data handed to an operation violates its precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A parameter (fraction, rate, step, budget) is out of range.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A user-supplied test function returned a non-finite value.
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// The requested work would exceed a configured resource limit.
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error on {path}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("JSON error on {path}: {message}")]
    Json { path: PathBuf, message: String },

    /// A run configuration parsed but failed validation.
    #[error("{} invalid field(s): {}", .0.len(), join_fields(.0))]
    Schema(Vec<FieldError>),
}

/// One validation failure located by its dotted field path, e.g. `kernel.p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "`{}`: {}", self.path, self.message)
    }
}

fn join_fields(errors: &[FieldError]) -> String {
    errors
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}
