use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification of failures, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Io,
    Validation,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("degenerate image (zero reference)")]
    DegenerateImage,

    #[error("empty co-occurrence domain")]
    EmptyCooccurrence,

    #[error("degenerate training set: {0}")]
    DegenerateTrainingSet(String),

    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("solver did not converge after {0} iterations")]
    NotConverged(usize),

    #[error("validation failed for `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("unsupported version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("content hash mismatch: stored {stored}, computed {computed}")]
    HashMismatch { stored: String, computed: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("image decode: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter { .. } => ErrorKind::Usage,
            Error::Io { .. } => ErrorKind::Io,
            Error::InvalidInput(_)
            | Error::DimensionMismatch { .. }
            | Error::Validation { .. }
            | Error::UnsupportedVersion { .. }
            | Error::HashMismatch { .. }
            | Error::Json(_)
            | Error::Csv(_)
            | Error::Image(_)
            | Error::DegenerateTrainingSet(_) => ErrorKind::Validation,
            Error::DegenerateImage
            | Error::EmptyCooccurrence
            | Error::DegenerateModel(_)
            | Error::NonFinite(_)
            | Error::NotConverged(_) => ErrorKind::Numeric,
        }
    }
}
