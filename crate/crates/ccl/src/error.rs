//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {path}")]
    MissingFile { path: PathBuf },

    #[error("column {column:?} not present in {path}")]
    MissingColumn { column: String, path: PathBuf },

    #[error("zero parseable rows in {path}")]
    NoParseableRows { path: PathBuf },

    #[error("invalid argument {field}: {reason}")]
    InvalidArgument { field: String, reason: String },

    #[error("empty input: {what}")]
    EmptyInput { what: String },

    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    ShapeMismatch {
        op: String,
        expected: String,
        got: String,
    },

    #[error("zero mean target: CV-RMSE denominator is zero")]
    ZeroMeanTarget,

    #[error("zero-norm vector in {op}")]
    ZeroNorm { op: String },

    #[error("non-finite value detected in {context}")]
    NonFinite { context: String },

    #[error("model is frozen and cannot be trained")]
    FrozenModel,

    #[error("model must be frozen for {op}")]
    NotFrozen { op: String },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("config error in {field}: {reason}")]
    Config { field: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn shape(op: impl Into<String>, expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op: op.into(),
            expected: expected.into(),
            got: got.into(),
        }
    }

    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by a bad configuration rather than a runtime failure.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config { .. }
                | Error::InvalidArgument { .. }
                | Error::MissingFile { .. }
                | Error::MissingColumn { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
