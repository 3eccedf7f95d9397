//! Error type shared by every module in the crate.

use std::path::PathBuf;

/// Crate-wide error enum. Variants map onto the CLI exit-code policy:
/// `Config` means the caller asked for something invalid (exit 2), the
/// rest are runtime failures (exit 1).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid parameter, flag, or config-file value.
    #[error("configuration error: {0}")]
    Config(String),

    /// A cell in an input file failed to parse. Row numbers are 1-based
    /// data rows (the header is row 0).
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    /// Structurally malformed input (ragged rows, missing header, ...).
    #[error("format error: {0}")]
    Format(String),

    /// Input violates a documented precondition (e.g. NA in training data).
    #[error("unsupported input: {0}")]
    UnsupportedInput(String),

    /// Caller broke an API contract (e.g. baseline scoring of a row with
    /// missing values).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// AUC is undefined for the given labels.
    #[error("undefined AUC: {0}")]
    UndefinedAuc(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that should be reported as misuse (CLI exit code 2)
    /// rather than runtime failure (exit code 1).
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
