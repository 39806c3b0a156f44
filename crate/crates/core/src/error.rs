use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the defocus toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violated the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A named parameter is outside its valid range.
    #[error("invalid parameter `{field}`: {reason}")]
    Parameter { field: &'static str, reason: String },

    /// A file did not parse. `offset` is the byte offset where parsing failed.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("unsupported format: {0}")]
    Unsupported(String),

    #[error("missing key `{0}`")]
    MissingKey(String),

    #[error("unknown key `{0}`")]
    UnknownKey(String),

    #[error("invalid value for `{key}` on line {line}: {reason}")]
    BadValue {
        key: String,
        line: usize,
        reason: String,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// The calibration geometry carries no measurable defocus.
    #[error("unsolvable: {0}")]
    Unsolvable(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image codec: {0}")]
    Codec(String),

    /// Wraps an error raised while processing one calibration pair.
    #[error("pair {index}: {source}")]
    Pair {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(offset: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: message.into(),
        }
    }

    /// True for errors caused by a malformed or incomplete configuration file.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::MissingKey(_) | Error::UnknownKey(_) | Error::BadValue { .. } | Error::Parameter { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
