use std::fmt;

use thiserror::Error;

use crate::money::Money;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A validation failure located at a dotted path inside a config document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl FieldError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { path: path.into(), message: message.into() }
    }
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

fn join_fields(errors: &[FieldError]) -> String {
    errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid distribution: {0}")]
    Distribution(String),

    #[error("invalid parameter `{field}`: {message}")]
    InvalidParameter { field: String, message: String },

    #[error("{0} is not a point of the money grid")]
    OffGrid(Money),

    #[error("utility {utility} outside [-{bound}, {bound}]")]
    UtilityOutOfRange { utility: f64, bound: f64 },

    #[error("lookahead {ell} exceeds the {remaining} rounds remaining after round {round}")]
    LookaheadTooLong { ell: u64, remaining: u64, round: u64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid configuration: {}", join_fields(.0))]
    Config(Vec<FieldError>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn param(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidParameter { field: field.into(), message: message.into() }
    }
}
