use thiserror::Error;

/// Errors produced anywhere in the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("domain mismatch: model {model} expects {expected} spins, got {got}")]
    DomainMismatch {
        model: &'static str,
        expected: &'static str,
        got: &'static str,
    },

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("system too large for exact enumeration: n = {n}, cap = {cap}")]
    TooLarge { n: usize, cap: usize },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("config field `{field}`: {message}")]
    ConfigField { field: String, message: String },

    #[error("too many per-disorder failures: {failed} of {total}")]
    TooManyFailures { failed: usize, total: usize },

    #[error("malformed disorder file: {0}")]
    DisorderFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
