use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// A record or argument violates a structural invariant.
    #[error("validation failed for `{id}`: {rule}")]
    Validation { id: String, rule: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("lookup failed: {0}")]
    Lookup(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("backend error: {0}")]
    Backend(String),

    #[error("translation provider error: {0}")]
    Provider(String),

    #[error("zero-shot protocol violation: {0}")]
    Protocol(String),

    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("corrupted journal {path}: {message}")]
    Journal { path: PathBuf, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn validation(id: impl Into<String>, rule: impl Into<String>) -> Self {
        Error::Validation {
            id: id.into(),
            rule: rule.into(),
        }
    }

    /// Wraps a backend failure with the context it occurred in.
    pub fn with_context(self, context: impl std::fmt::Display) -> Self {
        match self {
            Error::Backend(msg) => Error::Backend(format!("{context}: {msg}")),
            other => other,
        }
    }
}
