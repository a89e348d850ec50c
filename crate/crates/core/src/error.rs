use std::io;

use thiserror::Error;

/// Errors produced by the simulator, learners and file formats.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates its invariant.
    #[error("invalid configuration: `{field}` {reason}")]
    Config { field: &'static str, reason: String },

    /// Inputs with incompatible shapes or out-of-range values.
    #[error("domain error: {0}")]
    Domain(String),

    /// Operation not permitted in the current state (e.g. stepping a finished episode).
    #[error("state error: {0}")]
    State(String),

    /// A file did not parse as the expected container.
    #[error("format error: {0}")]
    Format(String),

    /// A rollout task failed inside the worker pool.
    #[error("rollout task (k={k}, sign={sign}) failed: {message}")]
    Rollout { k: usize, sign: i8, message: String },

    /// Training produced a non-finite value.
    #[error("non-finite value at iteration {iteration}: {what}")]
    NonFinite { iteration: u64, what: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Config {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::Domain(_) | Error::Format(_) | Error::Json(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
