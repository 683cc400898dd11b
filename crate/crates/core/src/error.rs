use thiserror::Error;

use crate::model::BankId;

/// Failure categories surfaced by the engine.
///
/// The front ends map each category to a distinct exit code / status, so new
/// variants should be slotted into [`Error::kind`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("rejected fact: {}", .violations.join("; "))]
    RejectedFact { violations: Vec<String> },

    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("retain failed: {0}")]
    RetainFailed(String),

    #[error("provider error: {0}")]
    Provider(#[from] ProviderError),

    #[error("background merge rejected: {0}")]
    BackgroundRejected(String),

    #[error("temporal parse error: {0}")]
    TemporalParse(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("bank not found: {0}")]
    BankNotFound(BankId),

    #[error("bank already exists: {0}")]
    BankExists(BankId),

    #[error("unsupported snapshot format version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("storage error: {0}")]
    Storage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse classification used by the CLI exit codes and HTTP statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Provider,
    Storage,
    NotFound,
    Conflict,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Precondition(_)
            | Error::InvalidInput(_)
            | Error::RejectedFact { .. }
            | Error::Validation(_)
            | Error::BackgroundRejected(_)
            | Error::TemporalParse(_)
            | Error::Config(_) => ErrorKind::Validation,
            Error::RetainFailed(_) | Error::Provider(_) => ErrorKind::Provider,
            Error::BankNotFound(_) => ErrorKind::NotFound,
            Error::BankExists(_) => ErrorKind::Conflict,
            Error::UnsupportedVersion { .. } | Error::Storage(_) | Error::Io(_) => ErrorKind::Storage,
        }
    }

    /// Violation list for validation-class errors, empty otherwise.
    pub fn violations(&self) -> Vec<String> {
        match self {
            Error::RejectedFact { violations } | Error::Validation(violations) => violations.clone(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProviderError {
    #[error("{provider} call failed: {message}")]
    Call { provider: String, message: String },

    #[error("{provider} call timed out after {millis} ms")]
    Timeout { provider: String, millis: u128 },

    #[error("{provider} returned output violating its schema: {}", .violations.join("; "))]
    Schema {
        provider: String,
        violations: Vec<String>,
    },
}

impl ProviderError {
    pub fn call(provider: impl Into<String>, message: impl Into<String>) -> Self {
        ProviderError::Call {
            provider: provider.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
