//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// Invalid configuration value or malformed config file.
    #[error("config error: {0}")]
    Config(String),

    /// Tensor/matrix dimension mismatch.
    #[error("dimension mismatch: {0}")]
    Dim(String),

    /// Numerical failure (non-finite value, failed factorization, diverged run).
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

pub type CoreResult<T> = Result<T, CoreError>;

impl CoreError {
    pub fn config(msg: impl Into<String>) -> Self {
        CoreError::Config(msg.into())
    }
    pub fn dim(msg: impl Into<String>) -> Self {
        CoreError::Dim(msg.into())
    }
    pub fn numeric(msg: impl Into<String>) -> Self {
        CoreError::Numeric(msg.into())
    }
}
