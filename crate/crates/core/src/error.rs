//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed bytes in a dataset file. `offset` points at the first byte
    /// that could not be consumed.
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    /// A quantity left the mathematical domain of the objective, e.g. a mean
    /// activation outside (0, 1) under the KL penalty. `unit` identifies the
    /// offending hidden unit.
    #[error("domain error on hidden unit {unit}: {msg}")]
    Domain { unit: usize, msg: String },

    /// Training produced a non-finite loss; the position is reported so the
    /// run can be reproduced up to the failing update.
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
