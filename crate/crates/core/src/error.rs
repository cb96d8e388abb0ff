use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or parameter combination.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Operand shapes do not agree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A binary matrix file violated the format at `offset`.
    #[error("malformed matrix file at byte offset {offset}: {reason}")]
    Format { offset: u64, reason: String },

    /// A backward pass was handed a cache that no longer matches the parameters.
    #[error("stale forward cache: {0}")]
    StaleCache(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f32 },

    /// A benchmarked kernel disagreed with the reference output.
    #[error("kernel `{kernel}` disagrees with the reference at output {index}")]
    KernelMismatch { kernel: String, index: usize },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
