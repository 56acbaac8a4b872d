//! Error type shared across the engine.

use thiserror::Error;

/// Engine-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shape or dimension contract violated by the caller.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Invalid configuration value; the message names the violated rule.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Corpus, manifest or image ingestion problem.
    #[error("data error: {0}")]
    Data(String),

    /// The label cannot be aligned to the available output frames.
    #[error(
        "infeasible alignment: {frames} output frames cannot emit a label of \
         length {label_len} ({required} frames required)"
    )]
    InfeasibleAlignment {
        frames: usize,
        label_len: usize,
        required: usize,
    },

    /// Checkpoint file is malformed, truncated or inconsistent.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn checkpoint(msg: impl Into<String>) -> Self {
        Error::Checkpoint(msg.into())
    }
}
