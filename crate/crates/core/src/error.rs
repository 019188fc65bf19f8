//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or incompatible shapes detected before work starts.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller violated an API contract (e.g. submitted a masked action).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Internal inconsistency (stale caches, mismatched buffers).
    #[error("internal error: {0}")]
    Internal(String),

    /// Training diverged or produced non-finite values.
    #[error("training aborted: {0}")]
    TrainAbort(String),

    /// Checkpoint file is corrupt or not a checkpoint.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
