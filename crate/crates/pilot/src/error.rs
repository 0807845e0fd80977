//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PilotError {
    /// Dimension mismatch inside an MLP, reported with the offending layer.
    #[error("shape error at layer {layer}: expected input width {expected}, got {got}")]
    LayerShape {
        layer: usize,
        expected: usize,
        got: usize,
    },
    /// Generic tensor/vector shape mismatch.
    #[error("shape error: {0}")]
    Shape(String),
    /// Malformed caller input (NaN actions, non-contiguous trajectories, ...).
    #[error("input error: {0}")]
    Input(String),
    /// Operation invoked on an object in the wrong state (e.g. empty buffer).
    #[error("state error: {0}")]
    State(String),
    /// A documented contract between modules was violated.
    #[error("contract violation: {0}")]
    Contract(String),
    /// Non-finite values where finite ones are required.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// Bad configuration file or CLI override.
    #[error("config error: {0}")]
    Config(String),
    /// Unreadable or incompatible checkpoint/snapshot file.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PilotError>;
