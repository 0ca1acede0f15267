use std::io;

use thiserror::Error;

/// Errors produced by the training stack.
#[derive(Debug, Error)]
pub enum Error {
    /// An input vector does not match a layer's expected input width.
    #[error("layer {layer}: expected input of length {expected}, got {got}")]
    LayerInput {
        layer: usize,
        expected: usize,
        got: usize,
    },

    /// A vector argument has the wrong length for its role.
    #[error("{what}: expected length {expected}, got {got}")]
    DimMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// Two parameter sets that must be congruent are not.
    #[error("shape mismatch in {0}")]
    ShapeMismatch(&'static str),

    /// A value that must be finite is NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("replay buffer is empty")]
    EmptyBuffer,

    #[error("invalid transition: {0}")]
    InvalidTransition(String),

    #[error("episode already finished; reset the environment before stepping")]
    EpisodeFinished,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Input to PCA carries no variance at all.
    #[error("degenerate data: all {directions} directions have zero variance")]
    DegenerateData { directions: usize },

    /// Training produced non-finite values; the run cannot continue.
    #[error("training diverged at train step {step}: {what}")]
    Diverged { step: u64, what: &'static str },

    #[error("map parse error: {0}")]
    MapParse(String),

    #[error("snapshot error: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
