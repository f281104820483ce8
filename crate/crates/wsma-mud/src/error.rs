//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("matrix is not Hermitian positive-definite")]
    NotPositiveDefinite,

    #[error("unsupported QAM order {order} (supported: 4, 16, 64)")]
    UnsupportedModulation { order: usize },

    #[error("unsupported user count {users} for {context}")]
    UnsupportedUserCount { users: usize, context: &'static str },

    #[error("spreading regime violated: need K >= L >= {min_length}, got K={sequences}, L={length}")]
    SpreadingRegime {
        sequences: usize,
        length: usize,
        min_length: usize,
    },

    #[error("sequence optimization ({goal}) missed tolerance {tolerance:.3e}: best metric {best:.12}")]
    OptimizationFailed {
        goal: &'static str,
        best: f64,
        tolerance: f64,
    },

    #[error("cannot select {requested} sequences from a set of {available}")]
    SequenceSelection { requested: usize, available: usize },

    #[error("invalid sequence file: {0}")]
    SequenceFormat(String),

    #[error("layer {layer} output shape underflows: {detail}")]
    ShapeUnderflow { layer: usize, detail: String },

    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("label length mismatch: expected {expected}, got {got}")]
    LabelLength { expected: usize, got: usize },

    #[error("invalid label: {0}")]
    InvalidLabel(String),

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("batch normalization needs a batch of at least 2 samples in train mode")]
    BatchTooSmall,

    #[error("forward cache does not match this backward call: {0}")]
    CacheMismatch(String),

    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    TrainingDiverged { epoch: u64 },

    #[error("unsupported checkpoint version {found} (supported: {supported})")]
    CheckpointVersion { found: u64, supported: u64 },

    #[error("malformed checkpoint: {0}")]
    CheckpointFormat(String),

    #[error("checkpoint does not match the experiment config: {field} is {got}, expected {expected}")]
    CheckpointMismatch {
        field: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid config: {}", problems.join("; "))]
    ConfigError { problems: Vec<String> },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
