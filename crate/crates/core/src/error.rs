use alloc::string::String;

/// Errors raised by the engine.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch at node {node} ({op}): {detail}")]
    ShapeMismatch {
        node: usize,
        op: &'static str,
        detail: String,
    },
    #[error("input `{0}` is not bound")]
    UnboundInput(String),
    #[error("backward requires a scalar output, got shape {0:?}")]
    NonScalarOutput(alloc::vec::Vec<usize>),
    #[error("node {0} has not been evaluated")]
    NotEvaluated(usize),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid layer {layer}: {detail}")]
    InvalidLayer { layer: usize, detail: String },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("empty input: {0}")]
    Empty(String),
    #[error("class `{class}` has {count} samples, need at least {required}")]
    ClassTooSmall {
        class: String,
        count: usize,
        required: usize,
    },
}

pub type Result<T> = core::result::Result<T, Error>;
