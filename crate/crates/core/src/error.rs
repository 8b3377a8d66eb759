use alloc::string::String;
use alloc::vec::Vec;

/// Failures raised by tensor operations and the autodiff graph.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: invalid shape {shape:?}: {reason}")]
    InvalidShape {
        op: &'static str,
        shape: Vec<usize>,
        reason: String,
    },
    #[error("{op}: value {value} outside the operation's domain")]
    Domain { op: &'static str, value: f64 },
    #[error("backward() called on a graph that was already consumed")]
    GraphConsumed,
    #[error("backward() needs a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("config error: {0}")]
    Config(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("non-finite gradient in `{param}` (seed {seed}, epoch {epoch}, batch {batch})")]
    NonFinite {
        param: String,
        seed: u64,
        epoch: usize,
        batch: usize,
    },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
