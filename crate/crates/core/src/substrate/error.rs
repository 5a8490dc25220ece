use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SubstrateError {
    #[error("{op}: dimension mismatch between {left:?} and {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{0}: empty input")]
    Empty(&'static str),
    #[error("{op}: index {index} out of range for length {len}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("tensor shape {shape:?} does not match {len} values")]
    BadShape { shape: Vec<usize>, len: usize },
    #[error("graph was already backpropagated; run a new forward pass first")]
    AlreadyBackpropagated,
    #[error("backward needs a scalar loss, got {0} values")]
    NotScalar(usize),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("duplicate parameter name '{0}'")]
    DuplicateParameter(String),
    #[error("unknown parameter '{0}'")]
    UnknownParameter(String),
}
