//! Dense tensors, a tensor-level gradient tape, and a finite-difference oracle.

mod gradcheck;
mod tape;
mod tensor;

use thiserror::Error;

pub use gradcheck::{finite_diff_check, GradCheckConfig, GradCheckReport};
pub use tape::{Gradients, ParamId, Tape, Var};
pub use tensor::{Tensor, MASK_SENTINEL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("invalid tensor shape {shape:?}")]
    InvalidShape { shape: Vec<usize> },
    #[error("tensor data length {actual} does not match shape volume {expected}")]
    DataLength { expected: usize, actual: usize },
    #[error("rows have different lengths")]
    RaggedRows,
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: index {index} out of range (bound {bound})")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("{0}: no inputs")]
    EmptyInput(&'static str),
    #[error("row {row} is fully masked")]
    DegenerateRow { row: usize },
    #[error("loss must be a scalar, got shape {shape:?}")]
    NotScalarLoss { shape: Vec<usize> },
    #[error("{0} was never registered on the tape")]
    UnregisteredParameter(ParamId),
    #[error("{0} registered twice")]
    DuplicateParameter(ParamId),
    #[error("function is not deterministic: {first} then {second}")]
    NonDeterministicFunction { first: f64, second: f64 },
}
