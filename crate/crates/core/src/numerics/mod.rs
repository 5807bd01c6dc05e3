//! Dense 64-bit arrays, a reverse-mode tape and first-order optimizers.
//!
//! All differentiable operations work on rank-2 arrays; a vector is a
//! `[1, n]` row and a scalar is `[1, 1]`.

mod array;
mod checkpoint;
pub mod gradcheck;
mod store;
mod tape;

pub use array::NdArray;
pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_HEADER};
pub use store::{Gradients, Optimizer, ParamId, ParameterStore};
pub use tape::{Axis, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: expected a rank-2 array, got shape {shape:?}")]
    Rank { op: &'static str, shape: Vec<usize> },
    #[error("{op}: non-finite value")]
    NonFinite { op: &'static str },
    #[error("{op}: index {index} out of range for extent {extent}")]
    Index {
        op: &'static str,
        index: usize,
        extent: usize,
    },
    #[error("{op}: needs at least one input")]
    Empty { op: &'static str },
    #[error("backward: loss must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("variable {0} was not recorded on this tape")]
    Unrecorded(usize),
    #[error("parameter `{0}` already registered")]
    DuplicateParameter(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("checkpoint line {line}: {msg}")]
    Checkpoint { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NumericsError>;
