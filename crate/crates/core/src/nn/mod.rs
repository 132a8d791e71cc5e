//! Dense tensors with reverse-mode differentiation and adaptive-moment
//! optimizers: just enough to train a small decoder-only transformer.

mod optim;
mod scalar;
mod tape;
mod tensor;

pub use optim::{AdamState, OptimizerConfig, StepOutcome};
pub use scalar::Scalar;
pub use tape::{gelu, log_sum_exp, Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NnError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: unsupported rank for shape {shape:?}")]
    Rank { op: &'static str, shape: Vec<usize> },
    #[error("{op}: index {index} out of range 0..{bound}")]
    Index {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("shape {shape:?} does not match data length {len}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("cannot reshape {from:?} into {to:?}")]
    Reshape { from: Vec<usize>, to: Vec<usize> },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("backward already ran on this tape")]
    AlreadyConsumed,
}

impl NnError {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        NnError::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}
