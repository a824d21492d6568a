//! Dense reverse-mode differentiation with Adam and a warmup schedule.
//!
//! Graphs are define-by-run: a fresh [`Tape`] per batch, ops evaluate
//! eagerly, and [`Tape::backward`] returns gradients for every node.

mod gradcheck;
mod optim;
mod tape;
mod tensor;

pub use gradcheck::gradient_check;
pub use optim::{adam_step, warmup_linear_lr, AdamState};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{Scalar, Tensor};

pub(crate) use tape::sigmoid;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("loss must have exactly one element, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("index {index} out of range for table of {size} rows")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("value out of range: {0}")]
    OutOfRange(String),
}
