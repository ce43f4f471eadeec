//! Dense `f64` tensors with reverse-mode automatic differentiation.

pub mod fft;
pub mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{gradient_check, GradCheckReport, LeafReport};
pub use tape::{gelu, gelu_derivative, Binary, Tape, Unary, Var, LAYER_NORM_EPS};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: invalid shape {shape:?} ({reason})")]
    InvalidShape {
        op: &'static str,
        shape: Vec<usize>,
        reason: &'static str,
    },
    #[error("backward needs a single-element root, got shape {shape:?}")]
    NonScalarRoot { shape: Vec<usize> },
}
