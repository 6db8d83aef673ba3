//! Dense-matrix arithmetic with reverse-mode automatic differentiation.
//!
//! Forward operations are recorded on a [`Tape`] (a Wengert list). Every
//! recorded [`Tensor`] is addressed by a [`TensorId`]; parents always precede
//! children, so [`Tape::backward`] is a single reverse sweep.

mod matrix;
mod tape;

pub use matrix::Matrix;
pub use tape::{Elementwise, Reduction, Tape, Tensor, TensorId};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("{op}: incompatible shapes {}x{} and {}x{}", .left.0, .left.1, .right.0, .right.1)]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("buffer of length {len} cannot form a {rows}x{cols} matrix")]
    Length { rows: usize, cols: usize, len: usize },
    #[error("{op}: domain error: {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("backward requires a 1x1 loss, got {}x{}", .0.0, .0.1)]
    NonScalarLoss((usize, usize)),
    #[error("{op}: non-finite value encountered")]
    NonFinite { op: &'static str },
}

impl NumError {
    pub(crate) fn shape(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        NumError::Shape { op, left, right }
    }

    pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Self {
        NumError::Domain {
            op,
            detail: detail.into(),
        }
    }
}
