//! Minimal reverse-mode differentiation over dense real tensors.
//!
//! A [`Tape`] records forward operations in insertion order; [`Tape::backward`]
//! walks the record in reverse and accumulates exact gradients of a scalar
//! loss with respect to every node that asked for them. The op set is exactly
//! what the classifier and the transfer objective need; there is no
//! broadcasting beyond scalar-node broadcast, no views, no higher-order
//! derivatives.

mod gradcheck;
mod ops;
mod tape;
mod tensor;


pub use gradcheck::{grad_check, GradCheckReport};
pub use tape::{Gradients, NodeId, Tape};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid input to {op}: {detail}")]
    InvalidInput { op: &'static str, detail: String },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("non-finite gradient flowing into {op}")]
    NonFiniteGradient { op: &'static str },
}

pub type Result<T> = std::result::Result<T, AutodiffError>;
