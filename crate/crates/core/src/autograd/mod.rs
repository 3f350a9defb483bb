//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] records every operation as it executes. Gradients are
//! computed by replaying the record backwards, and the replay itself is
//! recorded, which is what lets the regularizers differentiate through a
//! gradient norm.

mod gradcheck;
pub mod suite;
mod graph;
pub mod kernels;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{Graph, Var};
pub use kernels::Resample;
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutogradError {
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("graph already consumed by a previous backward pass")]
    Consumed,
    #[error("backward on an empty graph")]
    EmptyGraph,
    #[error("non-finite value while checking coordinate {coordinate}")]
    NonFinite { coordinate: usize },
    #[error("finite-difference step must be positive, got {0}")]
    BadStep(f64),
}
