//! Minimal reverse-mode automatic differentiation for the pulse models.
//!
//! Values are stored as `f64`; model parameters live as `f32` outside the tape
//! and are widened when bound. A [`Tape`] records every operation in execution
//! order, and [`Tape::backward`] walks it in reverse.

mod adam;
pub mod check;
mod conv;
mod tape;
mod tensor;

pub use adam::{AdamState, Real};
pub use tape::{CustomOp, Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

/// Negative slope of the leaky ReLU used throughout the models.
pub const LEAKY_SLOPE: f64 = 0.01;
/// Momentum for batch-norm running statistics.
pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("loss must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("domain error: {0}")]
    Domain(String),
}
