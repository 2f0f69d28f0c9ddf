//! Positional encoding, leaky-ReLU MLPs with exact gradients, and Adam.

mod adam;
mod encoding;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use encoding::{encode_batch, encoded_dim, positional_encoding, DEFAULT_FREQUENCIES};
pub use mlp::{Layer, Mlp, MlpCache, MlpGrads, DEFAULT_SLOPE};

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};
use thiserror::Error;

/// Floating point type the networks run in (`f32` for training, `f64` for
/// gradient checks).
pub trait Scalar:
    Float
    + FromPrimitive
    + LinalgScalar
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("representable literal")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("input width {got} does not match expected {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("activation cache does not belong to this network")]
    CacheMismatch,
    #[error("tensor shapes do not match the optimizer state")]
    ShapeMismatch,
    #[error("non-finite gradient in tensor {tensor}")]
    NonFiniteGradient { tensor: usize },
    #[error("network needs at least one layer")]
    NoLayers,
}
