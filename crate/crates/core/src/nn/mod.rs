//! Hand-differentiated network primitives.
//!
//! Layers work on NHWC tensors and expose both batched entry points and
//! per-sample kernels (`*_single`) that accumulate gradients into caller-owned
//! buffers, which is what the model uses to spread a batch over workers.

mod adam;
mod conv;
mod dense;
mod gradcheck;
mod loss;
mod tensor;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use thiserror::Error;

pub use adam::{adam_step, AdamConfig, AdamState, Param};
pub use conv::{Conv2d, ConvGrads};
pub use dense::{Activation, Dense, DenseGrads};
pub use gradcheck::{grad_check, relative_error, GradCheck, GradCheckFailure, GradCheckReport, FD_STEP, REL_ERROR_FLOOR};
pub use loss::{cross_entropy, dropout, dropout_mask, softmax_in_place, DropoutMode, LOG_CLAMP};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("label code {0} outside 0..{1}")]
    Label(usize, usize),
    #[error("non-finite gradient in parameter {0}")]
    NonFiniteGradient(String),
}

/// Scalar type for tensors: `f32` for training, `f64` for gradient checks.
pub trait Real:
    num_traits::Float + Default + Debug + Send + Sync + Sum + AddAssign + SubAssign + MulAssign + 'static
{
    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn of(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Real for f64 {
    fn of(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}
