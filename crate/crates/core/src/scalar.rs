//! Floating-point scalar abstraction shared by the model and the metrics.

use std::fmt::{Debug, Display};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign};

/// Real scalar used for model parameters, activations and metric arithmetic.
///
/// Implemented for `f32` and `f64`. The finite-difference checks run on `f64`;
/// training defaults to `f32`.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + LinalgScalar + ScalarOperand + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossless widening used for serialization. Narrowing back through
    /// [`Scalar::from_f64_lossy`] restores the original value bit for bit.
    fn to_f64_exact(self) -> f64;

    fn from_f64_lossy(v: f64) -> Self;

    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64_lossy(v)
    }
}

impl Scalar for f32 {
    #[inline]
    fn to_f64_exact(self) -> f64 {
        self as f64
    }

    #[inline]
    fn from_f64_lossy(v: f64) -> Self {
        v as f32
    }
}

impl Scalar for f64 {
    #[inline]
    fn to_f64_exact(self) -> f64 {
        self
    }

    #[inline]
    fn from_f64_lossy(v: f64) -> Self {
        v
    }
}
