//! Floating-point abstraction shared by every learnable component.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float as NumFloat, FromPrimitive, ToPrimitive};

/// Scalar type a model can be instantiated over: `f32` for training and
/// synthesis, `f64` for gradient verification.
pub trait Float:
    NumFloat
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite conversion")
    }

    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    fn to_f32_lossy(self) -> f32 {
        ToPrimitive::to_f32(&self).unwrap_or(f32::NAN)
    }

    fn from_f32_lossy(v: f32) -> Self {
        Self::from_f64_lossy(v as f64)
    }
}

impl Float for f32 {}
impl Float for f64 {}

/// Shorthand for a constant in the generic scalar type.
#[inline]
pub fn c<T: Float>(v: f64) -> T {
    T::from_f64_lossy(v)
}
