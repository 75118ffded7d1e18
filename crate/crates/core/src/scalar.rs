//! Floating-point abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FloatConst, FromPrimitive, NumAssignOps, ToPrimitive};

/// Real scalar usable by the simulators, the signature kernels and the
/// network layers. Implemented for `f32` and `f64`.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; never fails for finite inputs.
    #[inline]
    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 is representable")
    }

    /// Lossy conversion from a count.
    #[inline]
    fn of_usize(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("usize is representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
