//! Scalar abstraction. Every numerical module is generic over a floating
//! point type; `f64` is what the experiment harness and CLI instantiate
//! (see [`crate::Real`]).

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point scalar usable throughout the library.
///
/// Random sampling is routed through `f64` internally, so implementors only
/// need the arithmetic surface here, not their own distribution impls.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("f64 -> scalar conversion")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar -> f64 conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Shorthand for `T::from_f64_lossy`, used pervasively for literals.
pub fn cast<T: Scalar>(x: f64) -> T {
    T::from_f64_lossy(x)
}
