//! Scalar abstraction so the engine can run in f32 (training) or f64
//! (gradient-check builds).

use num_traits::{Float, FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

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
    fn to_f64_lossy(self) -> f64;
}

impl Scalar for f32 {
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn to_f64_lossy(self) -> f64 {
        self
    }
}

/// Shorthand for embedding f64 literals into generic code.
pub fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("literal convertible to scalar type")
}
