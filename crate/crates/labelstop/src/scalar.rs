//! Scalar abstraction: every numeric computation in this crate is generic
//! over the floating-point type.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumCast};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point scalar: f32 or f64.
pub trait Scalar:
    Float
    + FromPrimitive
    + NumCast
    + Sum
    + FromStr
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Cast an `f64` constant into the scalar type.
///
/// Panics if the value is not representable, which cannot happen for the
/// in-crate uses (all constants are small dyadic or decimal literals).
#[inline]
pub fn cast<F: Scalar>(v: f64) -> F {
    F::from(v).expect("f64 constant representable in scalar type")
}

/// Cast a `usize` (step counter, grid size) into the scalar type.
#[inline]
pub fn cast_usize<F: Scalar>(v: usize) -> F {
    F::from(v).expect("usize value representable in scalar type")
}
