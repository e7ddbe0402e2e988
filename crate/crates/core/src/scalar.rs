//! Floating-point scalar abstraction shared by the numeric modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar the schedule, loss, model and data modules are generic over.
///
/// Implemented for `f32` and `f64`. The only operation missing from
/// [`num_traits::Float`] that the toolkit needs is `erf`, used by the exact
/// GELU activation.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + FromStr
    + Send
    + Sync
    + 'static
{
    /// Error function.
    fn erf(self) -> Self;

    /// Converts a literal; every `f64` is representable (possibly rounded).
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar converts to f64")
    }

    /// Tolerance for "sums to one" checks on probability rows of length `k`.
    fn simplex_tolerance(k: usize) -> Self {
        let scaled = Self::epsilon() * Self::from_count(64 * k.max(1));
        scaled.max(Self::lit(1e-9))
    }
}

impl Scalar for f32 {
    #[inline]
    fn erf(self) -> Self {
        libm::erff(self)
    }
}

impl Scalar for f64 {
    #[inline]
    fn erf(self) -> Self {
        libm::erf(self)
    }
}
