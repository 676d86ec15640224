use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar the whole engine is generic over: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Relative residual the linear solvers must reach.
    fn solve_tolerance() -> Self;

    /// Floor applied to the von Mises stress before it is used as a
    /// denominator.
    fn stress_floor() -> Self;
}

impl Scalar for f64 {
    fn solve_tolerance() -> Self {
        1e-10
    }

    fn stress_floor() -> Self {
        1e-30
    }
}

impl Scalar for f32 {
    fn solve_tolerance() -> Self {
        1e-4
    }

    fn stress_floor() -> Self {
        // 1e-30 squared underflows in single precision.
        f32::MIN_POSITIVE.sqrt()
    }
}
