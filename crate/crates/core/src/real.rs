//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar the analytic and simulation code is generic over.
///
/// Implemented for `f32` and `f64`. The extra `erfc` hook exists because
/// `num_traits::Float` has no error function.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Complementary error function.
    fn erfc(self) -> Self;

    /// Converts an `f64` literal; panics only for values the type cannot hold.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    /// Lossy view as `f64`, used when handing values to samplers and reports.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Standard normal cumulative distribution function.
    #[inline]
    fn norm_cdf(self) -> Self {
        Self::lit(0.5) * (-self / Self::SQRT_2()).erfc()
    }

    /// Standard normal density.
    #[inline]
    fn norm_pdf(self) -> Self {
        (-(self * self) / Self::lit(2.0)).exp() / (Self::TAU()).sqrt()
    }
}

impl Real for f32 {
    #[inline]
    fn erfc(self) -> Self {
        libm::erfcf(self)
    }
}

impl Real for f64 {
    #[inline]
    fn erfc(self) -> Self {
        libm::erfc(self)
    }
}

/// `Φ(b) - Φ(a)` for `a <= b`, evaluated through whichever tail keeps
/// precision when both arguments sit far out on the same side.
pub fn norm_interval<T: Real>(a: T, b: T) -> T {
    let half = T::lit(0.5);
    if a >= T::zero() {
        half * ((a / T::SQRT_2()).erfc() - (b / T::SQRT_2()).erfc())
    } else if b <= T::zero() {
        half * ((-b / T::SQRT_2()).erfc() - (-a / T::SQRT_2()).erfc())
    } else {
        b.norm_cdf() - a.norm_cdf()
    }
}
