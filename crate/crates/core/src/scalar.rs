//! Scalar abstraction shared by every numeric module.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display, LowerExp};

/// Floating-point scalar the algorithms are generic over (`f32` or `f64`).
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + LowerExp + Display + Debug + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    /// Lossy conversion back to `f64` for reporting.
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `sin(x)/x` with the removable singularity at zero handled by a Taylor series.
pub fn sinc<T: Real>(x: T) -> T {
    if x.abs() < T::lit(1e-6) {
        let x2 = x * x;
        T::one() - x2 / T::lit(6.0) + x2 * x2 / T::lit(120.0)
    } else {
        x.sin() / x
    }
}

/// Derivative of [`sinc`]: `(cos x - sinc x) / x`, series below `|x| = 1e-3`
/// where the quotient cancels.
pub fn sinc_prime<T: Real>(x: T) -> T {
    if x.abs() < T::lit(1e-3) {
        let x2 = x * x;
        x * (-T::one() / T::lit(3.0) + x2 / T::lit(30.0) - x2 * x2 / T::lit(840.0))
    } else {
        (x.cos() - sinc(x)) / x
    }
}
