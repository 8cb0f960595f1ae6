use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar the tests are computed in.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal (coefficients, thresholds) into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        // Float types accept every finite f64 (possibly rounded).
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }
}

impl<T> Scalar for T where
    T: Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
}
