//! Scalar abstraction shared by the quadrature, basis and sparse containers.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + Debug + Sum + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal. Every supported scalar can represent it (possibly rounded).
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("scalar conversion from f64")
    }

    /// Converts a count or index.
    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("scalar conversion from usize")
    }

    /// Convergence tolerance used by the Newton root finders.
    #[inline]
    fn root_tolerance() -> Self {
        Self::lit(1e-14).max(Self::epsilon() * Self::lit(4.0))
    }
}

impl Real for f32 {}
impl Real for f64 {}
