//! Floating-point abstraction for the deterministic numerics.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar usable by the fluid-limit analysis: `f32` or `f64`.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Tolerance appropriate for residual checks: about 10^4 ulps at unit scale.
    #[inline]
    fn residual_tol() -> Self {
        Self::epsilon() * Self::lit(1.0e4)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
