use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar the numerical kernels are generic over (`f32` or `f64`).
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
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }

    /// Converts degrees to radians.
    #[inline]
    fn deg2rad(self) -> Self {
        self * Self::PI() / Self::lit(180.0)
    }

    #[inline]
    fn rad2deg(self) -> Self {
        self * Self::lit(180.0) / Self::PI()
    }
}

impl Real for f32 {}
impl Real for f64 {}
