use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, NumCast, ToPrimitive};

/// Real scalar the numerical core is generic over: `f32` or `f64`.
pub trait Real:
    Float
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
    /// Converts an `f64` literal, rounding to the nearest representable value.
    #[inline]
    fn lit(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("every f64 is representable after rounding")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::lit(n as f64)
    }
}

impl Real for f32 {}
impl Real for f64 {}
