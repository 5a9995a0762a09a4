//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar the library is generic over (`f32` or `f64`).
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Smallest tolerance worth asking for in this precision.
    fn tolerance_floor() -> Self {
        Self::epsilon() * lit(64.0)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

/// Converts a count into the working scalar.
#[inline]
pub fn from_usize<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}

/// Lossy conversion used at serialization boundaries.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Clamps a requested tolerance to what the precision can deliver.
#[inline]
pub fn achievable<T: Real>(requested: T) -> T {
    requested.max(T::tolerance_floor())
}
