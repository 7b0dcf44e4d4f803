//! Scalar abstraction shared by the numeric modules.

use nalgebra as na;
use num_traits as nt;

/// Real scalar usable by every generic module (`f32` or `f64`).
pub trait Real: na::RealField + Copy + nt::FromPrimitive + nt::ToPrimitive + nt::FloatConst + Default {}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    na::convert(x)
}

/// Lossy conversion back to `f64`, used for logging and reports.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
