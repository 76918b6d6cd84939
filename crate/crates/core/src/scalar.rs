//! Scalar abstraction shared by the numeric kernels.
//!
//! The geometry, association, existence and smoothing kernels are written
//! against [`Real`] so they run in `f32` or `f64`. The orchestrator,
//! simulator and evaluation harness are concrete `f64`.

use nalgebra::RealField;
use num_traits::ToPrimitive;

/// Floating-point scalar usable by every kernel in this crate.
pub trait Real: RealField + Copy + ToPrimitive {}

impl<T: RealField + Copy + ToPrimitive> Real for T {}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    nalgebra::convert(x)
}

/// Lossy conversion back to `f64` (used at I/O and statistics boundaries).
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
