//! Scalar abstraction shared by the geometric and loss modules.
//!
//! Everything in [`crate::geometry`], [`crate::lanes`], [`crate::stps`],
//! [`crate::ntps`] and [`crate::losses`] is written against [`Scalar`], so the
//! same code runs in `f32` and `f64`. The simulator and file formats are
//! `f64`-only.

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Every supported scalar can represent (a
    /// rounding of) any finite `f64`, so this never fails.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle<T: Scalar>(angle: T) -> T {
    let pi = T::PI();
    if angle > -pi && angle <= pi {
        return angle;
    }
    let two_pi = pi + pi;
    let mut a = angle % two_pi;
    if a <= -pi {
        a += two_pi;
    } else if a > pi {
        a -= two_pi;
    }
    a
}
