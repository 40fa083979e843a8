//! Scalar abstraction shared by the geometric parts of the crate.
//!
//! Mesh storage, rigid motions, forward kinematics and skinning are generic
//! over [`Scalar`] so that `f32` assets can be deformed without a round trip
//! through `f64`. The spectral pipeline (eigensolver, functional maps,
//! regressor optimization) always runs in `f64`; inputs are widened with
//! [`Scalar::as_f64`] on entry.

use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

pub trait Scalar:
    RealField + Copy + FromPrimitive + ToPrimitive + Default + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self;

    fn as_f64(self) -> f64;

    /// Machine epsilon of the underlying representation.
    fn eps() -> Self;
}

impl Scalar for f32 {
    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn eps() -> Self {
        f32::EPSILON
    }
}

impl Scalar for f64 {
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    #[inline]
    fn eps() -> Self {
        f64::EPSILON
    }
}

/// Converts a fixed-size triple between scalar types.
#[inline]
pub fn cast3<T: Scalar, U: Scalar>(v: [T; 3]) -> [U; 3] {
    [U::lit(v[0].as_f64()), U::lit(v[1].as_f64()), U::lit(v[2].as_f64())]
}
