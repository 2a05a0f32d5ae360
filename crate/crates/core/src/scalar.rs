//! Scalar abstraction shared by every numerical module.
//!
//! All kernel math is written once against [`Real`] and instantiated for
//! `f32` and `f64`. Tolerances in the library are stated for `f64`; the
//! [`Real::tol`] helper lifts them to a floor of a few ulps so the same code
//! stays meaningful in single precision.

use std::fmt::{Debug, Display};
use std::iter::{Product, Sum};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point scalar: `f32` or `f64`.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Sum + Product + Display + Debug + Send + Sync + 'static
{
    /// Machine epsilon expressed in `f64`.
    const EPS_F64: f64;

    /// Converts an `f64` literal. Never fails for finite input.
    #[inline]
    fn lit(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite literal")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        <Self as FromPrimitive>::from_usize(v).expect("usize fits a float")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// An `f64` tolerance, floored at 64 ulps of the scalar type.
    #[inline]
    fn tol(v: f64) -> Self {
        Self::lit(v.max(64.0 * Self::EPS_F64))
    }
}

impl Real for f32 {
    const EPS_F64: f64 = f32::EPSILON as f64;
}

impl Real for f64 {
    const EPS_F64: f64 = f64::EPSILON;
}
