//! Scalar abstraction shared by the geometry, beamforming, estimation and
//! learning code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Real floating-point scalar: `f32` or `f64`.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + Sum
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal. Never fails for the two implementors.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn speed_of_light() -> Self {
        Self::lit(SPEED_OF_LIGHT)
    }

    #[inline]
    fn two_pi() -> Self {
        Self::TAU()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// dBm to watts.
pub fn dbm_to_watts<T: Scalar>(dbm: T) -> T {
    T::lit(10.0).powf((dbm - T::lit(30.0)) / T::lit(10.0))
}

/// Watts to dBm.
pub fn watts_to_dbm<T: Scalar>(w: T) -> T {
    T::lit(10.0) * w.log10() + T::lit(30.0)
}
