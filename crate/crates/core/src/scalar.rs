//! Scalar abstraction shared by the numeric parts of the crate.
//!
//! The eigengesture model and the robot simulator are written against
//! [`Scalar`] so they run in either `f32` or `f64`. Image and protocol code
//! stays integer-only.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real number type usable by the PCA core and the simulator.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`. Never fails for finite inputs.
    fn of(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(Self::nan)
    }

    /// Conversion to `f64`, used for serialization.
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions() {
        assert_eq!(<f32 as Scalar>::of(2.5), 2.5f32);
        assert_eq!(2.5f32.as_f64(), 2.5);
        assert_eq!(<f64 as Scalar>::of(-1.25).as_f64(), -1.25);
    }
}
