//! Floating-point abstraction shared by every numeric module.
//!
//! All math in this crate is written against [`Scalar`] so that the same
//! networks, losses and special functions run in `f32` or `f64`. Constants
//! are written as `f64` literals and narrowed with [`Scalar::lit`].

use num_traits::{Float, FloatConst, NumAssign};
use std::fmt::{Debug, Display};
use std::iter::Sum;

pub trait Scalar: Float + FloatConst + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static {
    /// Converts an `f64` literal into this type (rounding to nearest).
    fn lit(x: f64) -> Self;

    /// Widens to `f64`; used for serialization and reporting.
    fn as_f64(self) -> f64;

    /// Drops the low half of the significand. The error function uses this to
    /// split `x*x` into an exactly representable head and a small tail.
    fn truncate_low_bits(self) -> Self;
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
    fn truncate_low_bits(self) -> Self {
        f64::from_bits(self.to_bits() & 0xffff_ffff_0000_0000)
    }
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
    fn truncate_low_bits(self) -> Self {
        f32::from_bits(self.to_bits() & 0xffff_f000)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation_keeps_square_exact() {
        let x = 1.234_567_890_123_456_f64;
        let z = x.truncate_low_bits();
        assert!((x - z).abs() < 1e-6);
        // 21 significant bits squared fits in 53, so the fma residual vanishes
        assert_eq!(z.mul_add(z, -(z * z)), 0.0);
        assert_ne!(x.mul_add(x, -(x * x)), 0.0);
        let xf = 1.234_567_8_f32;
        assert!((xf - xf.truncate_low_bits()).abs() < 1e-3);
    }

    #[test]
    fn literal_roundtrip() {
        assert_eq!(<f64 as Scalar>::lit(0.1), 0.1);
        assert_eq!(<f32 as Scalar>::lit(0.1), 0.1_f32);
        assert_eq!(0.5_f32.as_f64(), 0.5);
    }
}
