use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point element type used by every model and metric in the crate.
///
/// Implemented for `f32` (fast training) and `f64` (gradient checks, metric
/// oracles).
pub trait Scalar:
    Float
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
    /// Width in bytes of the little-endian storage encoding.
    const BYTES: usize;

    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).unwrap_or_else(Self::infinity)
    }

    fn write_le(self, out: &mut Vec<u8>);

    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const BYTES: usize = 4;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().expect("4 bytes"))
    }
}

impl Scalar for f64 {
    const BYTES: usize = 8;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
    }
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Gaussian error linear unit using the exact erf form.
pub fn gelu<T: Scalar>(x: T) -> T {
    let v = x.as_f64();
    T::lit(0.5 * v * (1.0 + libm::erf(v / std::f64::consts::SQRT_2)))
}

pub fn gelu_grad<T: Scalar>(x: T) -> T {
    let v = x.as_f64();
    let cdf = 0.5 * (1.0 + libm::erf(v / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * v * v).exp() / (2.0 * std::f64::consts::PI).sqrt();
    T::lit(cdf + v * pdf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_is_stable_at_extremes() {
        assert!((softplus(1000.0_f64) - 1000.0).abs() < 1e-12);
        assert!(softplus(-1000.0_f64) >= 0.0);
        assert!((softplus(0.0_f64) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn gelu_grad_matches_central_difference() {
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8, "x = {x}");
        }
    }

    #[test]
    fn byte_round_trip() {
        let mut buf = Vec::new();
        1.25_f32.write_le(&mut buf);
        (-3.5_f64).write_le(&mut buf);
        assert_eq!(f32::read_le(&buf[..4]), 1.25);
        assert_eq!(f64::read_le(&buf[4..]), -3.5);
    }
}
