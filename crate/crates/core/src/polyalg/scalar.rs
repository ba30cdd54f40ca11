use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, Signed, ToPrimitive, Zero};

/// Coefficient field for polynomials and tensors.
///
/// Exact algebra runs over [`BigRational`]; norm and quadrature paths over `f64`.
pub trait Scalar: Num + Clone + PartialEq + Debug + Send + Sync + 'static {
    fn from_i64(v: i64) -> Self;

    fn from_u128(v: u128) -> Self;

    fn ratio(num: i64, den: i64) -> Self {
        Self::from_i64(num) / Self::from_i64(den)
    }

    fn to_f64(&self) -> f64;

    /// Magnitude used to choose pivots; exactness is not required.
    fn magnitude(&self) -> f64 {
        self.to_f64().abs()
    }

    /// Whether this type represents values exactly.
    const EXACT: bool;
}

impl Scalar for f64 {
    fn from_i64(v: i64) -> Self {
        v as f64
    }

    fn from_u128(v: u128) -> Self {
        v as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    const EXACT: bool = false;
}

impl Scalar for BigRational {
    fn from_i64(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }

    fn from_u128(v: u128) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }

    fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        match (self.numer().to_f64(), self.denom().to_f64()) {
            (Some(n), Some(d)) if n.is_finite() && d.is_finite() => n / d,
            _ => {
                // Scale down huge numerators/denominators before converting.
                let shift = self.numer().bits().max(self.denom().bits()) as i64 - 900;
                let (n, d) = if shift > 0 {
                    (
                        self.numer() >> shift as usize,
                        self.denom() >> shift as usize,
                    )
                } else {
                    (self.numer().clone(), self.denom().clone())
                };
                let v = n.to_f64().unwrap_or(0.0) / d.to_f64().unwrap_or(f64::INFINITY);
                if self.is_negative() && v > 0.0 {
                    -v
                } else {
                    v
                }
            }
        }
    }

    const EXACT: bool = true;
}

/// Closest rational to a float with denominator `2^k`; exact for dyadic inputs.
pub fn rational_from_f64(v: f64) -> Option<BigRational> {
    BigRational::from_float(v)
}
