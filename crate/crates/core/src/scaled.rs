//! Nonnegative reals kept as `mantissa * 2^exp` so that products of many
//! probabilities survive block lengths where a bare `f64` underflows.
//!
//! Rescaling always uses integral powers of two, which are exact in binary
//! floating point, so routing a value through `Scaled` never changes the
//! rounding of the mantissa arithmetic itself.

use std::cmp::Ordering;

use crate::Scalar;

/// A nonnegative value `mantissa * 2^exp`, normalized so that a nonzero
/// mantissa lies in `[1, 2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scaled<S> {
    pub mantissa: S,
    pub exp: i64,
}

impl<S: Scalar> Scaled<S> {
    pub fn zero() -> Self {
        Scaled { mantissa: S::zero(), exp: 0 }
    }

    pub fn one() -> Self {
        Scaled { mantissa: S::one(), exp: 0 }
    }

    /// Builds from a plain value, normalizing the mantissa into `[1, 2)`.
    pub fn from_value(v: S) -> Self {
        Scaled { mantissa: v, exp: 0 }.normalized()
    }

    /// Builds from a value together with an extra binary exponent.
    pub fn from_parts(mantissa: S, exp: i64) -> Self {
        Scaled { mantissa, exp }.normalized()
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa == S::zero()
    }

    pub fn normalized(self) -> Self {
        if self.mantissa == S::zero() {
            return Self::zero();
        }
        let e = self.mantissa.abs().log2().floor();
        let shift = e.to_i64().expect("finite exponent");
        if shift == 0 {
            return self;
        }
        Scaled {
            mantissa: scale_value_exp2(self.mantissa, -shift),
            exp: self.exp + shift,
        }
    }

    pub fn mul(self, other: Self) -> Self {
        Scaled {
            mantissa: self.mantissa * other.mantissa,
            exp: self.exp + other.exp,
        }
        .normalized()
    }

    pub fn mul_value(self, v: S) -> Self {
        Scaled { mantissa: self.mantissa * v, exp: self.exp }.normalized()
    }

    /// Collapses to a plain value; underflows to zero / overflows to
    /// infinity outside the representable exponent range.
    pub fn to_value(&self) -> S {
        if self.is_zero() {
            return S::zero();
        }
        self.mantissa * S::exp2(S::from_f64_lossy(self.exp as f64))
    }

    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        self.mantissa.to_f64().unwrap() * (self.exp as f64).exp2()
    }

    /// Ratio `self / other` as a plain value; `other` must be nonzero.
    pub fn ratio(&self, other: &Self) -> S {
        assert!(!other.is_zero(), "ratio against zero");
        if self.is_zero() {
            return S::zero();
        }
        let m = self.mantissa / other.mantissa;
        m * S::exp2(S::from_f64_lossy((self.exp - other.exp) as f64))
    }
}

/// Multiplies a value by `2^shift` in steps small enough that every factor
/// stays finite, so subnormal magnitudes rescale exactly instead of hitting
/// `0 * inf`.
pub fn scale_value_exp2<S: Scalar>(mut v: S, shift: i64) -> S {
    let mut rem = shift;
    while rem != 0 {
        let step = rem.clamp(-60, 60);
        v = v * S::exp2(S::from_f64_lossy(step as f64));
        rem -= step;
    }
    v
}

/// Multiplies every slice entry by `2^shift`, stepping as in
/// [`scale_value_exp2`].
pub fn scale_slice_exp2<S: Scalar>(values: &mut [S], shift: i64) {
    let mut rem = shift;
    while rem != 0 {
        let step = rem.clamp(-60, 60);
        let f = S::exp2(S::from_f64_lossy(step as f64));
        for v in values.iter_mut() {
            *v = *v * f;
        }
        rem -= step;
    }
}

impl<S: Scalar> PartialOrd for Scaled<S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self.is_zero(), other.is_zero()) {
            (true, true) => Some(Ordering::Equal),
            (true, false) => Some(Ordering::Less),
            (false, true) => Some(Ordering::Greater),
            (false, false) => {
                // Normalized mantissas live in [1, 2), so the exponent
                // dominates and the mantissa breaks ties.
                match self.exp.cmp(&other.exp) {
                    Ordering::Equal => self.mantissa.partial_cmp(&other.mantissa),
                    ord => Some(ord),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_keeps_value() {
        let s = Scaled::from_value(0.375f64);
        assert!(s.mantissa >= 1.0 && s.mantissa < 2.0);
        assert_eq!(s.to_value(), 0.375);
    }

    #[test]
    fn products_of_tiny_values_survive() {
        let mut acc = Scaled::one();
        for _ in 0..5000 {
            acc = acc.mul_value(1e-3f64);
        }
        // 1e-15000 underflows f64; the scaled form keeps the exponent.
        assert!(!acc.is_zero());
        assert!(acc.exp < -40_000);
        assert_eq!(acc.to_f64(), 0.0);
    }

    #[test]
    fn ordering_follows_value() {
        let a = Scaled::from_value(3e-200f64).mul(Scaled::from_value(1e-200));
        let b = Scaled::from_value(2e-200f64).mul(Scaled::from_value(1e-200));
        assert!(a > b);
        assert!(Scaled::<f64>::zero() < b);
        let r = a.ratio(&b);
        assert!((r - 1.5).abs() < 1e-12);
    }
}
