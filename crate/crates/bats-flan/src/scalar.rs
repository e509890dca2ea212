//! Floating-point abstraction used by all analysis kernels.
//!
//! Every probability recursion in this crate is generic over [`Scalar`] so the
//! same code runs in `f32` or `f64`. The concrete tolerances differ per type:
//! `f64` carries the tight validation bounds the analyses are specified with,
//! `f32` gets correspondingly looser ones.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Scalar type for probability computations.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum<Self>
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Tolerance for validating that probability vectors sum to one.
    fn prob_tol() -> Self;

    /// Positive underflow clamp for running-remainder denominators.
    fn tiny() -> Self;

    /// Lossy conversion from `f64`; panics only for non-finite inputs that the
    /// target type cannot represent.
    fn from_f(v: f64) -> Self {
        Self::from_f64(v).expect("f64 not representable in scalar type")
    }

    /// Conversion from a count.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count not representable in scalar type")
    }
}

impl Scalar for f64 {
    fn prob_tol() -> Self {
        1e-12
    }

    fn tiny() -> Self {
        1e-300
    }
}

impl Scalar for f32 {
    fn prob_tol() -> Self {
        1e-5
    }

    fn tiny() -> Self {
        1e-30
    }
}

/// Compensated (Kahan) accumulator for long sums of small masses.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum<S: Scalar> {
    sum: S,
    carry: S,
}

impl<S: Scalar> KahanSum<S> {
    pub fn new() -> Self {
        Self {
            sum: S::zero(),
            carry: S::zero(),
        }
    }

    pub fn add(&mut self, value: S) {
        let y = value - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> S {
        self.sum
    }
}

impl<S: Scalar> FromIterator<S> for KahanSum<S> {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut acc = Self::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_beats_naive_on_tiny_masses() {
        let n = 10_000_000usize;
        let x = 1e-10f64;
        let mut acc = KahanSum::new();
        for _ in 0..n {
            acc.add(x);
        }
        let exact = x * n as f64;
        assert!((acc.value() - exact).abs() < 1e-18);
    }

    #[test]
    fn scalar_conversions() {
        assert_eq!(<f64 as Scalar>::from_count(42), 42.0);
        assert_eq!(<f32 as Scalar>::from_f(0.5), 0.5f32);
    }
}
