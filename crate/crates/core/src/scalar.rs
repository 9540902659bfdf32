//! Scalar abstractions.
//!
//! Exact quantities (kernel weights, boundary ratios, finite chains) are
//! computed over any [`Scalar`], which includes [`crate::Rational`]. Everything
//! that needs transcendental functions or iterative solvers is generic over
//! [`Real`] (`f32` or `f64`).

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_rational::Ratio;
use num_traits::{Float, FromPrimitive, Num, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::Rational;

/// A number type closed under field operations that can absorb exact kernel
/// weights.
pub trait Scalar: Num + Clone + PartialOrd + Debug + Send + Sync + 'static {
    fn from_rational(r: &Rational) -> Self;
    fn as_f64(&self) -> f64;
    fn from_usize(n: usize) -> Self;
}

impl Scalar for f64 {
    fn from_rational(r: &Rational) -> Self {
        *r.numer() as f64 / *r.denom() as f64
    }
    fn as_f64(&self) -> f64 {
        *self
    }
    fn from_usize(n: usize) -> Self {
        n as f64
    }
}

impl Scalar for f32 {
    fn from_rational(r: &Rational) -> Self {
        (*r.numer() as f64 / *r.denom() as f64) as f32
    }
    fn as_f64(&self) -> f64 {
        *self as f64
    }
    fn from_usize(n: usize) -> Self {
        n as f32
    }
}

impl Scalar for Ratio<i64> {
    fn from_rational(r: &Rational) -> Self {
        *r
    }
    fn as_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn from_usize(n: usize) -> Self {
        Ratio::from_integer(n as i64)
    }
}

/// Floating point scalars used by the iterative numerics.
pub trait Real: Scalar + Float + FromPrimitive + Sum + Display + LowerExp + Default + Copy {
    /// Convert an `f64` literal. Infallible for both supported widths.
    fn c(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).unwrap()
    }
    /// Tolerance at which "exact" floating statements are asserted.
    fn exact_tol() -> Self;
}

impl Real for f64 {
    fn exact_tol() -> Self {
        1e-12
    }
}

impl Real for f32 {
    fn exact_tol() -> Self {
        1e-5
    }
}

/// Neumaier-compensated accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum<S> {
    sum: S,
    comp: S,
}

impl<S: Real> CompensatedSum<S> {
    pub fn new() -> Self {
        Self {
            sum: S::zero(),
            comp: S::zero(),
        }
    }

    pub fn add(&mut self, x: S) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp = self.comp + ((self.sum - t) + x);
        } else {
            self.comp = self.comp + ((x - t) + self.sum);
        }
        self.sum = t;
    }

    pub fn value(&self) -> S {
        self.sum + self.comp
    }
}

pub fn compensated_sum<S: Real, I: IntoIterator<Item = S>>(it: I) -> S {
    let mut acc = CompensatedSum::new();
    for x in it {
        acc.add(x);
    }
    acc.value()
}

/// A closed interval `[lo, hi]` known to contain a true value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval<S> {
    pub lo: S,
    pub hi: S,
}

impl<S: Real> Interval<S> {
    pub fn new(lo: S, hi: S) -> Self {
        Self { lo, hi }
    }
    pub fn point(x: S) -> Self {
        Self { lo: x, hi: x }
    }
    pub fn width(&self) -> S {
        self.hi - self.lo
    }
    pub fn mid(&self) -> S {
        (self.lo + self.hi) / S::c(2.0)
    }
    pub fn contains(&self, x: S) -> bool {
        self.lo <= x && x <= self.hi
    }
    pub fn intersects(&self, other: &Interval<S>) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

/// Format a float with 17 significant digits.
pub fn fmt_sig17(x: f64) -> String {
    if x == 0.0 {
        return "0.0000000000000000e0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_beats_naive() {
        let xs: Vec<f64> = std::iter::once(1.0)
            .chain(std::iter::repeat(1e-16).take(10_000))
            .collect();
        let naive: f64 = xs.iter().sum();
        let comp = compensated_sum(xs.iter().copied());
        assert_eq!(naive, 1.0);
        assert!((comp - (1.0 + 1e-12)).abs() < 1e-18);
    }

    #[test]
    fn rational_roundtrip() {
        let r = Rational::new(1, 3);
        assert_eq!(<Rational as Scalar>::from_rational(&r), r);
        assert!((<f64 as Scalar>::from_rational(&r) - 1.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn sig17_formatting() {
        assert_eq!(fmt_sig17(0.5), "5.0000000000000000e-1");
        assert_eq!(fmt_sig17(1.0 / 3.0).len(), "3.3333333333333331e-1".len());
    }
}
