//! Scalar abstraction shared by every numerical module.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar the solvers are generic over. Implemented for `f32` and `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Never fails for finite input.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("representable count")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `ln` of the smallest positive normal value; the span of log-weights that
    /// survive exponentiation after normalization.
    #[inline]
    fn log_min_positive() -> Self {
        Self::min_positive_value().ln()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Numerically stable `ln(Σ exp(xᵢ))`. Returns `-∞` for an empty or all-`-∞` input.
pub fn log_sum_exp<T: Real>(logs: impl IntoIterator<Item = T>) -> T {
    let logs: Vec<T> = logs.into_iter().collect();
    let max = logs.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    if max == T::infinity() {
        return max;
    }
    let acc: T = logs.iter().map(|&l| (l - max).exp()).sum();
    max + acc.ln()
}

/// Running log-sum-exp accumulator, used where materializing all terms would be wasteful.
#[derive(Clone, Copy, Debug)]
pub struct LogAccumulator<T> {
    max: T,
    scaled: T,
}

impl<T: Real> Default for LogAccumulator<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> LogAccumulator<T> {
    pub fn new() -> Self {
        Self {
            max: T::neg_infinity(),
            scaled: T::zero(),
        }
    }

    pub fn push(&mut self, log_term: T) {
        if log_term == T::neg_infinity() || log_term.is_nan() {
            return;
        }
        if log_term <= self.max {
            self.scaled += (log_term - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - log_term).exp() + T::one();
            self.max = log_term;
        }
    }

    /// Adds `ln(value) + log_weight` for `value ≥ 0`.
    pub fn push_weighted(&mut self, value: T, log_weight: T) {
        if value > T::zero() {
            self.push(value.ln() + log_weight);
        }
    }

    pub fn merge(&mut self, other: &Self) {
        if other.max == T::neg_infinity() {
            return;
        }
        self.push(other.value());
    }

    /// Log of the accumulated sum (`-∞` when empty).
    pub fn value(&self) -> T {
        if self.max == T::neg_infinity() {
            T::neg_infinity()
        } else {
            self.max + self.scaled.ln()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_matches_direct_sum() {
        let xs = [0.1_f64, -2.0, 3.5];
        let direct: f64 = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(xs) - direct).abs() < 1e-14);
    }

    #[test]
    fn accumulator_handles_huge_exponents() {
        let mut acc = LogAccumulator::<f64>::new();
        acc.push(-50_000.0);
        acc.push(-50_000.0);
        assert!((acc.value() - (-50_000.0 + 2f64.ln())).abs() < 1e-9);
        let mut empty = LogAccumulator::<f64>::new();
        empty.push_weighted(0.0, 3.0);
        assert_eq!(empty.value(), f64::NEG_INFINITY);
    }

    #[test]
    fn accumulator_merge() {
        let mut a = LogAccumulator::<f32>::new();
        a.push(1.0);
        let mut b = LogAccumulator::<f32>::new();
        b.push(1.0);
        a.merge(&b);
        assert!((a.value() - (1.0 + 2f32.ln())).abs() < 1e-6);
    }
}
