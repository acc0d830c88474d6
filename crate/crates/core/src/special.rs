//! Bessel functions of the first kind, needed for the separable eigenfunctions
//! `√x·J_ν(j x)` of `-∂ₓₓ - μ/x²` with `ν = √(1/4 - μ)`.

use crate::error::{Error, Result};
use crate::real::Real;

/// `J_ν(x)` by its power series; accurate for moderate `|x|` (≲ 20).
pub fn bessel_j<T: Real>(order: T, x: T) -> T {
    if x == T::zero() {
        return if order == T::zero() { T::one() } else { T::zero() };
    }
    let half = x / T::lit(2.0);
    let gamma = statrs::function::gamma::gamma(order.as_f64() + 1.0);
    let mut term = half.powf(order) / T::lit(gamma);
    let mut sum = term;
    let q = -half * half;
    for m in 1..200 {
        let mf = T::from_usize_lossy(m);
        term = term * q / (mf * (mf + order));
        sum += term;
        if term.abs() <= T::epsilon() * sum.abs() {
            break;
        }
    }
    sum
}

/// First positive zero of `J_ν` for `ν ≥ 0`, bracketed and refined by bisection.
pub fn bessel_j_first_zero<T: Real>(order: T) -> Result<T> {
    if order < T::zero() {
        return Err(Error::Parameter("Bessel order must be non-negative".into()));
    }
    // j_{ν,1} lies in (ν, ν + 2ν^{1/3} + 3) for ν ≥ 0
    let step = T::lit(0.05);
    let mut lo = order.max(T::lit(1e-3));
    let mut f_lo = bessel_j(order, lo);
    let upper = order + T::lit(2.0) * order.cbrt() + T::lit(3.0);
    let mut hi = lo + step;
    loop {
        let f_hi = bessel_j(order, hi);
        if f_hi.signum() != f_lo.signum() {
            break;
        }
        if hi > upper {
            return Err(Error::Solver("no sign change for Bessel zero".into()));
        }
        lo = hi;
        f_lo = f_hi;
        hi = hi + step;
    }
    for _ in 0..200 {
        let mid = (lo + hi) / T::lit(2.0);
        let f_mid = bessel_j(order, mid);
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
        if hi - lo <= T::epsilon() * hi {
            break;
        }
    }
    Ok((lo + hi) / T::lit(2.0))
}
