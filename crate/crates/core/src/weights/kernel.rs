use super::WeightParams;
use crate::discretization::SpaceTimeGrid;
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelKind {
    /// a ≡ amplitude
    Constant,
    /// a(t, s, x) = amplitude · exp(−M0 / (T − t)ᵏ)
    DecayExp,
}

/// Memory kernel a(t, s, x). Both kinds depend on t only.
///
/// `horizon` is the time at which the decay kernel vanishes; it is the problem
/// horizon except in the second phase of the two-phase strategy, where time is
/// measured from t0.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryKernel<T> {
    pub kind: KernelKind,
    pub amplitude: T,
    pub m0: T,
    pub k: T,
    pub horizon: T,
    pub admissible: Option<bool>,
    pub c0: Option<T>,
}

impl<T: Real> MemoryKernel<T> {
    pub fn constant(amplitude: T) -> Self {
        Self {
            kind: KernelKind::Constant,
            amplitude,
            m0: T::zero(),
            k: T::one(),
            horizon: T::infinity(),
            admissible: None,
            c0: None,
        }
    }

    pub fn decay_exp(amplitude: T, m0: T, k: T, horizon: T) -> Self {
        Self {
            kind: KernelKind::DecayExp,
            amplitude,
            m0,
            k,
            horizon,
            admissible: None,
            c0: None,
        }
    }

    /// Decay kernel using the exponent and horizon of `p`.
    pub fn decay_for(amplitude: T, m0: T, p: &WeightParams<T>) -> Self {
        Self::decay_exp(amplitude, m0, p.k, p.t_final)
    }

    pub fn is_zero(&self) -> bool {
        self.amplitude == T::zero()
    }

    /// Same kernel with time origin moved to `t0`.
    pub fn shifted(&self, t0: T) -> Self {
        let mut out = self.clone();
        out.horizon = self.horizon - t0;
        out
    }

    /// log|a(t, ·, ·)|; `-∞` for the zero kernel and at or past the horizon.
    pub fn log_abs(&self, t: T) -> T {
        if self.amplitude == T::zero() {
            return T::neg_infinity();
        }
        let base = self.amplitude.abs().ln();
        match self.kind {
            KernelKind::Constant => base,
            KernelKind::DecayExp => {
                let gap = self.horizon - t;
                if gap <= T::zero() {
                    T::neg_infinity()
                } else {
                    base - self.m0 / gap.powf(self.k)
                }
            }
        }
    }

    pub fn eval(&self, t: T, _s: T, _x: T) -> T {
        let l = self.log_abs(t);
        if l == T::neg_infinity() {
            T::zero()
        } else {
            self.amplitude.signum() * l.exp()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdmissibilityReport<T> {
    pub admissible: bool,
    /// sup over s ≤ t < T of log|a| + s·C0/(T − t)ᵏ.
    pub log_sup: T,
    /// The same quantity maximized over grid times t₀ … t_{nt−1}.
    pub grid_log_max: T,
    /// s·C0
    pub threshold: T,
}

/// Decides whether `e^{s·C0/(T−t)ᵏ}·a` stays bounded up to `t = T`.
///
/// Both kernel kinds have closed forms, so the verdict is an exact comparison
/// (`M0 ≥ s·C0` for the decay kernel). The grid maximum is reported alongside.
pub fn kernel_admissibility<T: Real>(
    kern: &MemoryKernel<T>,
    p: &WeightParams<T>,
    grid: &SpaceTimeGrid<T>,
) -> Result<AdmissibilityReport<T>> {
    if grid.t_final != p.t_final {
        return Err(Error::Parameter(format!(
            "grid horizon {} differs from weight horizon {}",
            grid.t_final, p.t_final
        )));
    }
    if kern.kind == KernelKind::DecayExp && (kern.k != p.k || kern.horizon != p.t_final) {
        return Err(Error::Parameter(format!(
            "decay kernel uses k = {}, horizon {}; weights use k = {}, T = {}",
            kern.k, kern.horizon, p.k, p.t_final
        )));
    }
    let threshold = p.kernel_threshold();
    let weight = |t: T| threshold / (p.t_final - t).powf(p.k);

    let mut grid_log_max = T::neg_infinity();
    for n in 0..grid.nt {
        let t = grid.time(n);
        if kern.is_zero() {
            break;
        }
        let l = match kern.kind {
            KernelKind::Constant => kern.log_abs(t) + weight(t),
            // combined exponent avoids cancelling two large terms
            KernelKind::DecayExp => {
                kern.amplitude.abs().ln() + (threshold - kern.m0) / (p.t_final - t).powf(p.k)
            }
        };
        grid_log_max = grid_log_max.max(l);
    }

    let (admissible, log_sup) = if kern.is_zero() {
        (true, T::neg_infinity())
    } else {
        match kern.kind {
            KernelKind::Constant => (false, T::infinity()),
            KernelKind::DecayExp => {
                if kern.m0 >= threshold {
                    // (s·C0 − M0)/(T − t)ᵏ is largest at t = 0; exactly zero at equality
                    let excess = threshold - kern.m0;
                    let tail = if excess == T::zero() {
                        T::zero()
                    } else {
                        excess / p.t_final.powf(p.k)
                    };
                    (true, kern.amplitude.abs().ln() + tail)
                } else {
                    (false, T::infinity())
                }
            }
        }
    };
    Ok(AdmissibilityReport {
        admissible,
        log_sup,
        grid_log_max,
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::Interval;

    fn grid() -> SpaceTimeGrid<f64> {
        SpaceTimeGrid::new(
            10,
            20,
            1.0,
            Interval::new(0.3, 0.8),
            Interval::new(0.4, 0.7),
        )
        .unwrap()
    }

    #[test]
    fn theory_kernel_is_admissible() {
        let p = WeightParams::<f64>::theory();
        let k = MemoryKernel::decay_for(1.0, 40_000.0, &p);
        let r = kernel_admissibility(&k, &p, &grid()).unwrap();
        assert!(r.admissible);
        assert_eq!(r.threshold, 34_560.0);
        assert!((r.log_sup - (34_560.0 - 40_000.0)).abs() < 1e-9);
    }

    #[test]
    fn boundary_case_is_admissible_with_log_amplitude() {
        let p = WeightParams::<f64>::theory();
        let k = MemoryKernel::decay_for(2.5, p.kernel_threshold(), &p);
        let r = kernel_admissibility(&k, &p, &grid()).unwrap();
        assert!(r.admissible);
        assert_eq!(r.log_sup, 2.5f64.ln());
        assert!((r.grid_log_max - 2.5f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn below_threshold_rejected() {
        let p = WeightParams::<f64>::theory();
        let m0 = p.kernel_threshold();
        let k = MemoryKernel::decay_for(1.0, m0 - m0 * 1e-15, &p);
        assert!(!kernel_admissibility(&k, &p, &grid()).unwrap().admissible);
    }

    #[test]
    fn constant_kernel_rejected() {
        let p = WeightParams::<f64>::theory();
        let r = kernel_admissibility(&MemoryKernel::constant(1.0), &p, &grid()).unwrap();
        assert!(!r.admissible);
        assert_eq!(r.log_sup, f64::INFINITY);
        assert!(r.grid_log_max.is_finite());
    }

    #[test]
    fn zero_kernel_admissible() {
        let p = WeightParams::<f64>::theory();
        let r = kernel_admissibility(&MemoryKernel::constant(0.0), &p, &grid()).unwrap();
        assert!(r.admissible);
        assert_eq!(r.log_sup, f64::NEG_INFINITY);
    }

    #[test]
    fn shifted_kernel_uses_local_time() {
        let k = MemoryKernel::decay_exp(1.0, 2.0, 3.0, 1.0);
        let s = k.shifted(0.25);
        assert_eq!(s.eval(0.0, 0.0, 0.5), k.eval(0.25, 0.0, 0.5));
        assert_eq!(k.eval(1.0, 0.0, 0.5), 0.0);
    }
}
