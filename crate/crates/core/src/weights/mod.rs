//! Carleman weight functions, their extremal envelopes and the parameter
//! constraints they must satisfy.
//!
//! All exponential weights (`e^{2sφ̃}`, `e^{2sΦ̃}`) are exposed only through
//! their logarithms. With admissible parameters the exponents reach 10⁴–10⁵ in
//! magnitude, so consumers must exponentiate differences of logs.

mod kernel;
mod sigma;
mod validate;

pub use kernel::{kernel_admissibility, AdmissibilityReport, KernelKind, MemoryKernel};
pub use sigma::{SigmaFamily, SigmaSpec};
pub use validate::{validate_params, Constraint, ConstraintCheck, ValidationReport};

use crate::discretization::Interval;
use crate::error::{Error, Result};
use crate::real::Real;

/// Which set of parameter constraints applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValidationMode {
    /// Constraints needed by the Carleman estimates without memory.
    Basic,
    /// Additionally `d > 3`, the `k`-range, the `𝔠`-interval and the gap condition.
    Memory,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightParams<T> {
    /// γ ∈ (0, 2).
    pub gamma: T,
    /// Exponent of θ; must equal `1 + 2/γ`.
    pub k: T,
    /// The constant 𝔠 in ψ(x) = 𝔠(x² − d).
    pub cfrak: T,
    pub d: T,
    pub rho: T,
    /// Carleman parameter.
    pub s: T,
    /// Horizon T.
    pub t_final: T,
    /// Potential strength.
    pub mu: T,
    /// Exponent in the improved Hardy–Poincaré inequality.
    pub eta: T,
    pub sigma: SigmaSpec<T>,
    pub mode: ValidationMode,
}

impl<T: Real> WeightParams<T> {
    /// Builds parameters with `k = 1 + 2/γ`, η = 1 and σ = x(1−x) on ω̃ = (0.45, 0.55).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        gamma: T,
        cfrak: T,
        d: T,
        rho: T,
        s: T,
        t_final: T,
        mu: T,
        mode: ValidationMode,
    ) -> Self {
        Self {
            gamma,
            k: T::one() + T::lit(2.0) / gamma,
            cfrak,
            d,
            rho,
            s,
            t_final,
            mu,
            eta: T::one(),
            sigma: SigmaSpec::default(),
            mode,
        }
    }

    /// T = 1, γ = 1 (k = 3), d = 4, ρ = 12, 𝔠 = 135, s = 1, μ = 0.2, memory mode.
    pub fn theory() -> Self {
        Self::new(
            T::one(),
            T::lit(135.0),
            T::lit(4.0),
            T::lit(12.0),
            T::one(),
            T::one(),
            T::lit(0.2),
            ValidationMode::Memory,
        )
    }

    /// Mild basic-mode set (ρ = 1, d = 2, 𝔠 = 0.65, s = 10⁻³) whose weights
    /// stay within a few orders of magnitude on coarse grids.
    pub fn mild() -> Self {
        Self::new(
            T::one(),
            T::lit(0.65),
            T::lit(2.0),
            T::one(),
            T::lit(1e-3),
            T::one(),
            T::lit(0.2),
            ValidationMode::Basic,
        )
    }

    pub fn with_s(mut self, s: T) -> Self {
        self.s = s;
        self
    }

    pub fn with_mu(mut self, mu: T) -> Self {
        self.mu = mu;
        self
    }

    pub fn with_mode(mut self, mode: ValidationMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_horizon(mut self, t_final: T) -> Self {
        self.t_final = t_final;
        self
    }

    /// θ(t) = (t(T−t))^{−k}; `+∞` outside (0, T).
    pub fn theta(&self, t: T) -> T {
        if t <= T::zero() || t >= self.t_final {
            return T::infinity();
        }
        (t * (self.t_final - t)).powf(-self.k)
    }

    /// ν(t): θ(T/2) on [0, T/2], θ(t) on [T/2, T); `+∞` at or beyond T.
    pub fn nu(&self, t: T) -> T {
        let half = self.t_final / T::lit(2.0);
        if t <= half {
            self.theta(half)
        } else {
            self.theta(t)
        }
    }

    pub fn psi(&self, x: T) -> T {
        self.cfrak * (x * x - self.d)
    }

    /// Ψ(x) = e^{ρσ(x)} − e^{2ρ‖σ‖∞}.
    pub fn cap_psi(&self, x: T) -> T {
        (self.rho * self.sigma.value(x)).exp()
            - (T::lit(2.0) * self.rho * self.sigma.sup_norm()).exp()
    }

    /// `2s·Φ̃(t, x)`, the log of `e^{2sΦ̃}`.
    pub fn log_e2s_cap_phi_tilde(&self, t: T, x: T) -> T {
        T::lit(2.0) * self.s * self.nu(t) * self.cap_psi(x)
    }

    /// `2s·φ̃(t, x)`.
    pub fn log_e2s_phi_tilde(&self, t: T, x: T) -> T {
        T::lit(2.0) * self.s * self.nu(t) * self.psi(x)
    }

    /// `ln(s³ν³e^{2sΦ̃})`, the log of the control weight; `-∞` from t = T on.
    pub fn log_control_weight(&self, t: T, x: T) -> T {
        if t >= self.t_final {
            return T::neg_infinity();
        }
        T::lit(3.0) * (self.s * self.nu(t)).ln() + self.log_e2s_cap_phi_tilde(t, x)
    }

    /// C₀ = 4ᵏ𝔠d / Tᵏ.
    pub fn c0(&self) -> T {
        T::lit(4.0).powf(self.k) * self.cfrak * self.d / self.t_final.powf(self.k)
    }

    /// Smallest kernel decay rate `M0 = s·C₀` accepted by the admissibility test.
    pub fn kernel_threshold(&self) -> T {
        self.s * self.c0()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightValues<T> {
    pub theta: T,
    pub nu: T,
    pub psi: T,
    pub phi: T,
    pub cap_psi: T,
    pub cap_phi: T,
    pub phi_tilde: T,
    pub cap_phi_tilde: T,
    pub log_e2s_phi_tilde: T,
    pub log_e2s_cap_phi_tilde: T,
}

/// Every weight at `(t, x)` with `0 < t < T`, `0 ≤ x ≤ 1`.
pub fn evaluate_weights<T: Real>(p: &WeightParams<T>, t: T, x: T) -> Result<WeightValues<T>> {
    if !(t > T::zero() && t < p.t_final) {
        return Err(Error::Domain(format!(
            "θ undefined at t = {t} (need 0 < t < {})",
            p.t_final
        )));
    }
    if !(x >= T::zero() && x <= T::one()) {
        return Err(Error::Domain(format!("x = {x} outside [0, 1]")));
    }
    let theta = p.theta(t);
    let nu = p.nu(t);
    let psi = p.psi(x);
    let cap_psi = p.cap_psi(x);
    let two_s = T::lit(2.0) * p.s;
    Ok(WeightValues {
        theta,
        nu,
        psi,
        phi: theta * psi,
        cap_psi,
        cap_phi: theta * cap_psi,
        phi_tilde: nu * psi,
        cap_phi_tilde: nu * cap_psi,
        log_e2s_phi_tilde: two_s * nu * psi,
        log_e2s_cap_phi_tilde: two_s * nu * cap_psi,
    })
}

/// Spatial extrema of the ν-weights at a fixed time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtremalWeights<T> {
    /// max over x of Φ̃
    pub hat_cap_phi: T,
    /// max over x of φ̃
    pub hat_phi: T,
    /// min over x of φ̃
    pub check_phi: T,
}

pub(crate) fn extremal_closed_form<T: Real>(p: &WeightParams<T>, t: T) -> ExtremalWeights<T> {
    let nu = p.nu(t);
    let m = p.sigma.sup_norm();
    ExtremalWeights {
        hat_cap_phi: nu * ((p.rho * m).exp() - (T::lit(2.0) * p.rho * m).exp()),
        hat_phi: nu * p.cfrak * (T::one() - p.d),
        check_phi: -nu * p.cfrak * p.d,
    }
}

/// Closed forms φ̂ = ν𝔠(1−d), φ̌ = −ν𝔠d, Φ̂ = ν(e^{ρ‖σ‖} − e^{2ρ‖σ‖}) for `0 ≤ t < T`,
/// cross-checked against extremization on a spatial grid.
pub fn extremal_weights<T: Real>(p: &WeightParams<T>, t: T) -> Result<ExtremalWeights<T>> {
    if !(t >= T::zero() && t < p.t_final) {
        return Err(Error::Domain(format!("t = {t} outside [0, {})", p.t_final)));
    }
    let closed = extremal_closed_form(p, t);
    let nu = p.nu(t);
    let n = 2000;
    let mut xs: Vec<T> = (0..=n)
        .map(|i| T::from_usize_lossy(i) / T::from_usize_lossy(n))
        .collect();
    xs.push(p.sigma.argmax());
    let mut hat_cap = T::neg_infinity();
    let mut hat = T::neg_infinity();
    let mut check = T::infinity();
    for &x in &xs {
        hat_cap = hat_cap.max(nu * p.cap_psi(x));
        let phi = nu * p.psi(x);
        hat = hat.max(phi);
        check = check.min(phi);
    }
    let tol = T::lit(1e-9).max(T::epsilon() * T::lit(64.0));
    for (name, a, b) in [
        ("hat_cap_phi", closed.hat_cap_phi, hat_cap),
        ("hat_phi", closed.hat_phi, hat),
        ("check_phi", closed.check_phi, check),
    ] {
        if (a - b).abs() > tol * a.abs().max(b.abs()) {
            return Err(Error::Consistency(format!(
                "{name}: closed form {a} disagrees with grid extremum {b}"
            )));
        }
    }
    Ok(closed)
}

/// Open interval for 𝔠 that makes the gap condition attainable:
/// `((e^{2ρM} − 1)/(d−1), (16/15)(e^{2ρM} − e^{ρM})/(d−1))`, `None` when empty.
pub fn cfrak_interval<T: Real>(rho: T, sigma_max: T, d: T) -> Option<Interval<T>> {
    let x = (rho * sigma_max).exp();
    let lo = (x * x - T::one()) / (d - T::one());
    let hi = T::lit(16.0) / T::lit(15.0) * (x * x - x) / (d - T::one());
    if lo < hi {
        Some(Interval::new(lo, hi))
    } else {
        None
    }
}
