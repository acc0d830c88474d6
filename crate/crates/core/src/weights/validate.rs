use std::fmt;

use super::{cfrak_interval, extremal_closed_form, ValidationMode, WeightParams};
use crate::real::Real;

/// Named parameter constraints. Failures are report entries, not errors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Constraint {
    GammaRange,
    KMatchesGamma,
    PositiveParameters,
    DAboveOne,
    MuSubcritical,
    PsiNegative,
    SigmaBoundary,
    SigmaPositive,
    SigmaDerivativeOutsideOmegaTilde,
    OmegaTildeContainsCriticalPoint,
    CfrakLowerBound,
    PhiBelowCapPhi,
    DAboveThree,
    KRange,
    CfrakInterval,
    GapCondition,
}

impl Constraint {
    pub fn name(self) -> &'static str {
        match self {
            Constraint::GammaRange => "gamma_range",
            Constraint::KMatchesGamma => "k_matches_gamma",
            Constraint::PositiveParameters => "positive_parameters",
            Constraint::DAboveOne => "d_above_one",
            Constraint::MuSubcritical => "mu_subcritical",
            Constraint::PsiNegative => "psi_negative",
            Constraint::SigmaBoundary => "sigma_boundary",
            Constraint::SigmaPositive => "sigma_positive",
            Constraint::SigmaDerivativeOutsideOmegaTilde => "sigma_derivative_outside_omega_tilde",
            Constraint::OmegaTildeContainsCriticalPoint => "omega_tilde_contains_critical_point",
            Constraint::CfrakLowerBound => "cfrak_lower_bound",
            Constraint::PhiBelowCapPhi => "phi_below_cap_phi",
            Constraint::DAboveThree => "d_above_three",
            Constraint::KRange => "k_range",
            Constraint::CfrakInterval => "cfrak_interval",
            Constraint::GapCondition => "gap_condition",
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One constraint outcome. `margin` is positive when satisfied (distance to
/// the boundary in the constraint's natural units), except for the gap
/// condition whose margin is the raw value `2Φ̂(0) − φ̌(5T/8)` (negative = pass).
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintCheck<T> {
    pub constraint: Constraint,
    pub passed: bool,
    pub margin: T,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport<T> {
    pub mode: ValidationMode,
    pub checks: Vec<ConstraintCheck<T>>,
}

impl<T: Real> ValidationReport<T> {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConstraintCheck<T>> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn failed(&self, constraint: Constraint) -> bool {
        self.get(constraint).is_some_and(|c| !c.passed)
    }

    pub fn get(&self, constraint: Constraint) -> Option<&ConstraintCheck<T>> {
        self.checks.iter().find(|c| c.constraint == constraint)
    }

    /// `2Φ̂(0) − φ̌(5T/8)` when the report was produced in memory mode.
    pub fn gap_margin(&self) -> Option<T> {
        self.get(Constraint::GapCondition).map(|c| c.margin)
    }
}

const VALIDATION_NODES: usize = 200;

/// Checks every constraint of `p` for its mode; σ conditions and φ ≤ Φ are
/// sampled on a 200 × 200 validation grid.
pub fn validate_params<T: Real>(p: &WeightParams<T>) -> ValidationReport<T> {
    let mut checks = Vec::new();
    let mut push = |constraint, passed, margin, detail: String| {
        checks.push(ConstraintCheck {
            constraint,
            passed,
            margin,
            detail,
        })
    };
    let two = T::lit(2.0);
    let quarter = T::lit(0.25);

    push(
        Constraint::GammaRange,
        p.gamma > T::zero() && p.gamma < two,
        p.gamma.min(two - p.gamma),
        format!("gamma = {} must lie in (0, 2)", p.gamma),
    );
    let k_expected = T::one() + two / p.gamma;
    let k_dev = (p.k - k_expected).abs();
    push(
        Constraint::KMatchesGamma,
        k_dev <= T::lit(1e-12).max(T::epsilon() * T::lit(8.0) * k_expected.abs()),
        -k_dev,
        format!("k = {} but 1 + 2/gamma = {k_expected}", p.k),
    );
    let positives = [p.cfrak, p.rho, p.s, p.t_final, p.eta];
    let min_positive = positives.iter().copied().fold(T::infinity(), T::min);
    push(
        Constraint::PositiveParameters,
        min_positive > T::zero(),
        min_positive,
        "cfrak, rho, s, T and eta must be positive".into(),
    );
    push(
        Constraint::DAboveOne,
        p.d > T::one(),
        p.d - T::one(),
        format!("d = {} must exceed 1", p.d),
    );
    push(
        Constraint::MuSubcritical,
        p.mu <= quarter,
        quarter - p.mu,
        format!("mu = {} exceeds the Hardy constant 1/4", p.mu),
    );
    let psi_max = p.psi(T::zero()).max(p.psi(T::one()));
    push(
        Constraint::PsiNegative,
        psi_max < T::zero(),
        -psi_max,
        format!("max psi on [0,1] = {psi_max} must be negative"),
    );

    // σ checks on sampled nodes
    let n = VALIDATION_NODES;
    let xs: Vec<T> = (0..n)
        .map(|i| T::from_usize_lossy(i) / T::from_usize_lossy(n - 1))
        .collect();
    let sigma = &p.sigma;
    let bdry = sigma.value(T::zero()).abs().max(sigma.value(T::one()).abs());
    let bdry_tol = T::epsilon() * T::lit(64.0) * sigma.sup_norm().max(T::one());
    push(
        Constraint::SigmaBoundary,
        bdry <= bdry_tol,
        -bdry,
        format!("sigma at the endpoints = {bdry}, must vanish"),
    );
    let interior_min = xs[1..n - 1]
        .iter()
        .map(|&x| sigma.value(x))
        .fold(T::infinity(), T::min);
    push(
        Constraint::SigmaPositive,
        interior_min > T::zero(),
        interior_min,
        format!("min sigma on interior samples = {interior_min}"),
    );
    let ot = sigma.omega_tilde;
    let crit = sigma.argmax();
    // the samples may step over the critical point, so it is tested directly
    let mut deriv_min = xs
        .iter()
        .filter(|&&x| !ot.contains(x))
        .map(|&x| sigma.derivative(x).abs())
        .fold(T::infinity(), T::min);
    if !ot.contains(crit) {
        deriv_min = deriv_min.min(sigma.derivative(crit).abs());
    }
    push(
        Constraint::SigmaDerivativeOutsideOmegaTilde,
        deriv_min > T::zero(),
        deriv_min,
        format!("min |sigma_x| outside omega_tilde = {deriv_min}"),
    );
    push(
        Constraint::OmegaTildeContainsCriticalPoint,
        ot.contains(crit),
        (crit - ot.lo).min(ot.hi - crit),
        format!("omega_tilde = ({}, {}) must contain {crit}", ot.lo, ot.hi),
    );

    let big = (two * p.rho * sigma.sup_norm()).exp();
    let cfrak_lo = (big - T::one()) / (p.d - T::one());
    push(
        Constraint::CfrakLowerBound,
        p.cfrak >= cfrak_lo,
        p.cfrak - cfrak_lo,
        format!("cfrak = {} below (e^(2 rho |sigma|) - 1)/(d - 1) = {cfrak_lo}", p.cfrak),
    );

    // φ ≤ Φ on the validation grid; θ > 0 factors out but the check is done pointwise
    let mut worst = T::neg_infinity();
    for j in 1..=n {
        let t = p.t_final * T::from_usize_lossy(j) / T::from_usize_lossy(n + 1);
        let theta = p.theta(t);
        for &x in &xs {
            worst = worst.max(theta * (p.psi(x) - p.cap_psi(x)));
        }
    }
    push(
        Constraint::PhiBelowCapPhi,
        worst <= T::zero(),
        -worst,
        format!("max (phi - Phi) on validation grid = {worst}"),
    );

    if p.mode == ValidationMode::Memory {
        let three = T::lit(3.0);
        push(
            Constraint::DAboveThree,
            p.d > three,
            p.d - three,
            format!("d = {} must exceed 3", p.d),
        );
        let k_hi = (T::lit(4.0) / three).ln() / (T::lit(16.0) / T::lit(15.0)).ln() - T::one();
        push(
            Constraint::KRange,
            p.k > two && p.k < k_hi,
            (p.k - two).min(k_hi - p.k),
            format!("k = {} must lie in (2, {k_hi})", p.k),
        );
        let (passed, margin, detail) = match cfrak_interval(p.rho, sigma.sup_norm(), p.d) {
            Some(iv) => (
                iv.contains(p.cfrak),
                (p.cfrak - iv.lo).min(iv.hi - p.cfrak),
                format!("cfrak = {} must lie in ({}, {})", p.cfrak, iv.lo, iv.hi),
            ),
            None => (
                false,
                T::neg_infinity(),
                format!("cfrak interval is empty for rho = {}", p.rho),
            ),
        };
        push(Constraint::CfrakInterval, passed, margin, detail);

        let at_zero = extremal_closed_form(p, T::zero());
        let at_five_eighths = extremal_closed_form(p, T::lit(0.625) * p.t_final);
        let gap = two * at_zero.hat_cap_phi - at_five_eighths.check_phi;
        push(
            Constraint::GapCondition,
            gap < T::zero(),
            gap,
            format!("2 hatPhi(0) - checkphi(5T/8) = {gap} must be negative"),
        );
    }

    ValidationReport {
        mode: p.mode,
        checks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn theory() -> WeightParams<f64> {
        WeightParams::theory()
    }

    #[test]
    fn theory_set_passes_memory_mode() {
        let r = validate_params(&theory());
        assert!(r.passed(), "{:?}", r.failures().collect::<Vec<_>>());
        assert_eq!(r.mode, ValidationMode::Memory);
    }

    #[test]
    fn gap_margin_matches_scalar_evaluation() {
        let r = validate_params(&theory());
        let hat = 64.0 * (3f64.exp() - 6f64.exp());
        let theta58 = (1.0 / (0.625 * 0.375_f64)).powi(3);
        let expected = 2.0 * hat + theta58 * 540.0;
        let gap = r.gap_margin().unwrap();
        assert!(((gap - expected) / expected).abs() < 1e-12);
        assert!(gap < 0.0);
    }

    #[test]
    fn k_two_fails_k_range() {
        let mut p = theory();
        p.k = 2.0;
        let r = validate_params(&p);
        assert!(r.failed(Constraint::KRange));
    }

    #[test]
    fn supercritical_mu_fails() {
        let r = validate_params(&theory().with_mu(0.3));
        assert!(r.failed(Constraint::MuSubcritical));
        assert_eq!(r.failures().count(), 1);
    }

    #[test]
    fn critical_mu_is_allowed() {
        assert!(validate_params(&theory().with_mu(0.25)).passed());
    }

    #[test]
    fn basic_mode_skips_memory_constraints() {
        let r = validate_params(&WeightParams::<f64>::mild());
        assert!(r.passed(), "{:?}", r.failures().collect::<Vec<_>>());
        assert!(r.get(Constraint::GapCondition).is_none());
    }

    #[test]
    fn omega_tilde_must_straddle_half() {
        let mut p = theory();
        p.sigma.omega_tilde = crate::discretization::Interval::new(0.6, 0.7);
        let r = validate_params(&p);
        assert!(r.failed(Constraint::OmegaTildeContainsCriticalPoint));
        assert!(r.failed(Constraint::SigmaDerivativeOutsideOmegaTilde));
    }

    #[test]
    fn small_cfrak_breaks_phi_ordering() {
        let mut p = theory().with_mode(ValidationMode::Basic);
        p.cfrak = 100.0;
        let r = validate_params(&p);
        assert!(r.failed(Constraint::CfrakLowerBound));
        assert!(r.failed(Constraint::PhiBelowCapPhi));
    }
}
