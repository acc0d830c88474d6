//! Numerical checks of the functional inequalities behind the control results:
//! Hardy, improved Hardy–Poincaré, Caccioppoli and the two Carleman estimates,
//! plus the spectral scan across the critical potential μ = 1/4.
//!
//! Weighted integrals are accumulated relative to the largest log-weight on each
//! side, a quantity that does not depend on the data. Scaling the data by a power
//! of two therefore leaves every reported ratio bit-identical.

use crate::discretization::{discrete_hardy_ratio, spectral_bottom, Interval, SpaceTimeGrid, Trajectory};
use crate::error::{Error, Result};
use crate::evolve::adjoint_solve;
use crate::field::Field;
use crate::real::Real;
use crate::weights::{extremal_weights, WeightParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Both sides of an inequality `lhs ≤ C·rhs`, in log form, with `ratio = lhs/rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct InequalityReport<T> {
    pub lhs_log: T,
    pub rhs_log: T,
    /// `0` when both sides vanish, `+∞` when only the right side does.
    pub ratio: T,
    /// Logs of the individual integrals, left side first.
    pub terms: Vec<(String, T)>,
    pub s: T,
    pub mu: T,
    pub description: String,
}

impl<T: Real> InequalityReport<T> {
    pub fn log_ratio(&self) -> T {
        self.ratio.ln()
    }

    pub fn term(&self, name: &str) -> Option<T> {
        self.terms.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }
}

/// Sum of named terms `Σ vᵢ·e^{lwᵢ}` with `vᵢ ≥ 0`.
struct Side<T> {
    terms: Vec<(String, Vec<(T, T)>)>,
}

struct SideTotals<T> {
    scaled: T,
    shift: T,
    term_logs: Vec<(String, T)>,
}

impl<T: Real> Side<T> {
    fn new(names: &[&str]) -> Self {
        Self {
            terms: names.iter().map(|n| (n.to_string(), Vec::new())).collect(),
        }
    }

    fn push(&mut self, term: usize, value: T, log_weight: T) {
        self.terms[term].1.push((value, log_weight));
    }

    fn totals(&self) -> SideTotals<T> {
        let shift = self
            .terms
            .iter()
            .flat_map(|(_, e)| e.iter().map(|&(_, lw)| lw))
            .filter(|lw| lw.is_finite())
            .fold(T::neg_infinity(), T::max);
        let mut scaled = T::zero();
        let mut term_logs = Vec::with_capacity(self.terms.len());
        for (name, entries) in &self.terms {
            let t: T = if shift.is_finite() {
                entries
                    .iter()
                    .filter(|(_, lw)| lw.is_finite())
                    .map(|&(v, lw)| v * (lw - shift).exp())
                    .sum()
            } else {
                T::zero()
            };
            scaled += t;
            term_logs.push((name.clone(), t.ln() + shift));
        }
        SideTotals { scaled, shift, term_logs }
    }
}

fn compare<T: Real>(lhs: &Side<T>, rhs: &Side<T>, s: T, mu: T, description: String) -> InequalityReport<T> {
    let l = lhs.totals();
    let r = rhs.totals();
    let lhs_log = l.scaled.ln() + l.shift;
    let rhs_log = r.scaled.ln() + r.shift;
    let ratio = if r.scaled == T::zero() {
        if l.scaled == T::zero() {
            T::zero()
        } else {
            T::infinity()
        }
    } else if l.scaled == T::zero() {
        T::zero()
    } else {
        let factor = (l.shift - r.shift).exp();
        let direct = l.scaled / r.scaled * factor;
        if factor.is_finite() && factor > T::zero() && direct.is_finite() && direct > T::zero() {
            direct
        } else {
            (lhs_log - rhs_log).exp()
        }
    };
    let mut terms = l.term_logs;
    terms.extend(r.term_logs);
    InequalityReport {
        lhs_log,
        rhs_log,
        ratio,
        terms,
        s,
        mu,
        description,
    }
}

/// Estimate of the improved Hardy–Poincaré constant `C(η)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HardyPoincareEstimate<T> {
    /// Largest ratio over the accepted samples; a lower bound on `C(η)`.
    pub constant: T,
    pub ratios: Vec<T>,
    /// Samples whose discrete Hardy defect was not positive.
    pub excluded: Vec<usize>,
}

/// `max ∫x^η z_x² / ∫(z_x² − z²/(4x²))` over test functions vanishing at 0 and 1,
/// with `n` cells: derivatives on cell midpoints, the singular term on interior nodes.
pub fn improved_hp_constant<T: Real>(
    eta: T,
    test_functions: &[&dyn Fn(T) -> T],
    n: usize,
) -> Result<HardyPoincareEstimate<T>> {
    if !(eta > T::zero()) {
        return Err(Error::Parameter(format!("η must be positive (got {eta})")));
    }
    if n < 4 {
        return Err(Error::Parameter(format!("need at least 4 cells (got {n})")));
    }
    let h = T::one() / T::from_usize_lossy(n);
    let quarter = T::lit(0.25);
    let mut ratios = Vec::new();
    let mut excluded = Vec::new();
    for (k, f) in test_functions.iter().enumerate() {
        let z: Vec<T> = (0..=n)
            .map(|i| {
                if i == 0 || i == n {
                    T::zero()
                } else {
                    f(T::from_usize_lossy(i) * h)
                }
            })
            .collect();
        let mut lhs = T::zero();
        let mut grad = T::zero();
        for i in 0..n {
            let dz = (z[i + 1] - z[i]) / h;
            let xm = (T::from_usize_lossy(i) + T::lit(0.5)) * h;
            lhs += xm.powf(eta) * dz * dz * h;
            grad += dz * dz * h;
        }
        let singular: T = (1..n)
            .map(|i| {
                let x = T::from_usize_lossy(i) * h;
                z[i] * z[i] / (x * x)
            })
            .sum::<T>()
            * h;
        let defect = grad - quarter * singular;
        if defect > T::zero() && lhs.is_finite() {
            ratios.push(lhs / defect);
        } else {
            excluded.push(k);
        }
    }
    if ratios.is_empty() {
        return Err(Error::UndefinedInput(
            "no test function has a positive Hardy defect".into(),
        ));
    }
    let constant = ratios.iter().copied().fold(T::neg_infinity(), T::max);
    Ok(HardyPoincareEstimate {
        constant,
        ratios,
        excluded,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CarlemanForm {
    /// θ-weights; the four-integral functional for μ < 1/4, the three-integral one at μ = 1/4.
    Standard,
    /// ν-weights with the `z(0)` term, observation on ω.
    Modified,
}

impl CarlemanForm {
    pub fn name(self) -> &'static str {
        match self {
            Self::Standard => "standard",
            Self::Modified => "modified",
        }
    }
}

/// Default truncation `ε` of the time window `[εT, (1−ε)T]`.
pub const CARLEMAN_WINDOW: f64 = 1.0 / 16.0;

fn window_levels<T: Real>(grid: &SpaceTimeGrid<T>, eps: T) -> Result<Vec<usize>> {
    if !(eps > T::zero() && eps < T::lit(0.5)) {
        return Err(Error::Parameter(format!("window parameter ε = {eps} outside (0, 1/2)")));
    }
    let (lo, hi) = (eps * grid.t_final, (T::one() - eps) * grid.t_final);
    Ok((0..=grid.nt)
        .filter(|&n| {
            let t = grid.time(n);
            t >= lo && t <= hi
        })
        .collect())
}

fn check_weights_grid<T: Real>(p: &WeightParams<T>, grid: &SpaceTimeGrid<T>) -> Result<()> {
    if p.t_final != grid.t_final {
        return Err(Error::Parameter(format!(
            "weight horizon {} differs from grid horizon {}",
            p.t_final, grid.t_final
        )));
    }
    Ok(())
}

/// Cell-midpoint derivative of one level, `z₀ = z_{nx+1} = 0`; entry `j` sits at `(j + ½)h`.
fn cell_gradient<T: Real>(row: &[T], h: T) -> Vec<T> {
    let mut out = Vec::with_capacity(row.len() + 1);
    let mut prev = T::zero();
    for &v in row.iter().chain(std::iter::once(&T::zero())) {
        out.push((v - prev) / h);
        prev = v;
    }
    out
}

fn adjoint<T: Real>(p: &WeightParams<T>, g: Option<&Field<T>>, zt: &[T], grid: &SpaceTimeGrid<T>) -> Result<Trajectory<T>> {
    if p.mu > T::lit(0.25) {
        return Err(Error::Parameter(format!("Carleman estimates need μ ≤ 1/4 (got {})", p.mu)));
    }
    adjoint_solve(g, zt, p.mu, grid)
}

/// Both sides of a Carleman estimate for `z = adjoint_solve(g, zT)`, integrated over
/// the levels in `[εT, (1−ε)T]`.
pub fn carleman_ratio<T: Real>(
    p: &WeightParams<T>,
    form: CarlemanForm,
    g: Option<&Field<T>>,
    z_terminal: &[T],
    grid: &SpaceTimeGrid<T>,
    eps: T,
) -> Result<InequalityReport<T>> {
    check_weights_grid(p, grid)?;
    let levels = window_levels(grid, eps)?;
    let z = adjoint(p, g, z_terminal, grid)?;
    let (h, dt) = (grid.h(), grid.dt());
    let two_s = T::lit(2.0) * p.s;
    let s = p.s;
    let three = T::lit(3.0);
    let critical = p.mu == T::lit(0.25);
    let omega = match form {
        CarlemanForm::Standard => grid.omega_prime_mask(),
        CarlemanForm::Modified => grid.omega_mask(),
    };
    let measure = (h * dt).ln();

    let mut lhs;
    let mut rhs = Side::new(&["source", "observation"]);
    match form {
        CarlemanForm::Standard if critical => {
            lhs = Side::new(&["x2_term", "gradient_eta", "x_gamma_term"]);
        }
        CarlemanForm::Standard => {
            lhs = Side::new(&["x2_term", "gradient", "inverse_square", "x_gamma_term"]);
        }
        CarlemanForm::Modified => {
            lhs = Side::new(&["initial", "nu_term"]);
            let hat0 = extremal_weights(p, T::zero())?.hat_phi;
            for &v in z.initial() {
                lhs.push(0, v * v, two_s * hat0 + h.ln());
            }
        }
    }

    for &n in &levels {
        let t = grid.time(n);
        let row = z.at(n);
        let (tw, ln_tw) = match form {
            CarlemanForm::Standard => {
                let th = p.theta(t);
                (th, th.ln())
            }
            CarlemanForm::Modified => {
                let nu = p.nu(t);
                (nu, nu.ln())
            }
        };
        let ln_s = s.ln();
        for (i, &v) in row.iter().enumerate() {
            let x = grid.x(i);
            let ln_x = x.ln();
            let z2 = v * v;
            let lw_small = two_s * tw * p.psi(x) + measure;
            let lw_big = two_s * tw * p.cap_psi(x) + measure;
            match form {
                CarlemanForm::Standard => {
                    lhs.push(0, z2, three * (ln_s + ln_tw) + T::lit(2.0) * ln_x + lw_small);
                    let j = if critical { 2 } else { 3 };
                    lhs.push(j, z2, ln_s + ln_tw - p.gamma * ln_x + lw_small);
                    if !critical {
                        lhs.push(2, z2, ln_s + ln_tw - T::lit(2.0) * ln_x + lw_small);
                    }
                }
                CarlemanForm::Modified => lhs.push(1, z2, ln_tw + lw_small),
            }
            if let Some(g) = g {
                let gv = g.row(n)[i];
                rhs.push(0, gv * gv, lw_big);
            }
            if omega[i] > T::zero() {
                rhs.push(1, z2, three * (ln_s + ln_tw) + lw_big);
            }
        }
        if form == CarlemanForm::Standard {
            for (j, &d) in cell_gradient(row, h).iter().enumerate() {
                let xm = (T::from_usize_lossy(j) + T::lit(0.5)) * h;
                let mut lw = ln_s + ln_tw + two_s * tw * p.psi(xm) + measure;
                if critical {
                    lw += p.eta * xm.ln();
                }
                lhs.push(1, d * d, lw);
            }
        }
    }
    let description = format!(
        "{} Carleman estimate, {} levels in [{:.4}, {:.4}]",
        form.name(),
        levels.len(),
        eps * grid.t_final,
        (T::one() - eps) * grid.t_final
    );
    Ok(compare(&lhs, &rhs, p.s, p.mu, description))
}

/// `ln` of the constant in front of the modified estimate, `2s(φ̂(0) − φ̌(5T/8))`.
pub fn modified_log_prefactor<T: Real>(p: &WeightParams<T>) -> Result<T> {
    let hat0 = extremal_weights(p, T::zero())?.hat_phi;
    let check = extremal_weights(p, T::lit(0.625) * p.t_final)?.check_phi;
    Ok(T::lit(2.0) * p.s * (hat0 - check))
}

/// Spatial factor `ϱ` of the Caccioppoli weight `θ(t)ϱ(x)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CaccioppoliWeight {
    Psi,
    CapPsi,
}

/// `∬_{ω″} z_x² e^{2sθϱ}` against `∬_{ω′} (g² + s²θ²z²) e^{2sθϱ}`.
pub fn caccioppoli_ratio<T: Real>(
    p: &WeightParams<T>,
    omega_pp: Interval<T>,
    weight: CaccioppoliWeight,
    g: Option<&Field<T>>,
    z_terminal: &[T],
    grid: &SpaceTimeGrid<T>,
    eps: T,
) -> Result<InequalityReport<T>> {
    if !grid.omega_prime.compactly_contains(&omega_pp) {
        return Err(Error::Parameter(format!(
            "ω″ = ({}, {}) must lie compactly inside ω′ = ({}, {})",
            omega_pp.lo, omega_pp.hi, grid.omega_prime.lo, grid.omega_prime.hi
        )));
    }
    check_weights_grid(p, grid)?;
    let levels = window_levels(grid, eps)?;
    let z = adjoint(p, g, z_terminal, grid)?;
    let (h, dt) = (grid.h(), grid.dt());
    let measure = (h * dt).ln();
    let two_s = T::lit(2.0) * p.s;
    let rho_of = |x: T| match weight {
        CaccioppoliWeight::Psi => p.psi(x),
        CaccioppoliWeight::CapPsi => p.cap_psi(x),
    };
    let mut lhs = Side::new(&["gradient"]);
    let mut rhs = Side::new(&["source", "zero_order"]);
    for &n in &levels {
        let th = p.theta(grid.time(n));
        let row = z.at(n);
        for (j, &d) in cell_gradient(row, h).iter().enumerate() {
            let xm = (T::from_usize_lossy(j) + T::lit(0.5)) * h;
            if omega_pp.contains(xm) {
                lhs.push(0, d * d, two_s * th * rho_of(xm) + measure);
            }
        }
        for (i, &v) in row.iter().enumerate() {
            let x = grid.x(i);
            if !grid.omega_prime.contains(x) {
                continue;
            }
            let lw = two_s * th * rho_of(x) + measure;
            if let Some(g) = g {
                let gv = g.row(n)[i];
                rhs.push(0, gv * gv, lw);
            }
            rhs.push(1, v * v, T::lit(2.0) * (p.s * th).ln() + lw);
        }
    }
    let description = format!(
        "Caccioppoli on ω″ = ({:.4}, {:.4}), {} levels",
        omega_pp.lo,
        omega_pp.hi,
        levels.len()
    );
    Ok(compare(&lhs, &rhs, p.s, p.mu, description))
}

/// One random draw of adjoint data.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteSample<T> {
    pub index: usize,
    pub lhs_log: T,
    pub rhs_log: T,
    pub ratio: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport<T> {
    pub seed: u64,
    pub form: CarlemanForm,
    pub samples: Vec<SuiteSample<T>>,
    pub max_ratio: T,
    /// `ln max_ratio`, kept since the ratio itself often underflows.
    pub max_log_ratio: T,
}

/// Random adjoint data: `zT` and `g` are combinations of the first four sine modes
/// in x (times sines in t for g) with uniform coefficients in (−1, 1).
pub fn random_adjoint_data<T: Real>(grid: &SpaceTimeGrid<T>, rng: &mut ChaCha8Rng) -> (Field<T>, Vec<T>) {
    const MODES: usize = 4;
    let mut coef = || T::lit(rng.gen_range(-1.0..1.0));
    let zt_coef: Vec<T> = (0..MODES).map(|_| coef()).collect();
    let g_coef: Vec<T> = (0..MODES * MODES).map(|_| coef()).collect();
    let pi = T::PI();
    let xs = grid.nodes();
    let zt = xs
        .iter()
        .map(|&x| {
            (0..MODES)
                .map(|m| zt_coef[m] * (pi * T::from_usize_lossy(m + 1) * x).sin())
                .sum()
        })
        .collect();
    let g = Field::from_fn(grid.nt + 1, grid.nx, |n, i| {
        let (t, x) = (grid.time(n) / grid.t_final, xs[i]);
        let mut v = T::zero();
        for m in 0..MODES {
            for j in 0..MODES {
                v += g_coef[m * MODES + j]
                    * (pi * T::from_usize_lossy(m + 1) * x).sin()
                    * (pi * T::from_usize_lossy(j + 1) * t).sin();
            }
        }
        v
    });
    (g, zt)
}

/// Carleman ratio over `draws` random `(g, zT)` pairs from a ChaCha8 stream seeded with `seed`.
pub fn carleman_suite<T: Real>(
    p: &WeightParams<T>,
    form: CarlemanForm,
    grid: &SpaceTimeGrid<T>,
    draws: usize,
    seed: u64,
) -> Result<SuiteReport<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = T::lit(CARLEMAN_WINDOW);
    let mut samples = Vec::with_capacity(draws);
    for index in 0..draws {
        let (g, zt) = random_adjoint_data(grid, &mut rng);
        let r = carleman_ratio(p, form, Some(&g), &zt, grid, eps)?;
        samples.push(SuiteSample {
            index,
            lhs_log: r.lhs_log,
            rhs_log: r.rhs_log,
            ratio: r.ratio,
        });
    }
    let max_log_ratio = samples
        .iter()
        .map(|s| s.lhs_log - s.rhs_log)
        .fold(T::neg_infinity(), T::max);
    let max_ratio = samples.iter().map(|s| s.ratio).fold(T::zero(), T::max);
    Ok(SuiteReport {
        seed,
        form,
        samples,
        max_ratio,
        max_log_ratio,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectralClass {
    Bounded,
    Collapsing,
    Indeterminate,
}

impl SpectralClass {
    pub fn name(self) -> &'static str {
        match self {
            Self::Bounded => "bounded",
            Self::Collapsing => "collapsing",
            Self::Indeterminate => "indeterminate",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanRow<T> {
    pub mu: T,
    /// λ_min for each entry of the nx list.
    pub lambdas: Vec<T>,
    pub class: SpectralClass,
}

/// Relative change that separates `bounded` from `collapsing`.
pub const SCAN_THRESHOLD: f64 = 0.1;

/// Classifies a λ_min sequence over increasing nx.
pub fn classify_spectrum<T: Real>(lambdas: &[T]) -> SpectralClass {
    let tol = T::lit(SCAN_THRESHOLD);
    let rel = |a: T, b: T| (b - a) / a.abs().max(T::min_positive_value());
    if lambdas.len() < 2 {
        return SpectralClass::Indeterminate;
    }
    let collapsing = lambdas.windows(2).all(|w| rel(w[0], w[1]) <= -tol);
    if collapsing {
        return SpectralClass::Collapsing;
    }
    let n = lambdas.len();
    if rel(lambdas[n - 2], lambdas[n - 1]).abs() < tol {
        SpectralClass::Bounded
    } else {
        SpectralClass::Indeterminate
    }
}

/// `spectral_bottom` over a μ × nx table, one classification per μ.
pub fn supercritical_scan<T: Real>(mus: &[T], nxs: &[usize]) -> Result<Vec<ScanRow<T>>> {
    if nxs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parameter("nx list must be strictly increasing".into()));
    }
    mus.iter()
        .map(|&mu| {
            let lambdas = nxs
                .iter()
                .map(|&nx| spectral_bottom(mu, nx))
                .collect::<Result<Vec<_>>>()?;
            let class = classify_spectrum(&lambdas);
            Ok(ScanRow { mu, lambdas, class })
        })
        .collect()
}

/// Shipped Hardy test family, vanishing at both ends.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HardyTestFunction {
    Parabola,
    Sine,
    /// x^0.6 (1 − x), close to the Hardy extremal profile near 0
    NearExtremal,
    /// x^1.5 (1 − x)²
    Flat,
    /// sin(πx)·sin(3πx)
    Oscillating,
}

impl HardyTestFunction {
    pub const ALL: [Self; 5] = [
        Self::Parabola,
        Self::Sine,
        Self::NearExtremal,
        Self::Flat,
        Self::Oscillating,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Parabola => "parabola",
            Self::Sine => "sine",
            Self::NearExtremal => "near_extremal",
            Self::Flat => "flat",
            Self::Oscillating => "oscillating",
        }
    }

    pub fn eval<T: Real>(self, x: T) -> T {
        let one = T::one();
        let pi = T::PI();
        match self {
            Self::Parabola => x * (one - x),
            Self::Sine => (pi * x).sin(),
            Self::NearExtremal => x.powf(T::lit(0.6)) * (one - x),
            Self::Flat => x.powf(T::lit(1.5)) * (one - x) * (one - x),
            Self::Oscillating => (pi * x).sin() * (T::lit(3.0) * pi * x).sin(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HardyRow<T> {
    pub function: HardyTestFunction,
    pub nx: usize,
    pub ratio: T,
    /// `1 + 5h`
    pub bound: T,
    pub passed: bool,
}

/// Discrete Hardy ratio of every shipped test function at every `nx`.
pub fn hardy_check<T: Real>(nxs: &[usize]) -> Result<Vec<HardyRow<T>>> {
    let mut rows = Vec::new();
    for &nx in nxs {
        let grid = SpaceTimeGrid::new(
            nx,
            1,
            T::one(),
            Interval::new(T::lit(0.25), T::lit(0.75)),
            Interval::new(T::lit(0.375), T::lit(0.625)),
        )?;
        let bound = T::one() + T::lit(5.0) * grid.h();
        for f in HardyTestFunction::ALL {
            let y: Vec<T> = grid.nodes().into_iter().map(|x| f.eval(x)).collect();
            let ratio = discrete_hardy_ratio(&y, &grid)?;
            rows.push(HardyRow {
                function: f,
                nx,
                ratio,
                bound,
                passed: ratio <= bound,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> SpaceTimeGrid<f64> {
        SpaceTimeGrid::new(n, n, 1.0, Interval::new(0.3, 0.8), Interval::new(0.4, 0.7)).unwrap()
    }

    #[test]
    fn improved_hp_for_parabola() {
        // ∫x(1−2x)² = 1/6, ∫x²(1−2x)² = 2/15, Hardy defect 1/3 − 1/12 = 1/4
        let f = |x: f64| x * (1.0 - x);
        let e1 = improved_hp_constant(1.0, &[&f], 4000).unwrap();
        let e2 = improved_hp_constant(2.0, &[&f], 4000).unwrap();
        assert!((e1.constant - 2.0 / 3.0).abs() < 1e-3, "{}", e1.constant);
        assert!((e2.constant - 8.0 / 15.0).abs() < 1e-3, "{}", e2.constant);
        assert!(e2.constant < e1.constant);
    }

    #[test]
    fn improved_hp_rejects_zero() {
        let zero = |_: f64| 0.0;
        let par = |x: f64| x * (1.0 - x);
        assert!(matches!(
            improved_hp_constant(1.0, &[&zero], 100),
            Err(Error::UndefinedInput(_))
        ));
        let e = improved_hp_constant(1.0, &[&zero, &par], 100).unwrap();
        assert_eq!(e.excluded, vec![0]);
        assert!(improved_hp_constant(0.0, &[&par], 100).is_err());
    }

    #[test]
    fn zero_data_gives_zero_ratio() {
        let g = grid(12);
        let p = WeightParams::theory();
        for form in [CarlemanForm::Standard, CarlemanForm::Modified] {
            let r = carleman_ratio(&p, form, None, &[0.0; 12], &g, 1.0 / 16.0).unwrap();
            assert_eq!(r.ratio, 0.0);
            assert_eq!(r.lhs_log, f64::NEG_INFINITY);
        }
        let c = caccioppoli_ratio(&p, Interval::new(0.45, 0.6), CaccioppoliWeight::Psi, None, &[0.0; 12], &g, 1.0 / 16.0)
            .unwrap();
        assert_eq!(c.ratio, 0.0);
    }

    #[test]
    fn window_must_be_inside_half() {
        let g = grid(8);
        let p = WeightParams::theory();
        for eps in [0.0, 0.5, -0.1] {
            assert!(matches!(
                carleman_ratio(&p, CarlemanForm::Standard, None, &[1.0; 8], &g, eps),
                Err(Error::Parameter(_))
            ));
        }
    }

    #[test]
    fn power_of_two_scaling_is_exact() {
        let g = grid(16);
        let p = WeightParams::theory().with_s(0.01);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (src, zt) = random_adjoint_data(&g, &mut rng);
        let mut src2 = src.clone();
        src2.scale(2.0);
        let zt2: Vec<f64> = zt.iter().map(|v| 2.0 * v).collect();
        for form in [CarlemanForm::Standard, CarlemanForm::Modified] {
            let a = carleman_ratio(&p, form, Some(&src), &zt, &g, 1.0 / 16.0).unwrap();
            let b = carleman_ratio(&p, form, Some(&src2), &zt2, &g, 1.0 / 16.0).unwrap();
            assert_eq!(a.ratio, b.ratio);
            assert!((b.lhs_log - a.lhs_log - 4f64.ln()).abs() < 1e-9);
        }
        let w = Interval::new(0.45, 0.65);
        let a = caccioppoli_ratio(&p, w, CaccioppoliWeight::CapPsi, Some(&src), &zt, &g, 1.0 / 16.0).unwrap();
        let b = caccioppoli_ratio(&p, w, CaccioppoliWeight::CapPsi, Some(&src2), &zt2, &g, 1.0 / 16.0).unwrap();
        assert_eq!(a.ratio, b.ratio);
    }

    #[test]
    fn standard_lhs_dominates_its_x2_term() {
        let g = grid(16);
        let p = WeightParams::theory();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let (src, zt) = random_adjoint_data(&g, &mut rng);
            let r = carleman_ratio(&p, CarlemanForm::Standard, Some(&src), &zt, &g, 1.0 / 16.0).unwrap();
            assert!(r.lhs_log >= r.term("x2_term").unwrap());
            assert!(r.ratio.is_finite());
        }
    }

    #[test]
    fn critical_form_has_three_terms() {
        let g = grid(12);
        let p = WeightParams::theory().with_mu(0.25);
        let r = carleman_ratio(&p, CarlemanForm::Standard, None, &[1.0; 12], &g, 1.0 / 16.0).unwrap();
        assert!(r.term("gradient_eta").is_some());
        assert!(r.term("inverse_square").is_none());
        let bad = WeightParams::theory().with_mu(0.3);
        assert!(carleman_ratio(&bad, CarlemanForm::Standard, None, &[1.0; 12], &g, 1.0 / 16.0).is_err());
    }

    #[test]
    fn caccioppoli_shrinking_subset() {
        let g = grid(32);
        let p = WeightParams::theory().with_s(0.01);
        let zt = crate::profiles::sine(&g);
        let mut prev = f64::INFINITY;
        for half in [0.12, 0.08, 0.04, 0.02] {
            let w = Interval::new(0.55 - half, 0.55 + half);
            let r = caccioppoli_ratio(&p, w, CaccioppoliWeight::Psi, None, &zt, &g, 1.0 / 16.0).unwrap();
            let lhs = r.lhs_log;
            assert!(lhs <= prev);
            prev = lhs;
        }
        let outside = Interval::new(0.35, 0.6);
        assert!(caccioppoli_ratio(&p, outside, CaccioppoliWeight::Psi, None, &zt, &g, 1.0 / 16.0).is_err());
    }

    #[test]
    fn suite_is_seed_deterministic() {
        let g = grid(12);
        let p = WeightParams::theory();
        let a = carleman_suite(&p, CarlemanForm::Standard, &g, 3, 42).unwrap();
        let b = carleman_suite(&p, CarlemanForm::Standard, &g, 3, 42).unwrap();
        assert_eq!(a, b);
        let c = carleman_suite(&p, CarlemanForm::Standard, &g, 3, 43).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn classification_rules() {
        assert_eq!(classify_spectrum(&[9.9, 9.87, 9.869]), SpectralClass::Bounded);
        assert_eq!(classify_spectrum(&[-1.0, -2.0, -4.0]), SpectralClass::Collapsing);
        assert_eq!(classify_spectrum(&[5.0, 4.8, 3.0]), SpectralClass::Indeterminate);
        assert_eq!(classify_spectrum::<f64>(&[1.0]), SpectralClass::Indeterminate);
    }

    #[test]
    fn laplacian_scan_is_bounded_near_pi_squared() {
        let rows = supercritical_scan(&[0.0], &[50, 100, 200]).unwrap();
        assert_eq!(rows[0].class, SpectralClass::Bounded);
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((rows[0].lambdas[2] - pi2).abs() < 1e-2);
        assert!(supercritical_scan::<f64>(&[0.0], &[100, 50]).is_err());
    }

    #[test]
    fn hardy_family_respects_bound() {
        for row in hardy_check::<f64>(&[50, 100]).unwrap() {
            assert!(row.passed, "{:?}", row);
        }
    }
}
