//! Crank–Nicolson time stepping for the forward and adjoint singular heat equations.

use crate::discretization::{
    assemble_operator, BlowUp, SpaceTimeGrid, Trajectory, TrajectoryKind,
};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::linalg::{TridiagonalLu, TridiagonalMatrix};
use crate::real::Real;
use crate::weights::MemoryKernel;

/// `y_t − y_xx − μ/x² y = f + ∫₀ᵗ a y ds + 1_ω u` on the grid, `y(0) = y0`.
#[derive(Clone, Debug, PartialEq)]
pub struct PdeProblem<T> {
    pub mu: T,
    pub grid: SpaceTimeGrid<T>,
    pub y0: Vec<T>,
    /// Nodal source, `nt + 1` rows.
    pub source: Option<Field<T>>,
    pub kernel: Option<MemoryKernel<T>>,
}

impl<T: Real> PdeProblem<T> {
    pub fn new(mu: T, grid: SpaceTimeGrid<T>, y0: Vec<T>) -> Result<Self> {
        if y0.len() != grid.nx {
            return Err(Error::Parameter(format!(
                "initial data has {} values for nx = {}",
                y0.len(),
                grid.nx
            )));
        }
        Ok(Self {
            mu,
            grid,
            y0,
            source: None,
            kernel: None,
        })
    }

    pub fn with_source(mut self, f: Field<T>) -> Result<Self> {
        check_field_shape(&f, &self.grid, "source")?;
        self.source = Some(f);
        Ok(self)
    }

    pub fn with_kernel(mut self, kernel: MemoryKernel<T>) -> Self {
        self.kernel = Some(kernel);
        self
    }

    pub fn t_final(&self) -> T {
        self.grid.t_final
    }

    /// Kernel unless absent or identically zero.
    pub(crate) fn active_kernel(&self) -> Option<&MemoryKernel<T>> {
        self.kernel.as_ref().filter(|k| !k.is_zero())
    }
}

pub(crate) fn check_field_shape<T: Real>(f: &Field<T>, grid: &SpaceTimeGrid<T>, what: &str) -> Result<()> {
    if f.rows() != grid.nt + 1 || f.cols() != grid.nx {
        return Err(Error::Parameter(format!(
            "{what} field is {}×{}, grid needs {}×{}",
            f.rows(),
            f.cols(),
            grid.nt + 1,
            grid.nx
        )));
    }
    Ok(())
}

/// Quarter steps of implicit Euler that replace the first CN step.
pub(crate) const STARTUP_SUBSTEPS: usize = 4;

/// Factored CN pair `K = (I + δt/2·A)⁻¹`, `B = I − δt/2·A`, plus the implicit
/// Euler factor `Q = (I + δt/4·A)⁻¹` for the damped start that keeps
/// nonsmooth data from ringing. All of them are functions of A and commute.
pub(crate) struct CnStepper<T> {
    implicit: TridiagonalLu<T>,
    explicit: TridiagonalMatrix<T>,
    startup: TridiagonalLu<T>,
    scratch: Vec<T>,
}

impl<T: Real> CnStepper<T> {
    pub(crate) fn new(mu: T, grid: &SpaceTimeGrid<T>) -> Result<Self> {
        let a = assemble_operator(mu, grid);
        let half_dt = grid.dt() / T::lit(2.0);
        let sub_dt = grid.dt() / T::from_usize_lossy(STARTUP_SUBSTEPS);
        Ok(Self {
            implicit: a.shifted(T::one(), half_dt).factor()?,
            explicit: a.shifted(T::one(), -half_dt),
            startup: a.shifted(T::one(), sub_dt).factor()?,
            scratch: vec![T::zero(); grid.nx],
        })
    }

    /// `out = K·(B·prev + rhs)`
    pub(crate) fn step(&mut self, prev: &[T], rhs: Option<&[T]>, out: &mut [T]) {
        self.explicit.apply(prev, &mut self.scratch);
        if let Some(r) = rhs {
            self.scratch.iter_mut().zip(r).for_each(|(s, &v)| *s += v);
        }
        out.copy_from_slice(&self.scratch);
        self.implicit.solve_in_place(out);
    }

    /// Damped first step: `out = Q⁴·prev + ¼(Q + Q² + Q³ + Q⁴)·rhs`.
    pub(crate) fn startup_step(&self, prev: &[T], rhs: Option<&[T]>, out: &mut [T]) {
        let share = T::one() / T::from_usize_lossy(STARTUP_SUBSTEPS);
        out.copy_from_slice(prev);
        for _ in 0..STARTUP_SUBSTEPS {
            if let Some(r) = rhs {
                out.iter_mut().zip(r).for_each(|(o, &v)| *o += share * v);
            }
            self.startup.solve_in_place(out);
        }
    }

    /// `v ← K·v`
    pub(crate) fn solve(&self, v: &mut [T]) {
        self.implicit.solve_in_place(v);
    }

    /// `v ← ¼(Q + Q² + Q³ + Q⁴)·v`, the forcing map of the damped step.
    pub(crate) fn startup_forcing(&self, v: &mut [T]) {
        let share = T::one() / T::from_usize_lossy(STARTUP_SUBSTEPS);
        let mut power = v.to_vec();
        v.iter_mut().for_each(|x| *x = T::zero());
        for _ in 0..STARTUP_SUBSTEPS {
            self.startup.solve_in_place(&mut power);
            v.iter_mut().zip(&power).for_each(|(x, &p)| *x += share * p);
        }
    }
}

fn blow_up_limit<T: Real>() -> T {
    T::max_value().sqrt()
}

/// Forward Crank–Nicolson solve. `control` is masked to ω before use.
///
/// The first step is taken as four implicit Euler quarter steps (Rannacher
/// start), so rough initial data are damped instead of ringing. The memory integral is explicit: its midpoint value is extrapolated from the
/// two latest levels. Overflow stops the march and is recorded in `blow_up`.
pub fn forward_solve<T: Real>(prob: &PdeProblem<T>, control: Option<&Field<T>>) -> Result<Trajectory<T>> {
    let grid = &prob.grid;
    if let Some(u) = control {
        check_field_shape(u, grid, "control")?;
    }
    if let Some(f) = &prob.source {
        check_field_shape(f, grid, "source")?;
    }
    let nx = grid.nx;
    let dt = grid.dt();
    let half = T::lit(0.5);
    let mask = grid.omega_mask();
    let mut stepper = CnStepper::new(prob.mu, grid)?;
    let mut traj = Trajectory::zeros(grid, TrajectoryKind::State);
    traj.values.row_mut(0).copy_from_slice(&prob.y0);
    let kernel = prob.active_kernel();

    // running trapezoid ∫₀^{tₙ} y ds and the memory values at the last two levels
    let mut history = vec![T::zero(); nx];
    let mut mem_prev = vec![T::zero(); nx];
    let mut mem_curr = vec![T::zero(); nx];
    let mut rhs = vec![T::zero(); nx];
    let mut next = vec![T::zero(); nx];
    let has_forcing = control.is_some() || prob.source.is_some() || kernel.is_some();

    for n in 0..grid.nt {
        rhs.iter_mut().for_each(|r| *r = T::zero());
        if let Some(f) = &prob.source {
            for ((r, &a), &b) in rhs.iter_mut().zip(f.row(n)).zip(f.row(n + 1)) {
                *r += half * dt * (a + b);
            }
        }
        if let Some(u) = control {
            for (((r, &a), &b), &m) in rhs.iter_mut().zip(u.row(n)).zip(u.row(n + 1)).zip(mask) {
                *r += half * dt * m * (a + b);
            }
        }
        if let Some(k) = kernel {
            if n == 0 {
                let a = k.eval(half * dt, T::zero(), T::zero());
                for (r, &y) in rhs.iter_mut().zip(&prob.y0) {
                    *r += dt * a * half * dt * y;
                }
            } else {
                for ((r, &c), &p) in rhs.iter_mut().zip(&mem_curr).zip(&mem_prev) {
                    *r += dt * half * (T::lit(3.0) * c - p);
                }
            }
        }
        let (done, rest) = traj.values.as_mut_slice().split_at_mut((n + 1) * nx);
        let prev = &done[n * nx..];
        let forcing = has_forcing.then_some(rhs.as_slice());
        if n == 0 {
            stepper.startup_step(prev, forcing, &mut next);
        } else {
            stepper.step(prev, forcing, &mut next);
        }

        let max_abs = next.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if !max_abs.is_finite() || max_abs > blow_up_limit() {
            traj.blow_up = Some(BlowUp {
                time_index: n + 1,
                max_value: max_abs.as_f64(),
            });
            return Ok(traj);
        }
        if let Some(k) = kernel {
            for ((hst, &a), &b) in history.iter_mut().zip(prev).zip(&next) {
                *hst += half * dt * (a + b);
            }
            let a = k.eval(grid.time(n + 1), T::zero(), T::zero());
            std::mem::swap(&mut mem_prev, &mut mem_curr);
            mem_curr.iter_mut().zip(&history).for_each(|(m, &hv)| *m = a * hv);
        }
        rest[..nx].copy_from_slice(&next);
    }
    Ok(traj)
}

/// Backward Crank–Nicolson for `−z_t − z_xx − μ/x² z = g`, `z(T) = zT`, with the
/// damped start on the first backward step.
pub fn adjoint_solve<T: Real>(
    g: Option<&Field<T>>,
    z_terminal: &[T],
    mu: T,
    grid: &SpaceTimeGrid<T>,
) -> Result<Trajectory<T>> {
    if z_terminal.len() != grid.nx {
        return Err(Error::Parameter(format!(
            "terminal data has {} values for nx = {}",
            z_terminal.len(),
            grid.nx
        )));
    }
    if let Some(g) = g {
        check_field_shape(g, grid, "adjoint source")?;
    }
    let nx = grid.nx;
    let dt = grid.dt();
    let half = T::lit(0.5);
    let mut stepper = CnStepper::new(mu, grid)?;
    let mut traj = Trajectory::zeros(grid, TrajectoryKind::Adjoint);
    traj.values.row_mut(grid.nt).copy_from_slice(z_terminal);
    let mut rhs = vec![T::zero(); nx];
    let mut next = vec![T::zero(); nx];
    for n in (0..grid.nt).rev() {
        if let Some(g) = g {
            for ((r, &a), &b) in rhs.iter_mut().zip(g.row(n)).zip(g.row(n + 1)) {
                *r = half * dt * (a + b);
            }
        }
        let (head, tail) = traj.values.as_mut_slice().split_at_mut((n + 1) * nx);
        let forcing = g.map(|_| rhs.as_slice());
        if n + 1 == grid.nt {
            stepper.startup_step(&tail[..nx], forcing, &mut next);
        } else {
            stepper.step(&tail[..nx], forcing, &mut next);
        }
        head[n * nx..].copy_from_slice(&next);
    }
    Ok(traj)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyReport<T> {
    /// `maxₙ ‖y(tₙ)‖² + Σₙ ‖y(tₙ)‖²_μ δt`
    pub lhs: T,
    /// `‖y0‖² + ‖f‖²_{L²(Q)}`
    pub rhs_data: T,
    /// `lhs / rhs_data`; zero when both vanish, `+∞` on a violation.
    pub ratio: T,
    /// Data vanish but the trajectory does not.
    pub violation: bool,
}

/// `Σ ((yᵢ₊₁ − yᵢ)/h)² h − μ Σ yᵢ²/xᵢ² h` with zero boundary values.
pub fn mu_norm_squared<T: Real>(y: &[T], mu: T, grid: &SpaceTimeGrid<T>) -> T {
    let h = grid.h();
    let mut grad = T::zero();
    let mut prev = T::zero();
    for &v in y.iter().chain(std::iter::once(&T::zero())) {
        let d = (v - prev) / h;
        grad += d * d;
        prev = v;
    }
    let pot: T = y
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let x = grid.x(i);
            v * v / (x * x)
        })
        .sum();
    h * (grad - mu * pot)
}

/// Discrete form of the a-priori energy bound for an uncontrolled trajectory.
pub fn energy_check<T: Real>(traj: &Trajectory<T>, prob: &PdeProblem<T>) -> EnergyReport<T> {
    let grid = &traj.grid;
    let dt = grid.dt();
    let mut peak = T::zero();
    let mut dissipation = T::zero();
    for n in 0..=grid.nt {
        let y = traj.at(n);
        let l2 = grid.l2_norm(y);
        peak = peak.max(l2 * l2);
        if n > 0 {
            dissipation += dt * mu_norm_squared(y, prob.mu, grid);
        }
    }
    let lhs = peak + dissipation;
    let y0 = grid.l2_norm(&prob.y0);
    let mut f_sq = T::zero();
    if let Some(f) = &prob.source {
        for n in 0..=grid.nt {
            let w = if n == 0 || n == grid.nt { T::lit(0.5) } else { T::one() };
            let l2 = grid.l2_norm(f.row(n));
            f_sq += w * dt * l2 * l2;
        }
    }
    let rhs_data = y0 * y0 + f_sq;
    let tol = T::epsilon() * T::lit(16.0);
    let (ratio, violation) = if rhs_data > T::zero() {
        (lhs / rhs_data, false)
    } else if lhs > tol {
        (T::infinity(), true)
    } else {
        (T::zero(), false)
    };
    EnergyReport {
        lhs,
        rhs_data,
        ratio,
        violation,
    }
}

/// `∫₀^{tₙ} w ds` per node, for every level.
pub(crate) fn cumulative_history<T: Real>(w: &Field<T>, dt: T) -> Field<T> {
    let mut out = Field::zeros(w.rows(), w.cols());
    for n in 1..w.rows() {
        let (done, rest) = out.as_mut_slice().split_at_mut(n * w.cols());
        let prev = &done[(n - 1) * w.cols()..];
        for (((o, &p), &a), &b) in rest[..w.cols()]
            .iter_mut()
            .zip(prev)
            .zip(w.row(n - 1))
            .zip(w.row(n))
        {
            *o = p + T::lit(0.5) * dt * (a + b);
        }
    }
    out
}

/// Memory source `a(tₙ)·∫₀^{tₙ} w ds` on every level.
pub fn memory_source<T: Real>(kern: &MemoryKernel<T>, w: &Field<T>, grid: &SpaceTimeGrid<T>) -> Field<T> {
    let mut out = cumulative_history(w, grid.dt());
    for n in 0..out.rows() {
        let a = kern.eval(grid.time(n), T::zero(), T::zero());
        out.row_mut(n).iter_mut().for_each(|v| *v *= a);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::Interval;
    use crate::profiles;
    use approx::assert_relative_eq;

    fn grid(nx: usize, nt: usize, t: f64) -> SpaceTimeGrid<f64> {
        SpaceTimeGrid::new(nx, nt, t, Interval::new(0.3, 0.8), Interval::new(0.4, 0.7)).unwrap()
    }

    #[test]
    fn zero_data_stays_zero() {
        let g = grid(20, 20, 1.0);
        let p = PdeProblem::new(0.2, g.clone(), vec![0.0; 20]).unwrap();
        assert!(forward_solve(&p, None).unwrap().values.is_zero());
        assert!(adjoint_solve(None, &[0.0; 20], 0.2, &g).unwrap().values.is_zero());
    }

    #[test]
    fn sine_decay_is_second_order() {
        let err = |n: usize| {
            let g = grid(n, n, 0.5);
            let y0 = profiles::sine(&g);
            let p = PdeProblem::new(0.0, g.clone(), y0.clone()).unwrap();
            let y = forward_solve(&p, None).unwrap();
            let decay = (-std::f64::consts::PI.powi(2) * 0.5).exp();
            let exact: Vec<f64> = y0.iter().map(|v| v * decay).collect();
            let diff: Vec<f64> = y.terminal().iter().zip(&exact).map(|(a, b)| a - b).collect();
            g.l2_norm(&diff) / g.l2_norm(&exact)
        };
        let (e1, e2) = (err(32), err(64));
        assert!(e1 / e2 > 3.5, "{e1} {e2}");
    }

    #[test]
    fn adjoint_sine_decay() {
        let g = grid(64, 64, 0.1);
        let zt = profiles::sine(&g);
        let z = adjoint_solve(None, &zt, 0.0, &g).unwrap();
        let decay = (-std::f64::consts::PI.powi(2) * 0.1).exp();
        for (a, b) in z.initial().iter().zip(&zt) {
            assert!((a - b * decay).abs() < 1e-3);
        }
    }

    #[test]
    fn energy_of_zero_data() {
        let g = grid(10, 10, 1.0);
        let p = PdeProblem::new(0.0, g, vec![0.0; 10]).unwrap();
        let y = forward_solve(&p, None).unwrap();
        let r = energy_check(&y, &p);
        assert_eq!(r.lhs, 0.0);
        assert!(!r.violation);
    }

    #[test]
    fn energy_ratio_matches_eigen_decay() {
        let t = 0.01;
        let g = grid(64, 64, t);
        let p = PdeProblem::new(0.0, g.clone(), profiles::sine(&g)).unwrap();
        let r = energy_check(&forward_solve(&p, None).unwrap(), &p);
        let exact = 1.0 + (1.0 - (-2.0 * std::f64::consts::PI.powi(2) * t).exp()) / 2.0;
        assert!(r.ratio <= 1.1);
        assert_relative_eq!(r.ratio, exact, max_relative = 1e-2);
    }

    #[test]
    fn supercritical_blow_up_is_reported() {
        // strongly supercritical: the bottom eigenvalue is about −10⁵
        let g = grid(50, 5000, 0.01);
        let p = PdeProblem::new(40.0, g.clone(), profiles::sine(&g)).unwrap();
        let y = forward_solve(&p, None).unwrap();
        let b = y.blow_up.expect("blow-up expected");
        assert!(b.time_index < 5000);
        assert!(y.at(b.time_index).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn memory_source_matches_quadrature() {
        let g = grid(6, 12, 1.0);
        let k = MemoryKernel::decay_exp(1.5, 0.2, 3.0, 1.0);
        let w = Field::from_fn(13, 6, |n, i| ((n * 7 + i) as f64).cos());
        let s = memory_source(&k, &w, &g);
        let traj = Trajectory::new(w, g.clone(), TrajectoryKind::Free);
        for n in 0..=12 {
            let q = crate::discretization::memory_quadrature(&k, &traj, n);
            for (a, b) in s.row(n).iter().zip(&q) {
                assert_relative_eq!(a, b, max_relative = 1e-12, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn memory_term_changes_the_solution() {
        let g = grid(20, 40, 1.0);
        let y0 = profiles::sine(&g);
        let plain = PdeProblem::new(0.0, g.clone(), y0.clone()).unwrap();
        let with = plain.clone().with_kernel(MemoryKernel::constant(5.0));
        let a = forward_solve(&plain, None).unwrap();
        let b = forward_solve(&with, None).unwrap();
        // positive kernel feeds mass back in
        assert!(g.l2_norm(b.terminal()) > g.l2_norm(a.terminal()));
    }

    #[test]
    fn memory_scheme_converges() {
        // y' = −λy + a∫y with λ = π², single mode; reference from a fine run
        let terminal = |nt: usize| {
            let g = grid(15, nt, 0.5);
            let p = PdeProblem::new(0.0, g.clone(), profiles::sine(&g))
                .unwrap()
                .with_kernel(MemoryKernel::constant(20.0));
            forward_solve(&p, None).unwrap().terminal()[7]
        };
        let reference = terminal(2560);
        let e1 = (terminal(40) - reference).abs();
        let e2 = (terminal(80) - reference).abs();
        assert!(e1 / e2 > 3.0, "{e1} {e2}");
    }
}
