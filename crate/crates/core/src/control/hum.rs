use super::ControlResult;
use crate::discretization::SpaceTimeGrid;
use crate::error::{Error, Result};
use crate::evolve::{forward_solve, CnStepper, PdeProblem};
use crate::field::Field;
use crate::linalg::{conjugate_gradient, CgOptions};
use crate::real::Real;
use crate::weights::WeightParams;

/// Control-weight ρ used by penalized HUM.
#[derive(Clone, Debug, PartialEq)]
pub enum WeightMode<T> {
    /// ρ ≡ 1
    Uniform,
    /// ρ = s³ν³e^{2sΦ̃}, divided by its maximum over the grid.
    Paper(WeightParams<T>),
}

/// Nodal ρ (already masked to ω) and the log of the normalization factor.
fn control_weights<T: Real>(mode: &WeightMode<T>, grid: &SpaceTimeGrid<T>) -> Result<(Field<T>, T)> {
    let mask = grid.omega_mask();
    match mode {
        WeightMode::Uniform => Ok((
            Field::from_fn(grid.nt + 1, grid.nx, |_, i| mask[i]),
            T::zero(),
        )),
        WeightMode::Paper(p) => {
            if p.t_final != grid.t_final {
                return Err(Error::Parameter(format!(
                    "weight horizon {} differs from grid horizon {}",
                    p.t_final, grid.t_final
                )));
            }
            let logs = Field::from_fn(grid.nt + 1, grid.nx, |n, i| {
                if mask[i] == T::zero() {
                    T::neg_infinity()
                } else {
                    p.log_control_weight(grid.time(n), grid.x(i))
                }
            });
            let top = logs.as_slice().iter().copied().fold(T::neg_infinity(), T::max);
            if !top.is_finite() {
                return Err(Error::InfeasibleWeights {
                    span: f64::INFINITY,
                    limit: (-T::log_min_positive()).as_f64(),
                });
            }
            let mut w = logs;
            w.as_mut_slice().iter_mut().for_each(|l| *l = (*l - top).exp());
            Ok((w, top))
        }
    }
}

/// Terminal-data-to-control map `zT ↦ ρ·G*zT` and control-to-terminal-state map `G`,
/// both exact transposes of the CN scheme with trapezoidal weights in time.
struct HumOperator<'a, T> {
    grid: &'a SpaceTimeGrid<T>,
    stepper: CnStepper<T>,
    rho: &'a Field<T>,
}

impl<T: Real> HumOperator<'_, T> {
    /// `ρ·G*zT`: with `sⁿ = (KB)^{N−1−n} zT`, level forcing maps are `pⁿ = K sⁿ`
    /// except `p⁰ = ¼(Q + … + Q⁴) s⁰` for the damped first step.
    fn control_from(&mut self, z_terminal: &[T]) -> Field<T> {
        let (nt, nx) = (self.grid.nt, self.grid.nx);
        let half = T::lit(0.5);
        let mut u = Field::zeros(nt + 1, nx);
        let mut s = z_terminal.to_vec();
        let mut next = vec![T::zero(); nx];
        let mut p = vec![T::zero(); nx];
        for n in (0..nt).rev() {
            p.copy_from_slice(&s);
            if n == 0 {
                self.stepper.startup_forcing(&mut p);
            } else {
                self.stepper.solve(&mut p);
            }
            // pⁿ feeds levels n and n + 1
            let wt_hi = if n + 1 == nt { T::one() } else { half };
            let wt_lo = if n == 0 { T::one() } else { half };
            for (i, &pi) in p.iter().enumerate() {
                u[(n + 1, i)] += wt_hi * pi;
                u[(n, i)] += wt_lo * pi;
            }
            if n > 0 {
                self.stepper.step(&s, None, &mut next);
                std::mem::swap(&mut s, &mut next);
            }
        }
        for (v, &r) in u.as_mut_slice().iter_mut().zip(self.rho.as_slice()) {
            *v *= r;
        }
        u
    }

    /// `G u`: terminal state from zero data under control `u`.
    fn terminal_from(&mut self, u: &Field<T>) -> Vec<T> {
        let nx = self.grid.nx;
        let half_dt = self.grid.dt() * T::lit(0.5);
        let mask = self.grid.omega_mask();
        let mut y = vec![T::zero(); nx];
        let mut next = vec![T::zero(); nx];
        let mut rhs = vec![T::zero(); nx];
        for n in 0..self.grid.nt {
            for (i, r) in rhs.iter_mut().enumerate() {
                *r = half_dt * mask[i] * (u[(n, i)] + u[(n + 1, i)]);
            }
            if n == 0 {
                self.stepper.startup_step(&y, Some(&rhs), &mut next);
            } else {
                self.stepper.step(&y, Some(&rhs), &mut next);
            }
            std::mem::swap(&mut y, &mut next);
        }
        y
    }
}

/// Penalized HUM: minimizes `½‖ρ^{1/2}G*zT‖² + (ε/2)‖zT‖² + ⟨b, zT⟩` over terminal
/// adjoint data, `b` being the uncontrolled terminal state, by conjugate gradients.
///
/// The memory term must already be folded into the source.
pub fn penalized_hum<T: Real>(
    prob: &PdeProblem<T>,
    epsilon: T,
    mode: &WeightMode<T>,
    cg: &CgOptions<T>,
) -> Result<ControlResult<T>> {
    if !(epsilon > T::zero()) {
        return Err(Error::Parameter(format!("penalty ε = {epsilon} must be positive")));
    }
    if prob.mu > T::lit(0.25) {
        return Err(Error::Parameter(format!(
            "control synthesis needs μ ≤ 1/4 (got {})",
            prob.mu
        )));
    }
    if prob.active_kernel().is_some() {
        return Err(Error::Parameter(
            "penalized HUM takes the memory term as a source; use memory_fixed_point".into(),
        ));
    }
    let grid = &prob.grid;
    let free = forward_solve(prob, None)?;
    if let Some(b) = free.blow_up {
        return Err(Error::Solver(format!(
            "uncontrolled solve overflowed at level {}",
            b.time_index
        )));
    }
    let b = free.terminal().to_vec();
    let (rho, log_scale) = control_weights(mode, grid)?;
    let mut op = HumOperator {
        grid,
        stepper: CnStepper::new(prob.mu, grid)?,
        rho: &rho,
    };

    // unit right-hand side, so data scaled by α runs the identical CG sequence
    let b_norm = b.iter().map(|&v| v * v).sum::<T>().sqrt();
    let inv = if b_norm > T::zero() { T::one() / b_norm } else { T::zero() };
    let rhs: Vec<T> = b.iter().map(|&v| -v * inv).collect();
    let mut outcome = conjugate_gradient(
        |z, out| {
            let u = op.control_from(z);
            let y = op.terminal_from(&u);
            for ((o, &yi), &zi) in out.iter_mut().zip(&y).zip(z) {
                *o = yi + epsilon * zi;
            }
        },
        &rhs,
        None,
        cg,
    )?;
    outcome.x.iter_mut().for_each(|v| *v *= b_norm);
    let u = op.control_from(&outcome.x);

    let y = forward_solve(prob, Some(&u))?;
    let terminal_norm = grid.l2_norm(y.terminal());

    // ½‖u‖²_{ρ⁻¹} + ‖y(T)‖²/(2ε), trapezoidal in time
    let dt = grid.dt();
    let h = grid.h();
    let mut control_cost = T::zero();
    for n in 0..=grid.nt {
        let wt = if n == 0 || n == grid.nt { T::lit(0.5) } else { T::one() };
        for i in 0..grid.nx {
            let r = rho[(n, i)];
            if r > T::zero() {
                control_cost += wt * dt * h * u[(n, i)] * u[(n, i)] / r;
            }
        }
    }
    let weighted_cost =
        T::lit(0.5) * control_cost + terminal_norm * terminal_norm / (T::lit(2.0) * epsilon);

    Ok(ControlResult {
        u,
        initial_norm: grid.l2_norm(&prob.y0),
        terminal_norm,
        y,
        cg_iterations: outcome.iterations,
        residual: outcome.residual,
        weighted_cost,
        log_weight_scale: log_scale,
        converged: true,
    })
}
