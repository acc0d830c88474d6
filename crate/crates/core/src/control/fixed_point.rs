use super::{penalized_hum, weighted_variational_control, ControlResult, WeightMode};
use crate::discretization::{SpaceTimeGrid, Trajectory, TrajectoryKind};
use crate::error::{Error, Result};
use crate::evolve::{forward_solve, memory_source, PdeProblem};
use crate::field::Field;
use crate::linalg::CgOptions;
use crate::real::{LogAccumulator, Real};
use crate::weights::{kernel_admissibility, WeightParams};

/// Synthesis used for each memory-free subproblem.
#[derive(Clone, Debug, PartialEq)]
pub enum FixedPointMethod<T> {
    Hum {
        epsilon: T,
        mode: WeightMode<T>,
        cg: CgOptions<T>,
    },
    Variational {
        cg: CgOptions<T>,
    },
}

impl<T: Real> FixedPointMethod<T> {
    fn with_horizon(&self, t_final: T) -> Self {
        match self {
            FixedPointMethod::Hum {
                epsilon,
                mode: WeightMode::Paper(p),
                cg,
            } => FixedPointMethod::Hum {
                epsilon: *epsilon,
                mode: WeightMode::Paper(p.clone().with_horizon(t_final)),
                cg: cg.clone(),
            },
            other => other.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixedPointReport<T> {
    /// Number of control syntheses.
    pub iterations: usize,
    /// `‖e^{−sΦ̃}(wᵏ⁺¹ − wᵏ)‖ / ‖e^{−sΦ̃}wᵏ⁺¹‖` per synthesis, levels `0..nt`.
    pub diffs: Vec<T>,
    pub converged: bool,
    /// Largest `ln‖e^{−sΦ̃}wᵏ‖` seen, the monitored radius of the iterate ball.
    pub log_radius: T,
    /// Diffs never increased after the first one.
    pub monotone: bool,
    /// Kernel passed the admissibility test on this horizon.
    pub kernel_admissible: bool,
}

/// Log of the discrete weighted norm on levels `0..nt`, `e^{−sΦ̃}` being infinite at t = T.
fn log_weighted_norm<T: Real>(v: &Field<T>, p: &WeightParams<T>, grid: &SpaceTimeGrid<T>) -> T {
    let mut acc = LogAccumulator::new();
    for n in 0..grid.nt {
        let t = grid.time(n);
        for i in 0..grid.nx {
            let val = v[(n, i)];
            acc.push_weighted(val * val, -p.log_e2s_cap_phi_tilde(t, grid.x(i)));
        }
    }
    T::lit(0.5) * acc.value()
}

fn synthesize<T: Real>(prob: &PdeProblem<T>, p: &WeightParams<T>, method: &FixedPointMethod<T>) -> Result<ControlResult<T>> {
    match method {
        FixedPointMethod::Hum { epsilon, mode, cg } => penalized_hum(prob, *epsilon, mode, cg),
        FixedPointMethod::Variational { cg } => weighted_variational_control(prob, p, cg),
    }
}

/// Picard iteration on the memory term: `w⁰ = 0`, then control the memory-free
/// problem with source `f + a·∫₀ᵗ wᵏ ds` and take its trajectory as `wᵏ⁺¹`.
///
/// Running out of iterations is reported through `converged = false`.
pub fn memory_fixed_point<T: Real>(
    prob: &PdeProblem<T>,
    p: &WeightParams<T>,
    method: &FixedPointMethod<T>,
    tol: T,
    max_iter: usize,
) -> Result<(ControlResult<T>, FixedPointReport<T>)> {
    if max_iter == 0 {
        return Err(Error::Parameter("Picard iteration cap must be positive".into()));
    }
    let grid = &prob.grid;
    if p.t_final != grid.t_final {
        return Err(Error::Parameter(format!(
            "weight horizon {} differs from grid horizon {}",
            p.t_final, grid.t_final
        )));
    }
    let kernel = prob.active_kernel().cloned();
    let kernel_admissible = match &kernel {
        None => true,
        Some(k) => kernel_admissibility(k, p, grid).map(|r| r.admissible).unwrap_or(false),
    };
    let mut base = prob.clone();
    base.kernel = None;
    let base_source = prob.source.clone().unwrap_or_else(|| Field::zeros(grid.nt + 1, grid.nx));

    let mut w = Field::zeros(grid.nt + 1, grid.nx);
    let mut diffs = Vec::new();
    let mut log_radius = T::neg_infinity();
    let mut last = None;
    let mut converged = false;

    for _ in 0..max_iter {
        let mut sub = base.clone();
        if let Some(k) = &kernel {
            let mut f = memory_source(k, &w, grid);
            f.as_mut_slice()
                .iter_mut()
                .zip(base_source.as_slice())
                .for_each(|(a, &b)| *a += b);
            sub.source = Some(f);
        }
        let res = synthesize(&sub, p, method)?;
        let next = &res.y.values;
        if kernel.is_none() {
            // the map is constant, so its first value is the fixed point
            diffs.push(T::zero());
            log_radius = log_weighted_norm(next, p, grid);
            converged = true;
            last = Some(res);
            break;
        }
        let mut delta = next.clone();
        delta
            .as_mut_slice()
            .iter_mut()
            .zip(w.as_slice())
            .for_each(|(d, &old)| *d -= old);
        let log_next = log_weighted_norm(next, p, grid);
        let log_delta = log_weighted_norm(&delta, p, grid);
        let diff = if log_delta == T::neg_infinity() {
            T::zero()
        } else {
            (log_delta - log_next).exp()
        };
        log_radius = log_radius.max(log_next);
        diffs.push(diff);
        w = next.clone();
        last = Some(res);
        if diff <= tol {
            converged = true;
            break;
        }
    }
    let mut result = last.expect("at least one synthesis");
    result.converged = result.converged && converged;
    let monotone = diffs.windows(2).skip(1).all(|d| d[1] <= d[0]);
    Ok((
        result,
        FixedPointReport {
            iterations: diffs.len(),
            diffs,
            converged,
            log_radius,
            monotone,
            kernel_admissible,
        },
    ))
}

/// Free evolution on `[0, t0]` with the memory term, then the Picard controlled
/// problem on `[t0, T]` from the reached state. The memory integral restarts at t0.
/// `t0` defaults to T/4 and is rounded to the nearest time level.
#[allow(clippy::too_many_arguments)]
pub fn two_phase_control<T: Real>(
    prob: &PdeProblem<T>,
    p: &WeightParams<T>,
    method: &FixedPointMethod<T>,
    t0: Option<T>,
    tol: T,
    max_iter: usize,
) -> Result<(ControlResult<T>, FixedPointReport<T>)> {
    let grid = &prob.grid;
    let t_final = grid.t_final;
    let half = t_final / T::lit(2.0);
    let t0 = t0.unwrap_or(t_final / T::lit(4.0));
    if !(t0 > T::zero() && t0 < half) {
        return Err(Error::Parameter(format!(
            "switch time t0 = {t0} must lie in (0, T/2) = (0, {half})"
        )));
    }
    let n0 = (t0 / grid.dt()).round().to_usize().unwrap_or(0);
    if n0 == 0 || grid.time(n0) >= half {
        return Err(Error::Parameter(format!(
            "switch time t0 = {t0} does not fall on a level inside (0, T/2) with nt = {}",
            grid.nt
        )));
    }
    let t_switch = grid.time(n0);

    let head_grid = SpaceTimeGrid::new(grid.nx, n0, t_switch, grid.omega, grid.omega_prime)?;
    let mut head = PdeProblem::new(prob.mu, head_grid, prob.y0.clone())?;
    head.kernel = prob.kernel.clone();
    if let Some(f) = &prob.source {
        head.source = Some(Field::from_vec(
            n0 + 1,
            grid.nx,
            f.as_slice()[..(n0 + 1) * grid.nx].to_vec(),
        ));
    }
    let smoothed = forward_solve(&head, None)?;
    if let Some(b) = smoothed.blow_up {
        return Err(Error::Solver(format!(
            "free phase overflowed at level {}",
            b.time_index
        )));
    }

    let tail_grid = grid.tail_window(n0)?;
    let mut tail = PdeProblem::new(prob.mu, tail_grid.clone(), smoothed.terminal().to_vec())?;
    tail.kernel = prob.kernel.as_ref().map(|k| k.shifted(t_switch));
    if let Some(f) = &prob.source {
        tail.source = Some(Field::from_vec(
            tail_grid.nt + 1,
            grid.nx,
            f.as_slice()[n0 * grid.nx..].to_vec(),
        ));
    }
    let tail_params = p.clone().with_horizon(tail_grid.t_final);
    let (tail_res, report) = memory_fixed_point(
        &tail,
        &tail_params,
        &method.with_horizon(tail_grid.t_final),
        tol,
        max_iter,
    )?;

    let nx = grid.nx;
    let mut y = Field::zeros(grid.nt + 1, nx);
    y.as_mut_slice()[..(n0 + 1) * nx].copy_from_slice(smoothed.values.as_slice());
    y.as_mut_slice()[n0 * nx..].copy_from_slice(tail_res.y.values.as_slice());
    let mut u = Field::zeros(grid.nt + 1, nx);
    u.as_mut_slice()[n0 * nx..].copy_from_slice(tail_res.u.as_slice());

    Ok((
        ControlResult {
            u,
            y: Trajectory::new(y, grid.clone(), TrajectoryKind::State),
            initial_norm: grid.l2_norm(&prob.y0),
            ..tail_res
        },
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::verify_null;
    use crate::discretization::Interval;
    use crate::profiles;
    use crate::weights::MemoryKernel;

    fn problem(n: usize) -> PdeProblem<f64> {
        let g = SpaceTimeGrid::new(n, n, 1.0, Interval::new(0.3, 0.8), Interval::new(0.4, 0.7)).unwrap();
        let y0 = profiles::sine(&g);
        PdeProblem::new(0.2, g, y0).unwrap()
    }

    fn hum() -> FixedPointMethod<f64> {
        FixedPointMethod::Hum {
            epsilon: 1e-6,
            mode: WeightMode::Uniform,
            cg: CgOptions::default(),
        }
    }

    #[test]
    fn zero_kernel_converges_immediately() {
        let prob = problem(20).with_kernel(MemoryKernel::constant(0.0));
        let p = WeightParams::theory();
        let (res, rep) = memory_fixed_point(&prob, &p, &hum(), 1e-6, 10).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(rep.converged);
        let direct = penalized_hum(&problem(20), 1e-6, &WeightMode::Uniform, &CgOptions::default()).unwrap();
        assert_eq!(res.u, direct.u);
    }

    #[test]
    fn small_kernel_contracts() {
        let p = WeightParams::theory().with_s(1e-4);
        let k = MemoryKernel::decay_for(5.0, 4.0, &p);
        let prob = problem(20).with_kernel(k);
        let (res, rep) = memory_fixed_point(&prob, &p, &hum(), 1e-6, 20).unwrap();
        assert!(rep.converged, "{:?}", rep.diffs);
        assert!(rep.kernel_admissible);
        assert!(rep.iterations > 2);
        assert!(verify_null(&res, 1e-2));
        for d in rep.diffs.windows(2).skip(1) {
            assert!(d[1] < d[0]);
        }
    }

    #[test]
    fn two_phase_rough_data() {
        let g = SpaceTimeGrid::new(40, 40, 1.0, Interval::new(0.3, 0.8), Interval::new(0.4, 0.7)).unwrap();
        let y0 = profiles::step(&g);
        let p = WeightParams::theory().with_s(1e-4);
        let prob = PdeProblem::new(0.2, g, y0).unwrap().with_kernel(MemoryKernel::decay_for(5.0, 4.0, &p));
        let (res, rep) = two_phase_control(&prob, &p, &hum(), None, 1e-6, 20).unwrap();
        assert!(rep.converged);
        assert!(verify_null(&res, 1e-2), "{} {}", res.terminal_norm, res.initial_norm);
        for n in 0..10 {
            assert!(res.u.row(n).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn switch_time_must_precede_half_horizon() {
        let prob = problem(10);
        let p = WeightParams::theory();
        assert!(matches!(
            two_phase_control(&prob, &p, &hum(), Some(0.5), 1e-6, 5),
            Err(Error::Parameter(_))
        ));
    }
}
