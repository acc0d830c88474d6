//! Null-control synthesis: penalized HUM, the weighted space-time variational
//! construction, Picard iteration for the memory term and the two-phase strategy.

mod fixed_point;
mod hum;
mod variational;

pub use fixed_point::{memory_fixed_point, two_phase_control, FixedPointMethod, FixedPointReport};
pub use hum::{penalized_hum, WeightMode};
pub use variational::{weighted_variational_control, DualSolution, VariationalSystem, VARIATIONAL_SIZE_CAP};

use crate::discretization::Trajectory;
use crate::field::Field;
use crate::real::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct ControlResult<T> {
    /// Control on every grid level, zero outside ω.
    pub u: Field<T>,
    /// Controlled trajectory.
    pub y: Trajectory<T>,
    pub terminal_norm: T,
    pub initial_norm: T,
    pub cg_iterations: usize,
    /// Final relative CG residual.
    pub residual: T,
    /// Value of the minimized functional, in normalized weight units.
    pub weighted_cost: T,
    /// Log of the factor the weights were divided by (0 for unweighted runs).
    pub log_weight_scale: T,
    pub converged: bool,
}

/// `terminal_norm ≤ rel_tol·initial_norm`, or `≤ rel_tol` when the initial norm is zero.
pub fn verify_null<T: Real>(res: &ControlResult<T>, rel_tol: T) -> bool {
    if res.initial_norm > T::zero() {
        res.terminal_norm <= rel_tol * res.initial_norm
    } else {
        res.terminal_norm <= rel_tol
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{Interval, SpaceTimeGrid, TrajectoryKind};

    fn result(terminal: f64, initial: f64) -> ControlResult<f64> {
        let g = SpaceTimeGrid::new(2, 2, 1.0, Interval::new(0.3, 0.8), Interval::new(0.4, 0.7)).unwrap();
        ControlResult {
            u: Field::zeros(3, 2),
            y: Trajectory::zeros(&g, TrajectoryKind::State),
            terminal_norm: terminal,
            initial_norm: initial,
            cg_iterations: 0,
            residual: 0.0,
            weighted_cost: 0.0,
            log_weight_scale: 0.0,
            converged: true,
        }
    }

    #[test]
    fn verify_null_examples() {
        assert!(verify_null(&result(1e-5, 1.0), 1e-2));
        assert!(!verify_null(&result(0.5, 1.0), 1e-2));
        assert!(verify_null(&result(0.0, 0.0), 1e-12));
    }
}
