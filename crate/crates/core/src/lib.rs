//! Null controllability of the 1D heat equation with an inverse-square potential
//! and a memory term: Carleman weights and their parameter constraints,
//! Crank–Nicolson solvers, control synthesis and numerical checks of the
//! underlying inequalities.
//!
//! Everything numerical is generic over [`real::Real`] (`f32` or `f64`). The
//! aliases below fix the scalar for the common case; the `f32` variants carry
//! an `F32` suffix.

pub mod control;
pub mod discretization;
pub mod error;
pub mod evolve;
pub mod export;
pub mod field;
pub mod linalg;
pub mod profiles;
pub mod real;
pub mod special;
pub mod verify;
pub mod weights;

pub use error::{Error, Result};
pub use real::Real;

pub type WeightParams = weights::WeightParams<f64>;
pub type MemoryKernel = weights::MemoryKernel<f64>;
pub type SpaceTimeGrid = discretization::SpaceTimeGrid<f64>;
pub type Interval = discretization::Interval<f64>;
pub type Trajectory = discretization::Trajectory<f64>;
pub type Field = field::Field<f64>;
pub type PdeProblem = evolve::PdeProblem<f64>;
pub type ControlResult = control::ControlResult<f64>;
pub type CgOptions = linalg::CgOptions<f64>;

pub type WeightParamsF32 = weights::WeightParams<f32>;
pub type MemoryKernelF32 = weights::MemoryKernel<f32>;
pub type SpaceTimeGridF32 = discretization::SpaceTimeGrid<f32>;
pub type IntervalF32 = discretization::Interval<f32>;
pub type TrajectoryF32 = discretization::Trajectory<f32>;
pub type FieldF32 = field::Field<f32>;
pub type PdeProblemF32 = evolve::PdeProblem<f32>;
pub type ControlResultF32 = control::ControlResult<f32>;
pub type CgOptionsF32 = linalg::CgOptions<f32>;
