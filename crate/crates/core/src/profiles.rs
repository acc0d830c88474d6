//! Initial data on grid nodes.

use crate::discretization::SpaceTimeGrid;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::special::{bessel_j, bessel_j_first_zero};

pub fn sine<T: Real>(grid: &SpaceTimeGrid<T>) -> Vec<T> {
    grid.nodes().into_iter().map(|x| (T::PI() * x).sin()).collect()
}

/// sign(x − 1/2)
pub fn step<T: Real>(grid: &SpaceTimeGrid<T>) -> Vec<T> {
    let half = T::lit(0.5);
    grid.nodes()
        .into_iter()
        .map(|x| {
            if x > half {
                T::one()
            } else if x < half {
                -T::one()
            } else {
                T::zero()
            }
        })
        .collect()
}

pub fn parabola<T: Real>(grid: &SpaceTimeGrid<T>) -> Vec<T> {
    grid.nodes().into_iter().map(|x| x * (T::one() - x)).collect()
}

/// First Dirichlet eigenpair of `−∂ₓₓ − μ/x²` on (0, 1) for `μ < 1/4`:
/// `√x·J_ν(jx)` with `ν = √(1/4 − μ)`, `j` the first zero of `J_ν`. Returns the
/// nodal values and the eigenvalue `j²`.
pub fn bessel_mode<T: Real>(grid: &SpaceTimeGrid<T>, mu: T) -> Result<(Vec<T>, T)> {
    let quarter = T::lit(0.25);
    if !(mu < quarter) {
        return Err(Error::Parameter(format!(
            "Bessel eigenfunction needs μ < 1/4 (got {mu})"
        )));
    }
    let order = (quarter - mu).sqrt();
    let j = bessel_j_first_zero(order)?;
    let values = grid
        .nodes()
        .into_iter()
        .map(|x| x.sqrt() * bessel_j(order, j * x))
        .collect();
    Ok((values, j * j))
}
