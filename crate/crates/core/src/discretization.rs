//! Uniform grids on Q = (0, T) × (0, 1), the discrete singular operator,
//! memory quadrature and spectral probes.

use crate::error::{Error, Result};
use crate::field::Field;
use crate::linalg::TridiagonalMatrix;
use crate::real::Real;
use crate::weights::MemoryKernel;

/// Open interval (lo, hi).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Real> Interval<T> {
    pub fn new(lo: T, hi: T) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, x: T) -> bool {
        x > self.lo && x < self.hi
    }

    pub fn contains_closed(&self, x: T) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// Closure of `inner` lies in `self`.
    pub fn compactly_contains(&self, inner: &Interval<T>) -> bool {
        inner.lo > self.lo && inner.hi < self.hi
    }

    pub fn length(&self) -> T {
        self.hi - self.lo
    }
}

/// Interior nodes `xᵢ = i·h`, `i = 1..=nx`, `h = 1/(nx+1)`, and times
/// `tₙ = n·δt`, `n = 0..=nt`. Node `i` is stored at index `i − 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeGrid<T> {
    pub nx: usize,
    pub nt: usize,
    pub t_final: T,
    pub omega: Interval<T>,
    pub omega_prime: Interval<T>,
    omega_mask: Vec<T>,
    omega_prime_mask: Vec<T>,
}

impl<T: Real> SpaceTimeGrid<T> {
    pub fn new(
        nx: usize,
        nt: usize,
        t_final: T,
        omega: Interval<T>,
        omega_prime: Interval<T>,
    ) -> Result<Self> {
        if nx == 0 || nt == 0 {
            return Err(Error::Parameter(format!(
                "grid needs nx ≥ 1 and nt ≥ 1 (got {nx}, {nt})"
            )));
        }
        if !(t_final > T::zero() && t_final.is_finite()) {
            return Err(Error::Parameter(format!("horizon T = {t_final} must be positive")));
        }
        let nested = omega.lo >= T::zero()
            && omega.hi <= T::one()
            && omega_prime.lo < omega_prime.hi
            && omega.compactly_contains(&omega_prime);
        if !nested {
            return Err(Error::Parameter(format!(
                "need 0 < α′ < β′ < 1 with [α′, β′] ⊂ (α, β) ⊂ (0, 1); got ω = ({}, {}), ω′ = ({}, {})",
                omega.lo, omega.hi, omega_prime.lo, omega_prime.hi
            )));
        }
        let h = T::one() / T::from_usize_lossy(nx + 1);
        let mask = |iv: &Interval<T>| {
            (1..=nx)
                .map(|i| {
                    if iv.contains(T::from_usize_lossy(i) * h) {
                        T::one()
                    } else {
                        T::zero()
                    }
                })
                .collect::<Vec<_>>()
        };
        Ok(Self {
            nx,
            nt,
            t_final,
            omega,
            omega_prime,
            omega_mask: mask(&omega),
            omega_prime_mask: mask(&omega_prime),
        })
    }

    pub fn h(&self) -> T {
        T::one() / T::from_usize_lossy(self.nx + 1)
    }

    pub fn dt(&self) -> T {
        self.t_final / T::from_usize_lossy(self.nt)
    }

    /// Position of storage index `i` (node `i + 1`).
    pub fn x(&self, i: usize) -> T {
        T::from_usize_lossy(i + 1) * self.h()
    }

    pub fn time(&self, n: usize) -> T {
        if n == self.nt {
            self.t_final
        } else {
            T::from_usize_lossy(n) * self.dt()
        }
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    pub fn times(&self) -> Vec<T> {
        (0..=self.nt).map(|n| self.time(n)).collect()
    }

    /// 1 on nodes inside ω, 0 elsewhere.
    pub fn omega_mask(&self) -> &[T] {
        &self.omega_mask
    }

    pub fn omega_prime_mask(&self) -> &[T] {
        &self.omega_prime_mask
    }

    /// Discrete L²(0,1) norm `(h Σ vᵢ²)^{1/2}`.
    pub fn l2_norm(&self, v: &[T]) -> T {
        (self.h() * v.iter().map(|&a| a * a).sum::<T>()).sqrt()
    }

    /// Discrete L²(0,1) inner product.
    pub fn l2_dot(&self, a: &[T], b: &[T]) -> T {
        self.h() * a.iter().zip(b).map(|(&p, &q)| p * q).sum::<T>()
    }

    /// Grid for the window `[t_{n0}, T]`, with time measured from `t_{n0}`.
    pub fn tail_window(&self, n0: usize) -> Result<Self> {
        if n0 >= self.nt {
            return Err(Error::Parameter(format!(
                "window start {n0} must be below nt = {}",
                self.nt
            )));
        }
        let mut g = self.clone();
        g.nt = self.nt - n0;
        g.t_final = self.t_final - self.time(n0);
        Ok(g)
    }

    /// Same spatial layout with a different time resolution.
    pub fn with_nt(&self, nt: usize) -> Result<Self> {
        Self::new(self.nx, nt, self.t_final, self.omega, self.omega_prime)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrajectoryKind {
    State,
    Adjoint,
    Free,
}

impl TrajectoryKind {
    pub fn name(self) -> &'static str {
        match self {
            TrajectoryKind::State => "state",
            TrajectoryKind::Adjoint => "adjoint",
            TrajectoryKind::Free => "free",
        }
    }
}

/// First time level at which a forward solve overflowed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlowUp {
    pub time_index: usize,
    pub max_value: f64,
}

/// Values on interior nodes for every time level; Dirichlet rows are implicit.
/// After a blow-up the rows from `time_index` on are left at zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T> {
    pub values: Field<T>,
    pub grid: SpaceTimeGrid<T>,
    pub kind: TrajectoryKind,
    pub blow_up: Option<BlowUp>,
}

impl<T: Real> Trajectory<T> {
    pub fn new(values: Field<T>, grid: SpaceTimeGrid<T>, kind: TrajectoryKind) -> Self {
        assert_eq!(values.rows(), grid.nt + 1, "trajectory rows");
        assert_eq!(values.cols(), grid.nx, "trajectory cols");
        Self {
            values,
            grid,
            kind,
            blow_up: None,
        }
    }

    pub fn zeros(grid: &SpaceTimeGrid<T>, kind: TrajectoryKind) -> Self {
        Self::new(Field::zeros(grid.nt + 1, grid.nx), grid.clone(), kind)
    }

    pub fn at(&self, n: usize) -> &[T] {
        self.values.row(n)
    }

    pub fn initial(&self) -> &[T] {
        self.values.row(0)
    }

    pub fn terminal(&self) -> &[T] {
        self.values.row(self.grid.nt)
    }
}

/// `A_h = −D² − μ/x²` on the interior nodes with Dirichlet closure.
pub fn assemble_operator<T: Real>(mu: T, grid: &SpaceTimeGrid<T>) -> TridiagonalMatrix<T> {
    operator_on_nodes(mu, grid.nx)
}

fn operator_on_nodes<T: Real>(mu: T, nx: usize) -> TridiagonalMatrix<T> {
    let h = T::one() / T::from_usize_lossy(nx + 1);
    let inv_h2 = T::one() / (h * h);
    let diag = (1..=nx)
        .map(|i| {
            let x = T::from_usize_lossy(i) * h;
            T::lit(2.0) * inv_h2 - mu / (x * x)
        })
        .collect();
    TridiagonalMatrix::new(diag, vec![-inv_h2; nx.saturating_sub(1)])
}

/// Trapezoidal `∫₀^{tₙ} a(tₙ, s, xᵢ) w(s, xᵢ) ds` for a general kernel, reading rows `0..=n` of `w`.
pub fn memory_quadrature_with<T: Real>(
    a: impl Fn(T, T, T) -> T,
    w: &Field<T>,
    grid: &SpaceTimeGrid<T>,
    n: usize,
) -> Vec<T> {
    let mut out = vec![T::zero(); w.cols()];
    if n == 0 {
        return out;
    }
    let dt = grid.dt();
    let tn = grid.time(n);
    let half = T::lit(0.5);
    for m in 0..=n {
        let wt = if m == 0 || m == n { half * dt } else { dt };
        let s = grid.time(m);
        for (i, (o, &wv)) in out.iter_mut().zip(w.row(m)).enumerate() {
            *o += wt * a(tn, s, grid.x(i)) * wv;
        }
    }
    out
}

/// Trapezoidal memory integral at time level `n` for a [`MemoryKernel`].
pub fn memory_quadrature<T: Real>(kern: &MemoryKernel<T>, w: &Trajectory<T>, n: usize) -> Vec<T> {
    assert!(n <= w.grid.nt, "time index {n} beyond nt = {}", w.grid.nt);
    let mut out = trapezoid_history(&w.values, w.grid.dt(), n);
    // both kernel kinds are independent of (s, x)
    let a = kern.eval(w.grid.time(n), T::zero(), T::zero());
    out.iter_mut().for_each(|v| *v *= a);
    out
}

/// `∫₀^{tₙ} w ds` per node by the trapezoid rule.
pub(crate) fn trapezoid_history<T: Real>(w: &Field<T>, dt: T, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); w.cols()];
    if n == 0 {
        return out;
    }
    let half = T::lit(0.5);
    for m in 0..=n {
        let wt = if m == 0 || m == n { half * dt } else { dt };
        for (o, &v) in out.iter_mut().zip(w.row(m)) {
            *o += wt * v;
        }
    }
    out
}

/// Smallest eigenvalue of `A_h` for `nx` interior nodes, by Sturm bisection.
pub fn spectral_bottom<T: Real>(mu: T, nx: usize) -> Result<T> {
    if nx < 3 {
        return Err(Error::Parameter(format!("spectral probe needs nx ≥ 3 (got {nx})")));
    }
    let tol = T::lit(1e-13).max(T::epsilon() * T::lit(4.0));
    operator_on_nodes(mu, nx).smallest_eigenvalue(tol, 400)
}

/// `(¼ Σ yᵢ²/xᵢ² h) / (Σ ((yᵢ₊₁ − yᵢ)/h)² h)` with `y₀ = y_{nx+1} = 0`.
pub fn discrete_hardy_ratio<T: Real>(y: &[T], grid: &SpaceTimeGrid<T>) -> Result<T> {
    if y.len() != grid.nx {
        return Err(Error::Parameter(format!(
            "vector length {} does not match nx = {}",
            y.len(),
            grid.nx
        )));
    }
    let h = grid.h();
    let num: T = y
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let x = grid.x(i);
            v * v / (x * x)
        })
        .sum::<T>()
        * h
        / T::lit(4.0);
    let mut den = T::zero();
    let mut prev = T::zero();
    for &v in y.iter().chain(std::iter::once(&T::zero())) {
        let d = (v - prev) / h;
        den += d * d;
        prev = v;
    }
    den *= h;
    if den == T::zero() {
        return Err(Error::UndefinedInput(
            "Hardy ratio undefined for the zero vector".into(),
        ));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(nx: usize, nt: usize) -> SpaceTimeGrid<f64> {
        SpaceTimeGrid::new(
            nx,
            nt,
            1.0,
            Interval::new(0.3, 0.8),
            Interval::new(0.4, 0.7),
        )
        .unwrap()
    }

    #[test]
    fn laplacian_stencil() {
        let a = assemble_operator(0.0, &grid(3, 4));
        assert_eq!(a.diag, vec![32.0; 3]);
        assert_eq!(a.off, vec![-16.0; 2]);
    }

    #[test]
    fn critical_potential_diagonal() {
        let a = assemble_operator(0.25, &grid(3, 4));
        assert_eq!(a.diag[0], 28.0);
        assert_eq!(a.diag[1], 31.0);
        assert_relative_eq!(a.diag[2], 32.0 - 0.25 / 0.5625, max_relative = 1e-15);
    }

    #[test]
    fn potential_is_a_diagonal_shift() {
        let g = grid(17, 4);
        let a0 = assemble_operator(0.0, &g);
        let a = assemble_operator(0.2, &g);
        assert_eq!(a.off, a0.off);
        for i in 0..g.nx {
            let x = g.x(i);
            assert_eq!(a.diag[i], a0.diag[i] - 0.2 / (x * x));
        }
    }

    #[test]
    fn grid_rejects_bad_subdomains() {
        let bad = SpaceTimeGrid::new(
            10,
            10,
            1.0,
            Interval::new(0.3, 0.8),
            Interval::new(0.2, 0.7),
        );
        assert!(matches!(bad, Err(Error::Parameter(_))));
        let touching = SpaceTimeGrid::new(
            10,
            10,
            1.0,
            Interval::new(0.3, 0.8),
            Interval::new(0.3, 0.7),
        );
        assert!(touching.is_err());
    }

    #[test]
    fn masks_follow_nodes() {
        let g = grid(9, 2);
        let inside: Vec<f64> = g.nodes().iter().map(|&x| if x > 0.3 && x < 0.8 { 1.0 } else { 0.0 }).collect();
        assert_eq!(g.omega_mask(), inside.as_slice());
        assert!(g.x(0) > 0.0);
    }

    #[test]
    fn quadrature_examples() {
        let g = SpaceTimeGrid::new(4, 10, 1.0, Interval::new(0.3, 0.8), Interval::new(0.4, 0.7)).unwrap();
        let ones = Field::from_fn(11, 4, |_, _| 1.0);
        let v = memory_quadrature_with(|_, _, _| 1.0, &ones, &g, 5);
        v.iter().for_each(|&q| assert_relative_eq!(q, 0.5, max_relative = 1e-14));
        let lin = Field::from_fn(11, 4, |n, _| g.time(n));
        let v = memory_quadrature_with(|_, _, _| 1.0, &lin, &g, 10);
        v.iter().for_each(|&q| assert_relative_eq!(q, 0.5, max_relative = 1e-14));
        assert!(memory_quadrature_with(|_, _, _| 1.0, &ones, &g, 0).iter().all(|&q| q == 0.0));
    }

    #[test]
    fn quadrature_second_order() {
        let exact = 1.0 - (-1.0f64).exp();
        let err = |nt: usize| {
            let g = grid(2, nt);
            let ones = Field::from_fn(nt + 1, 2, |_, _| 1.0);
            (memory_quadrature_with(|t: f64, s: f64, _| (s - t).exp(), &ones, &g, nt)[0] - exact).abs()
        };
        assert!(err(40) < 1e-4);
        let ratio = err(20) / err(40);
        assert!((ratio - 4.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn kernel_quadrature_matches_general_path() {
        let g = grid(5, 16);
        let kern = MemoryKernel::decay_exp(2.0, 0.3, 3.0, 1.0);
        let w = Field::from_fn(17, 5, |n, i| (n as f64 * 0.1 + i as f64).sin());
        let traj = Trajectory::new(w.clone(), g.clone(), TrajectoryKind::Free);
        for n in [0, 3, 16] {
            let fast = memory_quadrature(&kern, &traj, n);
            let slow = memory_quadrature_with(|t, s, x| kern.eval(t, s, x), &w, &g, n);
            for (a, b) in fast.iter().zip(&slow) {
                assert_relative_eq!(a, b, max_relative = 1e-13, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn laplacian_bottom_near_pi_squared() {
        let l: f64 = spectral_bottom(0.0, 99).unwrap();
        assert!((l - std::f64::consts::PI.powi(2)).abs() < 1e-2);
        assert!(spectral_bottom(0.0f64, 2).is_err());
    }

    #[test]
    fn laplacian_bottom_matches_closed_form() {
        let nx = 40usize;
        let h = 1.0 / (nx as f64 + 1.0);
        let exact = 4.0 / (h * h) * (std::f64::consts::PI * h / 2.0).sin().powi(2);
        assert_relative_eq!(spectral_bottom(0.0, nx).unwrap(), exact, max_relative = 1e-11);
    }

    #[test]
    fn hardy_ratio_examples() {
        let g = grid(200, 1);
        let parabola: Vec<f64> = g.nodes().iter().map(|&x| x * (1.0 - x)).collect();
        let near: Vec<f64> = g.nodes().iter().map(|&x| x.powf(0.6) * (1.0 - x)).collect();
        let r1 = discrete_hardy_ratio(&parabola, &g).unwrap();
        let r2 = discrete_hardy_ratio(&near, &g).unwrap();
        assert!(r1 < 1.0 && r2 < 1.0 && r2 > r1, "{r1} {r2}");
        // ¼∫(1−x)² = 1/12 against ∫(1−2x)² = 1/3
        assert!((r1 - 0.25).abs() < 1e-2);
        assert!(matches!(
            discrete_hardy_ratio(&vec![0.0; 200], &g),
            Err(Error::UndefinedInput(_))
        ));
    }
}
