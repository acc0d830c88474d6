//! Symmetric tridiagonal algebra, Sturm-sequence eigenvalue bisection and a
//! (Jacobi-preconditioned) conjugate gradient solver.

use crate::error::{Error, Result};
use crate::field::{axpy, dot, norm2};
use crate::real::Real;

/// Symmetric tridiagonal matrix: `diag[0..n]`, `off[0..n-1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TridiagonalMatrix<T> {
    pub diag: Vec<T>,
    pub off: Vec<T>,
}

impl<T: Real> TridiagonalMatrix<T> {
    pub fn new(diag: Vec<T>, off: Vec<T>) -> Self {
        assert_eq!(off.len() + 1, diag.len().max(1), "off-diagonal length must be n - 1");
        Self { diag, off }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// `out = self · v`
    pub fn apply(&self, v: &[T], out: &mut [T]) {
        let n = self.dim();
        for i in 0..n {
            let mut acc = self.diag[i] * v[i];
            if i > 0 {
                acc += self.off[i - 1] * v[i - 1];
            }
            if i + 1 < n {
                acc += self.off[i] * v[i + 1];
            }
            out[i] = acc;
        }
    }

    /// `alpha·I + beta·self`
    pub fn shifted(&self, alpha: T, beta: T) -> Self {
        Self {
            diag: self.diag.iter().map(|d| alpha + beta * *d).collect(),
            off: self.off.iter().map(|e| beta * *e).collect(),
        }
    }

    /// Gershgorin interval containing the spectrum.
    pub fn gershgorin(&self) -> (T, T) {
        let n = self.dim();
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for i in 0..n {
            let mut r = T::zero();
            if i > 0 {
                r += self.off[i - 1].abs();
            }
            if i + 1 < n {
                r += self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// Number of eigenvalues strictly below `lambda` (negative LDLᵀ pivots).
    pub fn sturm_count(&self, lambda: T) -> usize {
        let n = self.dim();
        if n == 0 {
            return 0;
        }
        let guard = T::epsilon() * T::epsilon();
        let mut count = 0;
        let mut q = self.diag[0] - lambda;
        for i in 0..n {
            if i > 0 {
                let prev = if q.abs() < guard { guard.copysign(q) } else { q };
                q = self.diag[i] - lambda - self.off[i - 1] * self.off[i - 1] / prev;
            }
            if q < T::zero() {
                count += 1;
            }
        }
        count
    }

    /// Smallest eigenvalue by Sturm bisection on the Gershgorin interval.
    pub fn smallest_eigenvalue(&self, rel_tol: T, max_iter: usize) -> Result<T> {
        if self.dim() == 0 {
            return Err(Error::Parameter("empty matrix".into()));
        }
        let (mut lo, mut hi) = self.gershgorin();
        for _ in 0..max_iter {
            let mid = lo + (hi - lo) / (T::one() + T::one());
            if self.sturm_count(mid) >= 1 {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= rel_tol * T::one().max(lo.abs().max(hi.abs())) {
                return Ok(lo + (hi - lo) / (T::one() + T::one()));
            }
        }
        Err(Error::Solver(format!(
            "Sturm bisection did not reach tolerance in {max_iter} steps"
        )))
    }

    pub fn factor(&self) -> Result<TridiagonalLu<T>> {
        TridiagonalLu::new(self)
    }
}

/// Thomas-algorithm factorization, reused across time steps.
#[derive(Clone, Debug)]
pub struct TridiagonalLu<T> {
    off: Vec<T>,
    // modified super-diagonal c'ᵢ and inverse pivots
    c_prime: Vec<T>,
    inv_pivot: Vec<T>,
}

impl<T: Real> TridiagonalLu<T> {
    pub fn new(m: &TridiagonalMatrix<T>) -> Result<Self> {
        let n = m.dim();
        let mut c_prime = vec![T::zero(); n.saturating_sub(1)];
        let mut inv_pivot = vec![T::zero(); n];
        let mut prev_c = T::zero();
        for i in 0..n {
            let pivot = if i == 0 {
                m.diag[0]
            } else {
                m.diag[i] - m.off[i - 1] * prev_c
            };
            if pivot == T::zero() || !pivot.is_finite() {
                return Err(Error::Solver(format!("singular tridiagonal pivot at row {i}")));
            }
            inv_pivot[i] = T::one() / pivot;
            if i + 1 < n {
                prev_c = m.off[i] * inv_pivot[i];
                c_prime[i] = prev_c;
            }
        }
        Ok(Self {
            off: m.off.clone(),
            c_prime,
            inv_pivot,
        })
    }

    /// Solves in place: `x` holds the right-hand side on entry.
    pub fn solve_in_place(&self, x: &mut [T]) {
        let n = self.inv_pivot.len();
        if n == 0 {
            return;
        }
        x[0] *= self.inv_pivot[0];
        for i in 1..n {
            x[i] = (x[i] - self.off[i - 1] * x[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            x[i] = x[i] - self.c_prime[i] * x[i + 1];
        }
    }
}

/// Cholesky factor of a symmetric positive definite band matrix.
#[derive(Clone, Debug)]
pub struct BandedCholesky<T> {
    n: usize,
    bw: usize,
    // row j holds L[j][j − bw ..= j], left-padded with zeros
    rows: Vec<T>,
}

impl<T: Real> BandedCholesky<T> {
    /// Assembles the band of a symmetric operator by probing it with
    /// `2·bw + 1` comb vectors, then factors it.
    pub fn from_operator(n: usize, bw: usize, apply: impl FnMut(&[T], &mut [T])) -> Result<Self> {
        let rows = Self::probe(n, bw, apply);
        Self::factor(n, bw, rows)
    }

    /// Like [`Self::from_operator`], but on a non-positive pivot retries with
    /// `τ·max diag` added to the diagonal, τ growing from 1e-14 by 100× up to 1e-6.
    /// The returned factor is then only a preconditioner for the unshifted operator.
    /// Also returns the shift used and the max-abs row sum of the band.
    pub fn from_operator_shifted(
        n: usize,
        bw: usize,
        apply: impl FnMut(&[T], &mut [T]),
    ) -> Result<(Self, T, T)> {
        let band = Self::probe(n, bw, apply);
        let width = bw + 1;
        let max_diag = (0..n).map(|j| band[j * width + bw]).fold(T::zero(), T::max);
        let norm_inf = Self::band_norm_inf(n, bw, &band);
        let mut last = None;
        for e in 0..=4 {
            let shift = if e == 0 {
                T::zero()
            } else {
                max_diag * T::lit(10f64.powi(2 * e as i32 - 16))
            };
            let mut rows = band.clone();
            (0..n).for_each(|j| rows[j * width + bw] += shift);
            match Self::factor(n, bw, rows) {
                Ok(f) => return Ok((f, shift, norm_inf)),
                Err(err) => last = Some(err),
            }
        }
        Err(last.expect("at least one attempt"))
    }

    fn probe(n: usize, bw: usize, mut apply: impl FnMut(&[T], &mut [T])) -> Vec<T> {
        let width = bw + 1;
        let mut rows = vec![T::zero(); n * width];
        let stride = 2 * bw + 1;
        let mut probe = vec![T::zero(); n];
        let mut image = vec![T::zero(); n];
        for offset in 0..stride.min(n) {
            probe.iter_mut().enumerate().for_each(|(k, p)| {
                *p = if k % stride == offset { T::one() } else { T::zero() }
            });
            apply(&probe, &mut image);
            // column c = offset + m·stride contributes A[j][c] for |j − c| ≤ bw
            let mut c = offset;
            while c < n {
                for j in c..(c + bw + 1).min(n) {
                    rows[j * width + bw - (j - c)] = image[j];
                }
                c += stride;
            }
        }
        rows
    }

    // lower band only; the upper half is its mirror
    fn band_norm_inf(n: usize, bw: usize, band: &[T]) -> T {
        let width = bw + 1;
        let mut sums = vec![T::zero(); n];
        for j in 0..n {
            for k in j.saturating_sub(bw)..=j {
                let v = band[j * width + bw - (j - k)].abs();
                sums[j] += v;
                if k != j {
                    sums[k] += v;
                }
            }
        }
        sums.into_iter().fold(T::zero(), T::max)
    }

    fn factor(n: usize, bw: usize, mut rows: Vec<T>) -> Result<Self> {
        let width = bw + 1;
        for j in 0..n {
            let lo = j.saturating_sub(bw);
            for k in lo..=j {
                // L[j][k] = (A[j][k] − Σ_{m<k} L[j][m]L[k][m]) / L[k][k]
                let mut sum = rows[j * width + bw - (j - k)];
                let m_lo = lo.max(k.saturating_sub(bw));
                for m in m_lo..k {
                    sum -= rows[j * width + bw - (j - m)] * rows[k * width + bw - (k - m)];
                }
                if k == j {
                    if !(sum > T::zero()) {
                        return Err(Error::Solver(format!(
                            "band Cholesky: non-positive pivot {sum} at row {j}"
                        )));
                    }
                    rows[j * width + bw] = sum.sqrt();
                } else {
                    rows[j * width + bw - (j - k)] = sum / rows[k * width + bw];
                }
            }
        }
        Ok(Self { n, bw, rows })
    }

    pub fn solve_in_place(&self, x: &mut [T]) {
        let (n, bw, width) = (self.n, self.bw, self.bw + 1);
        for j in 0..n {
            let mut v = x[j];
            for m in j.saturating_sub(bw)..j {
                v -= self.rows[j * width + bw - (j - m)] * x[m];
            }
            x[j] = v / self.rows[j * width + bw];
        }
        for j in (0..n).rev() {
            let mut v = x[j];
            for m in j + 1..(j + bw + 1).min(n) {
                v -= self.rows[m * width + bw - (m - j)] * x[m];
            }
            x[j] = v / self.rows[j * width + bw];
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgOptions<T> {
    /// Stop when `‖r‖ ≤ rel_tol · ‖b‖`.
    pub rel_tol: T,
    pub max_iter: usize,
    /// Window length for the stagnation test.
    pub stagnation_window: usize,
    /// Minimum relative residual reduction required over one window.
    pub stagnation_reduction: T,
}

impl<T: Real> Default for CgOptions<T> {
    fn default() -> Self {
        Self {
            rel_tol: T::lit(1e-10),
            max_iter: 2000,
            stagnation_window: 50,
            stagnation_reduction: T::lit(1e-12),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CgOutcome<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    /// Final `‖b − A x‖ / ‖b‖` (zero for `b = 0`).
    pub residual: T,
}

/// Conjugate gradients for an SPD operator, started from zero.
///
/// `precond` holds the inverse diagonal for Jacobi preconditioning. Fails with
/// [`Error::NonConvergence`] on iteration cap or stagnation.
pub fn conjugate_gradient<T, F>(
    apply: F,
    b: &[T],
    precond: Option<&[T]>,
    opts: &CgOptions<T>,
) -> Result<CgOutcome<T>>
where
    T: Real,
    F: FnMut(&[T], &mut [T]),
{
    preconditioned_cg(
        apply,
        |r: &[T], z: &mut [T]| match precond {
            Some(m) => z.iter_mut().zip(r).zip(m).for_each(|((zi, ri), mi)| *zi = *ri * *mi),
            None => z.copy_from_slice(r),
        },
        b,
        opts,
    )
}

/// Conjugate gradients with an arbitrary SPD preconditioner `z = M⁻¹r`.
pub fn preconditioned_cg<T, F, P>(
    mut apply: F,
    mut precondition: P,
    b: &[T],
    opts: &CgOptions<T>,
) -> Result<CgOutcome<T>>
where
    T: Real,
    F: FnMut(&[T], &mut [T]),
    P: FnMut(&[T], &mut [T]),
{
    let n = b.len();
    let mut x = vec![T::zero(); n];
    let b_norm = norm2(b);
    if b_norm == T::zero() {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            residual: T::zero(),
        });
    }

    let mut r = b.to_vec();
    let mut z = vec![T::zero(); n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![T::zero(); n];
    let mut rz = dot(&r, &z);
    let mut history = vec![T::one()];

    for it in 1..=opts.max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            return Err(Error::Solver(format!(
                "operator not positive definite along search direction (pᵀAp = {pap})"
            )));
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let mut rel = norm2(&r) / b_norm;
        let mut restart = false;
        if rel <= opts.rel_tol {
            // the recurrence can drift from b − Ax on ill-conditioned systems
            apply(&x, &mut ap);
            r.iter_mut()
                .zip(b)
                .zip(&ap)
                .for_each(|((ri, &bi), &ai)| *ri = bi - ai);
            rel = norm2(&r) / b_norm;
            if rel <= opts.rel_tol {
                return Ok(CgOutcome {
                    x,
                    iterations: it,
                    residual: rel,
                });
            }
            restart = true;
        }
        // best residual so far; CG residuals need not decrease monotonically
        let best = history[it - 1].min(rel);
        history.push(best);
        if it >= opts.stagnation_window {
            let before = history[it - opts.stagnation_window];
            if best >= before * (T::one() - opts.stagnation_reduction) {
                return Err(Error::NonConvergence {
                    iterations: it,
                    residual: rel.as_f64(),
                });
            }
        }
        precondition(&r, &mut z);
        let rz_next = dot(&r, &z);
        let beta = if restart { T::zero() } else { rz_next / rz };
        rz = rz_next;
        p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = *zi + beta * *pi);
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual: (norm2(&r) / b_norm).as_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(n: usize) -> TridiagonalMatrix<f64> {
        TridiagonalMatrix::new(vec![2.0; n], vec![-1.0; n - 1])
    }

    #[test]
    fn thomas_solves_exactly() {
        let m = laplacian(5);
        let lu = m.factor().unwrap();
        let x_true = [1.0, -2.0, 0.5, 3.0, 4.0];
        let mut b = [0.0; 5];
        m.apply(&x_true, &mut b);
        lu.solve_in_place(&mut b);
        for (a, e) in b.iter().zip(x_true) {
            assert!((a - e).abs() < 1e-13);
        }
    }

    #[test]
    fn singular_pivot_is_reported() {
        let m = TridiagonalMatrix::new(vec![0.0, 1.0], vec![1.0]);
        assert!(matches!(m.factor(), Err(Error::Solver(_))));
    }

    #[test]
    fn sturm_bisection_finds_known_minimum() {
        // eigenvalues of tridiag(-1, 2, -1) are 2 - 2cos(kπ/(n+1))
        let n = 20;
        let m = laplacian(n);
        let expected = 2.0 - 2.0 * (std::f64::consts::PI / (n as f64 + 1.0)).cos();
        let got = m.smallest_eigenvalue(1e-14, 200).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert_eq!(m.sturm_count(expected + 1e-9), 1);
        assert_eq!(m.sturm_count(5.0), n);
    }

    #[test]
    fn bisection_cap_reports_solver_error() {
        let m = laplacian(10);
        assert!(matches!(m.smallest_eigenvalue(1e-300, 3), Err(Error::Solver(_))));
    }

    #[test]
    fn cg_matches_direct_solve() {
        let m = laplacian(30);
        let b: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let out = conjugate_gradient(|v, o| m.apply(v, o), &b, None, &CgOptions::default()).unwrap();
        let mut direct = b.clone();
        m.factor().unwrap().solve_in_place(&mut direct);
        for (a, e) in out.x.iter().zip(&direct) {
            assert!((a - e).abs() < 1e-8);
        }
        assert!(out.iterations <= 30);
    }

    #[test]
    fn cg_zero_rhs_takes_no_iterations() {
        let m = laplacian(4);
        let out = conjugate_gradient(|v, o| m.apply(v, o), &[0.0; 4], None, &CgOptions::default()).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(out.x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn band_cholesky_solves_pentadiagonal() {
        let n = 12;
        let apply = |v: &[f64], out: &mut [f64]| {
            for i in 0..n {
                let mut s = 6.0 * v[i];
                if i >= 1 { s -= 2.0 * v[i - 1]; }
                if i + 1 < n { s -= 2.0 * v[i + 1]; }
                if i >= 2 { s += 0.5 * v[i - 2]; }
                if i + 2 < n { s += 0.5 * v[i + 2]; }
                out[i] = s;
            }
        };
        let chol = BandedCholesky::from_operator(n, 2, apply).unwrap();
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut b = vec![0.0; n];
        apply(&x_true, &mut b);
        chol.solve_in_place(&mut b);
        for (a, e) in b.iter().zip(&x_true) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn band_cholesky_rejects_indefinite() {
        let m = TridiagonalMatrix::new(vec![1.0, -1.0, 1.0], vec![0.0, 0.0]);
        assert!(BandedCholesky::from_operator(3, 1, |v, o| m.apply(v, o)).is_err());
    }

    #[test]
    fn cg_detects_indefinite_operator() {
        let m = TridiagonalMatrix::new(vec![-1.0, -1.0], vec![0.0]);
        let r = conjugate_gradient(|v, o| m.apply(v, o), &[1.0, 1.0], None, &CgOptions::default());
        assert!(matches!(r, Err(Error::Solver(_))));
    }
}
