//! Linear solvers for shifted 5-point Laplacians `-Δ + diag(c)` on a grid.
//!
//! The primary backend is a banded LDLᵀ factorization (bandwidth `nx`) with
//! iterative refinement; it also handles indefinite shifts. An SSOR
//! preconditioned conjugate-gradient solver is available for positive
//! definite operators as an independent cross-check.

use crate::error::{Error, Result};
use crate::grid::{dot, Grid};

/// Relative residual every solve must reach.
pub const SOLVE_TOL: f64 = 1e-10;
const REFINE_TARGET: f64 = 1e-14;
const MAX_REFINE: usize = 8;

/// Symmetric banded LDLᵀ factorization without pivoting.
#[derive(Debug, Clone)]
pub struct BandedLdl {
    n: usize,
    b: usize,
    /// Row `i` holds `L[i][i-b..i]` at offsets `0..b`.
    l: Vec<f64>,
    d: Vec<f64>,
}

impl BandedLdl {
    /// Factor the symmetric matrix whose lower band is given by
    /// `entry(i, j)` for `i - b <= j <= i`.
    pub fn factor(n: usize, b: usize, entry: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut l = vec![0.0; n * b];
        let mut d = vec![0.0; n];
        let mut t = vec![0.0; b];
        for i in 0..n {
            let lo = i.saturating_sub(b);
            let w = i - lo;
            for j in lo..i {
                let row_j = &l[j * b..(j + 1) * b];
                let off = lo + b - j;
                let s = entry(i, j) - dot(&t[..j - lo], &row_j[off..off + (j - lo)]);
                t[j - lo] = s;
                l[i * b + (j + b - i)] = s / d[j];
            }
            let row_i = &l[i * b + (b - w)..(i + 1) * b];
            let di = entry(i, i) - dot(&t[..w], row_i);
            if di == 0.0 || !di.is_finite() {
                return Err(Error::SolverFailure(format!("zero pivot at row {i}")));
            }
            d[i] = di;
        }
        Ok(BandedLdl { n, b, l, d })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of negative pivots, which equals the number of negative
    /// eigenvalues of the factored matrix.
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|&&d| d < 0.0).count()
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, b) = (self.n, self.b);
        for i in 0..n {
            let lo = i.saturating_sub(b);
            let row = &self.l[i * b + (b - (i - lo))..(i + 1) * b];
            x[i] -= dot(row, &x[lo..i]);
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let lo = i.saturating_sub(b);
            let xi = x[i];
            let row = &self.l[i * b + (b - (i - lo))..(i + 1) * b];
            for (xj, &lij) in x[lo..i].iter_mut().zip(row) {
                *xj -= lij * xi;
            }
        }
    }
}

/// `A = -Δ + diag(c)` on the active nodes of a grid; inactive rows are the
/// identity.
#[derive(Debug, Clone)]
pub struct ShiftedLaplacian {
    c: Vec<f64>,
}

impl ShiftedLaplacian {
    pub fn new(grid: &Grid, c: Option<&[f64]>) -> Result<Self> {
        let c = match c {
            Some(c) if c.len() != grid.len() => return Err(Error::GridMismatch),
            Some(c) => c.to_vec(),
            None => vec![0.0; grid.len()],
        };
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("shift must be finite".into()));
        }
        Ok(ShiftedLaplacian { c })
    }

    pub fn shift(&self) -> &[f64] {
        &self.c
    }

    pub fn apply(&self, grid: &Grid, u: &[f64], out: &mut [f64]) {
        grid.neg_laplacian(u, out);
        for k in 0..grid.len() {
            if grid.is_active(k) {
                out[k] += self.c[k] * u[k];
            }
        }
    }

    /// Entry `(i, j)` of `h² A`, for `j <= i`.
    fn scaled_entry(&self, grid: &Grid, i: usize, j: usize) -> f64 {
        let (ai, aj) = (grid.is_active(i), grid.is_active(j));
        let h2 = grid.cell_area();
        if i == j {
            return if ai { 4.0 + h2 * self.c[i] } else { 1.0 };
        }
        let nx = grid.nx();
        let coupled = (i == j + 1 && i % nx != 0) || i == j + nx;
        if coupled && ai && aj {
            -1.0
        } else {
            0.0
        }
    }

    pub fn factor(self, grid: &Grid) -> Result<ShiftedSolver> {
        let ldl = BandedLdl::factor(grid.len(), grid.nx(), |i, j| self.scaled_entry(grid, i, j))?;
        Ok(ShiftedSolver { op: self, ldl })
    }
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Factored shifted Laplacian.
#[derive(Debug, Clone)]
pub struct ShiftedSolver {
    op: ShiftedLaplacian,
    ldl: BandedLdl,
}

impl ShiftedSolver {
    pub fn new(grid: &Grid, c: Option<&[f64]>) -> Result<Self> {
        ShiftedLaplacian::new(grid, c)?.factor(grid)
    }

    pub fn operator(&self) -> &ShiftedLaplacian {
        &self.op
    }

    /// Negative eigenvalue count of the operator restricted to active nodes.
    pub fn negative_eigenvalues(&self) -> usize {
        self.ldl.negative_pivots()
    }

    /// One pass through the factorization, no refinement.
    pub fn solve_raw(&self, grid: &Grid, f: &[f64]) -> Vec<f64> {
        let h2 = grid.cell_area();
        let mut x: Vec<f64> = f.iter().zip(grid.mask()).map(|(&v, &a)| if a { v * h2 } else { 0.0 }).collect();
        self.ldl.solve_in_place(&mut x);
        x
    }

    /// Solve `A u = f` to a relative residual below [`SOLVE_TOL`].
    pub fn solve(&self, grid: &Grid, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        let fmask: Vec<f64> = f.iter().zip(grid.mask()).map(|(&v, &a)| if a { v } else { 0.0 }).collect();
        let fnorm = norm(&fmask);
        if fnorm == 0.0 {
            return Ok(vec![0.0; grid.len()]);
        }
        let mut x = self.solve_raw(grid, &fmask);
        let mut r = vec![0.0; grid.len()];
        let mut rel = f64::INFINITY;
        for _ in 0..=MAX_REFINE {
            self.op.apply(grid, &x, &mut r);
            for (ri, fi) in r.iter_mut().zip(&fmask) {
                *ri = fi - *ri;
            }
            let next = norm(&r) / fnorm;
            if next <= REFINE_TARGET || next >= rel {
                rel = rel.min(next);
                break;
            }
            rel = next;
            let dx = self.solve_raw(grid, &r);
            for (xi, d) in x.iter_mut().zip(dx) {
                *xi += d;
            }
        }
        if rel > SOLVE_TOL {
            return Err(Error::SolverFailure(format!("relative residual {rel:e} after refinement")));
        }
        Ok(x)
    }
}

/// SSOR-preconditioned conjugate gradients for a positive definite shifted
/// Laplacian. Iterations are fully deterministic.
pub fn pcg_solve(grid: &Grid, op: &ShiftedLaplacian, f: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    const OMEGA: f64 = 1.5;
    let n = grid.len();
    let nx = grid.nx();
    let diag: Vec<f64> = (0..n).map(|k| 4.0 / grid.cell_area() + op.c[k]).collect();
    let inv_h2 = 1.0 / grid.cell_area();
    // z = M⁻¹ r with M = (D/ω + L) (D/ω)⁻¹ (D/ω + U) ω/(2-ω); L, U carry -1/h²
    let precondition = |r: &[f64], z: &mut [f64]| {
        for k in 0..n {
            if !grid.is_active(k) {
                z[k] = 0.0;
                continue;
            }
            let (i, j) = (k % nx, k / nx);
            let mut s = r[k];
            if i > 0 && grid.is_active(k - 1) {
                s += inv_h2 * z[k - 1];
            }
            if j > 0 && grid.is_active(k - nx) {
                s += inv_h2 * z[k - nx];
            }
            z[k] = s * OMEGA / diag[k];
        }
        for k in 0..n {
            if grid.is_active(k) {
                z[k] *= diag[k] / OMEGA;
            }
        }
        for k in (0..n).rev() {
            if !grid.is_active(k) {
                continue;
            }
            let (i, j) = (k % nx, k / nx);
            let mut s = z[k];
            if i + 1 < nx && grid.is_active(k + 1) {
                s += inv_h2 * z[k + 1];
            }
            if j + 1 < grid.ny() && grid.is_active(k + nx) {
                s += inv_h2 * z[k + nx];
            }
            z[k] = s * OMEGA / diag[k];
        }
        for v in z.iter_mut() {
            *v *= 2.0 - OMEGA;
        }
    };
    let b: Vec<f64> = f.iter().zip(grid.mask()).map(|(&v, &a)| if a { v } else { 0.0 }).collect();
    let bnorm = norm(&b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.clone();
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for _ in 0..max_iter {
        op.apply(grid, &p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::SolverFailure("operator is not positive definite".into()));
        }
        let a = rz / pap;
        for k in 0..n {
            x[k] += a * p[k];
            r[k] -= a * ap[k];
        }
        if norm(&r) <= tol * bnorm {
            return Ok(x);
        }
        precondition(&r, &mut z);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(Error::SolverFailure(format!("conjugate gradients did not converge in {max_iter} iterations")))
}

/// Which algorithm backs a [`GreenOperator`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Direct,
    ConjugateGradient,
}

/// `𝒢 = (-Δ)⁻¹` with zero Dirichlet data.
#[derive(Debug, Clone)]
pub struct GreenOperator {
    backend: Backend,
    direct: Option<ShiftedSolver>,
    op: ShiftedLaplacian,
}

impl GreenOperator {
    pub fn direct(grid: &Grid) -> Result<Self> {
        let op = ShiftedLaplacian::new(grid, None)?;
        Ok(GreenOperator { backend: Backend::Direct, direct: Some(op.clone().factor(grid)?), op })
    }

    pub fn conjugate_gradient(grid: &Grid) -> Result<Self> {
        Ok(GreenOperator { backend: Backend::ConjugateGradient, direct: None, op: ShiftedLaplacian::new(grid, None)? })
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn solve(&self, grid: &Grid, f: &[f64]) -> Result<Vec<f64>> {
        match &self.direct {
            Some(s) => s.solve(grid, f),
            None => pcg_solve(grid, &self.op, f, 1e-13, 20 * grid.len()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridSpec};

    #[test]
    fn banded_ldl_matches_dense_solve() {
        let n = 12;
        let b = 3;
        let a = |i: usize, j: usize| -> f64 {
            if i == j {
                5.0 + i as f64 * 0.1
            } else if i.abs_diff(j) <= b {
                -0.5 / (1.0 + i.abs_diff(j) as f64)
            } else {
                0.0
            }
        };
        let ldl = BandedLdl::factor(n, b, a).unwrap();
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut rhs: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a(i.max(j), i.min(j)) * x_true[j]).sum()).collect();
        ldl.solve_in_place(&mut rhs);
        for (x, y) in rhs.iter().zip(&x_true) {
            assert!((x - y).abs() < 1e-13);
        }
        assert_eq!(ldl.negative_pivots(), 0);
    }

    #[test]
    fn backends_agree_on_disk() {
        let g = build_grid(GridSpec::disk(1.0, 24)).unwrap();
        let f = g.sample(|x, y| 1.0 + x * y - y * y);
        let a = GreenOperator::direct(&g).unwrap().solve(&g, f.values()).unwrap();
        let b = GreenOperator::conjugate_gradient(&g).unwrap().solve(&g, f.values()).unwrap();
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9 * scale);
        }
    }

    #[test]
    fn indefinite_shift_is_counted() {
        let g = build_grid(GridSpec::unit_square(16)).unwrap();
        let lambda1 = 2.0 * (16.0f64 * 16.0) * 2.0 * (1.0 - (std::f64::consts::PI / 16.0).cos());
        let shift = vec![-1.2 * lambda1; g.len()];
        let s = ShiftedSolver::new(&g, Some(&shift)).unwrap();
        assert_eq!(s.negative_eigenvalues(), 1);
        let f = g.sample(|x, y| x * (1.0 - y));
        let u = s.solve(&g, f.values()).unwrap();
        let mut r = vec![0.0; g.len()];
        s.operator().apply(&g, &u, &mut r);
        for (a, b) in r.iter().zip(f.values()) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
