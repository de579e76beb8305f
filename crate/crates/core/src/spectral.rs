//! Principal eigenvalues of shifted Laplacians, the rank-one-corrected
//! coercivity constant, and the stability classification built on them.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calculus::probe_grid;
use crate::error::{Error, Result};
use crate::grid::{dot, Grid, ScalarField};
use crate::linalg::ShiftedSolver;
use crate::steady::SteadyState;

/// Absolute residual the eigen-iteration aims for.
const TARGET_RESIDUAL: f64 = 1e-10;
/// Residual above which the iteration is reported as failed.
pub const MAX_RESIDUAL: f64 = 1e-8;
const BLOCK: usize = 4;
const MAX_ITER: usize = 400;
const START_SEED: u64 = 0x5eed_0f_e16e;

/// `B = -Δ + diag(c) + g gᵀ / s` in Euclidean node coordinates.
struct Problem<'a> {
    grid: &'a Grid,
    c: Vec<f64>,
    rank_one: Option<(Vec<f64>, f64)>,
}

struct Factor {
    solver: ShiftedSolver,
    /// `(g, K⁻¹g, s + gᵀK⁻¹g)` for the Sherman–Morrison update.
    rank_one: Option<(Vec<f64>, Vec<f64>, f64)>,
    negatives: usize,
}

impl Problem<'_> {
    fn apply(&self, u: &[f64], out: &mut [f64]) {
        self.grid.neg_laplacian(u, out);
        for k in 0..self.grid.len() {
            if self.grid.is_active(k) {
                out[k] += self.c[k] * u[k];
            }
        }
        if let Some((g, s)) = &self.rank_one {
            let w = dot(g, u) / s;
            for (o, gi) in out.iter_mut().zip(g) {
                *o += w * gi;
            }
        }
    }

    fn factor(&self, sigma: f64) -> Result<Factor> {
        let shifted: Vec<f64> = self.c.iter().map(|c| c - sigma).collect();
        let solver = ShiftedSolver::new(self.grid, Some(&shifted))?;
        let mut negatives = solver.negative_eigenvalues();
        let rank_one = match &self.rank_one {
            None => None,
            Some((g, s)) => {
                let kg = solver.solve(self.grid, g)?;
                let denom = s + dot(g, &kg);
                // a positive rank-one term removes a negative eigenvalue iff the
                // determinant changes sign
                if denom < 0.0 && negatives > 0 {
                    negatives -= 1;
                }
                Some((g.clone(), kg, denom))
            }
        };
        Ok(Factor { solver, rank_one, negatives })
    }
}

impl Factor {
    fn solve(&self, grid: &Grid, f: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.solver.solve(grid, f)?;
        if let Some((g, kg, denom)) = &self.rank_one {
            let w = dot(g, &x) / denom;
            for (xi, k) in x.iter_mut().zip(kg) {
                *xi -= w * k;
            }
        }
        Ok(x)
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Modified Gram–Schmidt, applied twice; collapsed vectors are replaced by
/// fresh deterministic random ones.
fn orthonormalize(grid: &Grid, vs: &mut [Vec<f64>], rng: &mut ChaCha8Rng) {
    for i in 0..vs.len() {
        for attempt in 0..4 {
            let before = dot(&vs[i], &vs[i]).sqrt();
            for _ in 0..2 {
                for j in 0..i {
                    let p = dot(&vs[i], &vs[j]);
                    let (head, tail) = vs.split_at_mut(i);
                    for (a, b) in tail[0].iter_mut().zip(&head[j]) {
                        *a -= p * b;
                    }
                }
            }
            let after = normalize(&mut vs[i]);
            if after > 1e-10 * before && after > 0.0 {
                break;
            }
            if attempt == 3 {
                break;
            }
            vs[i] = random_vector(grid, rng);
        }
    }
}

fn random_vector(grid: &Grid, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..grid.len()).map(|k| if grid.is_active(k) { rng.gen_range(-1.0..1.0) } else { 0.0 }).collect()
}

/// Smallest eigenpair by block shift-invert subspace iteration with
/// Rayleigh–Ritz; the shift is moved once toward the target, guarded by the
/// inertia of the shifted factorization.
fn smallest_eigenpair(problem: &Problem<'_>, sigma0: f64) -> Result<(f64, Vec<f64>)> {
    let grid = problem.grid;
    let n = grid.len();
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let block = BLOCK.min(grid.active_count());
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(block);
    vs.push((0..n).map(|k| if grid.is_active(k) { 1.0 } else { 0.0 }).collect());
    while vs.len() < block {
        vs.push(random_vector(grid, &mut rng));
    }
    orthonormalize(grid, &mut vs, &mut rng);

    let mut factor = problem.factor(sigma0)?;
    let mut reshifted = false;
    let mut best = (f64::INFINITY, 0.0, Vec::new());
    let mut stalled = 0;
    let mut aw = vec![vec![0.0; n]; block];
    for _ in 0..MAX_ITER {
        let mut ws = vs.iter().map(|v| factor.solve(grid, v)).collect::<Result<Vec<_>>>()?;
        orthonormalize(grid, &mut ws, &mut rng);
        for (w, a) in ws.iter().zip(aw.iter_mut()) {
            problem.apply(w, a);
        }
        let h = DMatrix::from_fn(block, block, |i, j| 0.5 * (dot(&ws[i], &aw[j]) + dot(&ws[j], &aw[i])));
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..block).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let thetas: Vec<f64> = order.iter().map(|&c| eig.eigenvalues[c]).collect();
        let mut next = vec![vec![0.0; n]; block];
        let mut a0 = vec![0.0; n];
        for (r, &col) in order.iter().enumerate() {
            for (m, w) in ws.iter().enumerate() {
                let y = eig.eigenvectors[(m, col)];
                for (t, x) in next[r].iter_mut().zip(w) {
                    *t += y * x;
                }
                if r == 0 {
                    for (t, x) in a0.iter_mut().zip(&aw[m]) {
                        *t += y * x;
                    }
                }
            }
        }
        let theta = thetas[0];
        let res = a0.iter().zip(&next[0]).map(|(a, v)| (a - theta * v).powi(2)).sum::<f64>().sqrt();
        vs = next;
        if res < best.0 {
            if res < 0.5 * best.0 {
                stalled = 0;
            } else {
                stalled += 1;
            }
            best = (res, theta, vs[0].clone());
        } else {
            stalled += 1;
        }
        if res < TARGET_RESIDUAL || (stalled >= 8 && best.0 < MAX_RESIDUAL) {
            break;
        }
        if !reshifted && block > 1 {
            let gap = thetas[1] - theta;
            if gap > 0.0 && res < 1e-3 * gap {
                let sigma = theta - 0.5 * gap - res;
                if let Ok(f) = problem.factor(sigma) {
                    if f.negatives == 0 {
                        factor = f;
                    }
                }
                reshifted = true;
            }
        }
    }
    let (res, theta, mut u) = best;
    if !(res < MAX_RESIDUAL) {
        return Err(Error::ConvergenceFailure { residual: res });
    }
    if u.iter().sum::<f64>() < 0.0 {
        u.iter_mut().for_each(|x| *x = -*x);
    }
    Ok((theta, u))
}

fn to_weighted(grid: &std::sync::Arc<Grid>, u: Vec<f64>) -> ScalarField {
    let inv_h = 1.0 / grid.h();
    ScalarField::from_values(grid, u.into_iter().map(|x| x * inv_h).collect()).expect("eigenvector is finite")
}

/// Smallest eigenvalue of `-Δ + diag(c)` and its eigenfunction, normalized to
/// unit L² norm with positive integral.
pub fn principal_eigenpair(grid: &std::sync::Arc<Grid>, c: Option<&ScalarField>) -> Result<(f64, ScalarField)> {
    match c {
        None => {
            if let Some((l, u)) = grid.principal.get() {
                return Ok((*l, ScalarField::from_values(grid, u.clone())?));
            }
            let (l, u) = principal_uncached(grid, vec![0.0; grid.len()])?;
            let _ = grid.principal.set((l, u.values().to_vec()));
            Ok((l, u))
        }
        Some(c) => {
            if c.grid().spec() != grid.spec() {
                return Err(Error::GridMismatch);
            }
            principal_uncached(grid, c.values().to_vec())
        }
    }
}

fn principal_uncached(grid: &std::sync::Arc<Grid>, c: Vec<f64>) -> Result<(f64, ScalarField)> {
    let cmin = (0..grid.len()).filter(|&k| grid.is_active(k)).map(|k| c[k]).fold(f64::INFINITY, f64::min);
    let problem = Problem { grid, c, rank_one: None };
    let (l, u) = smallest_eigenpair(&problem, cmin - 1.0)?;
    Ok((l, to_weighted(grid, u)))
}

/// The discrete principal Dirichlet eigenvalue `λ₁ʰ` of the grid (cached).
pub fn lambda1(grid: &std::sync::Arc<Grid>) -> Result<f64> {
    principal_eigenpair(grid, None).map(|(l, _)| l)
}

/// `δ = min ∫|∇u|² - ∫g'u² + (∫g'u)²/∫g'` over unit-norm `u`: the smallest
/// eigenvalue of the rank-one-corrected linearized operator.
pub fn coercivity_delta(gprime: &ScalarField) -> Result<f64> {
    coercivity_pair(gprime).map(|(d, _)| d)
}

/// [`coercivity_delta`] together with its minimizing unit-norm field.
pub fn coercivity_pair(gprime: &ScalarField) -> Result<(f64, ScalarField)> {
    let grid = gprime.grid();
    let g = gprime.values().to_vec();
    let s: f64 = g.iter().sum();
    let mass = s * grid.cell_area();
    if !(mass > 0.0) {
        return Err(Error::MassViolation(mass));
    }
    let gmax = gprime.max();
    let problem = Problem { grid, c: g.iter().map(|v| -v).collect(), rank_one: Some((g, s)) };
    let (d, u) = smallest_eigenpair(&problem, -gmax - 1.0)?;
    Ok((d, to_weighted(grid, u)))
}

/// Number of negative eigenvalues of `-Δ + diag(c)` (Sylvester inertia).
pub fn morse_index(c: &ScalarField) -> Result<usize> {
    let grid = c.grid();
    Ok(ShiftedSolver::new(grid, Some(c.values()))?.negative_eigenvalues())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Classification {
    None,
    /// Strictly decreasing profile: `ω̄` minimizes the energy on its class.
    ArnoldFirst,
    /// `0 < g' <= λ₁`: `ω̄` maximizes the energy on its class.
    ArnoldSecond,
    /// Strictly increasing profile with positive-definite linearization.
    WolanskyGhil,
    /// Nondecreasing profile whose rank-one-corrected linearization is
    /// coercive (or whose `g'` vanishes on the range of `ψ̄`).
    Thm1Semistable,
}

impl Classification {
    fn strength(self) -> u8 {
        match self {
            Classification::None => 0,
            Classification::ArnoldFirst => 1,
            Classification::ArnoldSecond => 2,
            Classification::WolanskyGhil => 3,
            Classification::Thm1Semistable => 4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityCertificate {
    pub lambda1: f64,
    pub mu1: f64,
    pub delta: Option<f64>,
    pub mass_gprime: f64,
    pub classification: Classification,
    /// Every criterion that holds, strongest first.
    pub labels: Vec<Classification>,
    pub gprime_min: f64,
    pub gprime_max: f64,
    pub m: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    pub tolerance: f64,
    pub evidence: Vec<String>,
}

/// Decision tolerance of [`classify_stability`].
pub const CLASSIFY_TOL: f64 = 1e-6;

/// Evaluate every stability criterion for a steady state and keep the
/// strongest one that holds.
pub fn classify_stability(steady: &SteadyState) -> Result<StabilityCertificate> {
    let tol = CLASSIFY_TOL;
    let grid = steady.omega_bar.grid();
    let g = steady.g();
    let (m, big_m) = (steady.m, steady.big_m);
    let mut evidence = Vec::new();

    let uniform = probe_grid(m, big_m, crate::calculus::PROBES_PER_UNIT);
    let mut probes = uniform.clone();
    probes.extend(steady.psi_bar.active_values());
    probes.sort_by(f64::total_cmp);
    probes.dedup();
    let dg = |s: f64| {
        g.deriv(s).ok_or_else(|| Error::RegularityViolation(format!("{} profile has no derivative", g.kind())))
    };
    let mut gp_min = f64::INFINITY;
    let mut gp_max = f64::NEG_INFINITY;
    for &s in &probes {
        let d = dg(s)?;
        gp_min = gp_min.min(d);
        gp_max = gp_max.max(d);
    }
    let values: Vec<f64> = probes.iter().map(|&s| g.eval(s)).collect();
    let nondecreasing = gp_min >= -tol && values.windows(2).all(|w| w[1] >= w[0]);
    // nodal values of ψ̄ may sit closer together than g can resolve, so strict
    // growth is read off g' or the uniform probes
    let strictly_increasing =
        nondecreasing && (gp_min > 0.0 || uniform.windows(2).all(|w| g.eval(w[1]) > g.eval(w[0])));
    evidence.push(format!("g' ranges over [{gp_min:.6e}, {gp_max:.6e}] on {} probes of [m, M]", probes.len()));

    let lambda1 = lambda1(grid)?;
    let gprime_field = steady.psi_bar.map(|s| g.deriv(s).unwrap_or(f64::NAN));
    let c = gprime_field.scale(-1.0);
    let (mu1, _) = principal_eigenpair(grid, Some(&c))?;
    let mass_gprime = gprime_field.integral();
    let index = morse_index(&c)?;
    evidence.push(format!("linearized operator has {index} negative eigenvalue(s); mu1 = {mu1:.9e}"));

    let mut labels = Vec::new();
    if gp_max < 0.0 {
        labels.push(Classification::ArnoldFirst);
    }
    if gp_min > 0.0 && gp_max <= lambda1 {
        labels.push(Classification::ArnoldSecond);
    }
    if strictly_increasing && mu1 > tol {
        labels.push(Classification::WolanskyGhil);
    }
    let mut delta = None;
    if nondecreasing {
        if mass_gprime <= tol * grid.area() {
            evidence.push(format!("g' has negligible mass {mass_gprime:.3e} on the range of psi"));
            labels.push(Classification::Thm1Semistable);
        } else {
            let d = coercivity_delta(&gprime_field)?;
            delta = Some(d);
            evidence.push(format!("coercivity constant delta = {d:.9e}"));
            if d > tol && mu1 >= -tol {
                labels.push(Classification::Thm1Semistable);
            }
        }
    }
    labels.sort_by_key(|c| std::cmp::Reverse(c.strength()));
    let classification = labels.first().copied().unwrap_or(Classification::None);
    Ok(StabilityCertificate {
        lambda1,
        mu1,
        delta,
        mass_gprime,
        classification,
        labels,
        gprime_min: gp_min,
        gprime_max: gp_max,
        m,
        big_m,
        tolerance: tol,
        evidence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridSpec};

    /// Dense reference: smallest eigenvalue of `L - diag(g) + g gᵀ / Σg`.
    fn dense_smallest(grid: &Grid, g: &[f64], rank_one: bool) -> f64 {
        let n = grid.len();
        let mut a = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for k in 0..n {
            e.iter_mut().for_each(|x| *x = 0.0);
            e[k] = 1.0;
            grid.neg_laplacian(&e, &mut col);
            for i in 0..n {
                a[(i, k)] = col[i];
            }
            a[(k, k)] -= g[k];
        }
        if rank_one {
            let s: f64 = g.iter().sum();
            for i in 0..n {
                for j in 0..n {
                    a[(i, j)] += g[i] * g[j] / s;
                }
            }
        }
        SymmetricEigen::new(a).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn principal_matches_dense() {
        let g = build_grid(GridSpec::unit_square(16)).unwrap();
        let (l, u) = principal_eigenpair(&g, None).unwrap();
        let dense = dense_smallest(&g, &vec![0.0; g.len()], false);
        assert!((l - dense).abs() < 1e-9);
        assert!(u.active_values().iter().all(|&v| v > 0.0));
        assert!((u.lp_norm(2.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coercivity_matches_dense() {
        let g = build_grid(GridSpec::unit_square(16)).unwrap();
        let gp = g.sample(|x, y| 8.0 + 20.0 * (-(x - 0.3).powi(2) / 0.02 - (y - 0.6).powi(2) / 0.05).exp());
        let d = coercivity_delta(&gp).unwrap();
        let dense = dense_smallest(&g, gp.values(), true);
        assert!((d - dense).abs() < 1e-8, "{d} vs {dense}");
    }

    #[test]
    fn zero_mass_is_rejected() {
        let g = build_grid(GridSpec::unit_square(16)).unwrap();
        assert!(matches!(coercivity_delta(&g.zeros()), Err(Error::MassViolation(_))));
    }

    #[test]
    fn disk_eigenvalue_near_bessel_zero() {
        // j_{0,1}² for the unit disk
        let g = build_grid(GridSpec::disk(1.0, 48)).unwrap();
        let l = lambda1(&g).unwrap();
        assert!((l - 5.783_185_962_946_784).abs() < 0.05 * 5.78);
    }
}
