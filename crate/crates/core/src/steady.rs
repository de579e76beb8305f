//! Steady states `ω̄ = g(ψ̄)`, `ψ̄ = 𝒢ω̄`: semilinear solvers, the affine
//! family, Lane–Emden solutions and the weak steadiness residual.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::calculus::{extend_monotone, MonotoneProfile, PiecewisePoly, ScalarFn};
use crate::error::{Error, Result};
use crate::grid::{green_apply, perp_gradient, Grid, ScalarField};
use crate::linalg::ShiftedSolver;
use crate::rearrangement::BumpSpec;
use crate::spectral::{lambda1, principal_eigenpair};

/// Fixed-point residual the solvers drive toward.
const INNER_TOL: f64 = 1e-11;
/// Fixed-point residual required for success.
pub const SOLVE_TOL: f64 = 1e-8;
const RESONANCE_GAP: f64 = 1e-6;
const MIN_DAMPING: f64 = 1.0 / 64.0;
const FIXED_POINT_CAP: usize = 20_000;
const NEWTON_CAP: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    DampedFixedPoint,
    Newton,
}

/// How a steady state was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "construction", rename_all = "kebab-case")]
pub enum Construction {
    Linear { alpha: f64, beta: f64 },
    Semilinear { method: Method },
    LaneEmden { p: f64 },
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub omega_bar: ScalarField,
    pub psi_bar: ScalarField,
    /// Profile on the whole line, as used by the solver.
    g: ScalarFn,
    /// Present when `g` is nondecreasing on `[m, M]`.
    pub profile: Option<MonotoneProfile>,
    pub m: f64,
    pub big_m: f64,
    /// `‖ψ̄ - 𝒢g(ψ̄)‖₂` of the solver's final iterate.
    pub residual_fixed_point: f64,
    /// `‖ω̄ - g(ψ̄)‖₂`.
    pub residual_profile: f64,
    /// `‖ψ̄ - 𝒢ω̄‖₂`.
    pub residual_green: f64,
    /// Weak steadiness residual over the default test set.
    pub residual_weak: f64,
    pub iterations: usize,
    pub construction: Construction,
}

/// JSON metadata stored next to the snapshots of a steady state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SteadyMeta {
    #[serde(flatten)]
    pub construction: Construction,
    pub m: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    pub residual_fixed_point: f64,
    pub residual_profile: f64,
    pub residual_green: f64,
    pub residual_weak: f64,
    pub iterations: usize,
    pub omega_mass: f64,
    pub energy: f64,
}

impl SteadyState {
    pub fn g(&self) -> &ScalarFn {
        &self.g
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.omega_bar.grid()
    }

    pub fn meta(&self) -> SteadyMeta {
        SteadyMeta {
            construction: self.construction.clone(),
            m: self.m,
            big_m: self.big_m,
            residual_fixed_point: self.residual_fixed_point,
            residual_profile: self.residual_profile,
            residual_green: self.residual_green,
            residual_weak: self.residual_weak,
            iterations: self.iterations,
            omega_mass: self.omega_bar.integral(),
            energy: 0.5 * self.omega_bar.inner(&self.psi_bar).unwrap_or(f64::NAN),
        }
    }

    /// Package `ψ` (any approximate solution) into a steady state:
    /// `ω̄ = g(ψ)`, `ψ̄ = 𝒢ω̄`, range, profile and residuals.
    fn assemble(g: ScalarFn, psi: &ScalarField, fixed_point: f64, iterations: usize, construction: Construction) -> Result<Self> {
        let omega_bar = psi.map(|s| g.eval(s));
        let psi_bar = green_apply(&omega_bar)?;
        let m = psi_bar.min().min(0.0);
        let big_m = psi_bar.max().max(0.0);
        let profile = if nondecreasing_on(&g, m, big_m) { MonotoneProfile::from_fn(&g, m, big_m).ok() } else { None };
        let residual_profile = omega_bar.sub(&psi_bar.map(|s| g.eval(s)))?.lp_norm(2.0);
        let residual_green = psi_bar.sub(&green_apply(&omega_bar)?)?.lp_norm(2.0);
        let residual_weak = steady_residual(&omega_bar, &default_test_fields(psi.grid()))?;
        Ok(SteadyState {
            omega_bar,
            psi_bar,
            g,
            profile,
            m,
            big_m,
            residual_fixed_point: fixed_point,
            residual_profile,
            residual_green,
            residual_weak,
            iterations,
            construction,
        })
    }
}

fn nondecreasing_on(g: &ScalarFn, lo: f64, hi: f64) -> bool {
    let xs = crate::calculus::probe_grid(lo, hi, crate::calculus::PROBES_PER_UNIT);
    xs.windows(2).all(|w| g.eval(w[1]) >= g.eval(w[0]))
}

/// A profile usable on the whole line: bounded-domain profiles are replaced by
/// their monotone extension.
fn on_line(g: &ScalarFn) -> Result<ScalarFn> {
    if g.domain().is_bounded() {
        Ok(extend_monotone(g)?.g_ext().clone())
    } else if g.domain() == crate::calculus::Interval::REAL_LINE {
        Ok(g.clone())
    } else {
        Err(Error::InvalidArgument("profile must be defined on a bounded interval or the whole line".into()))
    }
}

/// `ψ - 𝒢g(ψ)` and its L² norm.
fn fixed_point_defect(g: &ScalarFn, psi: &ScalarField) -> Result<(ScalarField, f64)> {
    let t = green_apply(&psi.map(|s| g.eval(s)))?;
    let d = psi.sub(&t)?;
    let r = d.lp_norm(2.0);
    Ok((d, r))
}

fn scaled_tol(psi: &ScalarField) -> f64 {
    INNER_TOL * psi.lp_norm(2.0).max(1.0)
}

/// Solve `-Δψ = g(ψ)` with zero boundary values.
pub fn solve_semilinear(g: &ScalarFn, grid: &Arc<Grid>, init: Option<&ScalarField>, method: Method) -> Result<SteadyState> {
    let g_line = on_line(g)?;
    let psi0 = match init {
        Some(f) => {
            f.same_grid(&grid.zeros())?;
            f.clone()
        }
        None => grid.zeros(),
    };
    let (psi, res, iters) = match method {
        Method::DampedFixedPoint => damped_fixed_point(&g_line, psi0)?,
        Method::Newton => newton(&g_line, psi0)?,
    };
    SteadyState::assemble(g_line, &psi, res, iters, Construction::Semilinear { method })
}

fn damped_fixed_point(g: &ScalarFn, mut psi: ScalarField) -> Result<(ScalarField, f64, usize)> {
    let mut theta = 1.0;
    let (mut d, mut r) = fixed_point_defect(g, &psi)?;
    for it in 0..FIXED_POINT_CAP {
        if r < scaled_tol(&psi) {
            return Ok((psi, r, it));
        }
        let next = psi.axpy(-theta, &d)?;
        let (nd, nr) = fixed_point_defect(g, &next)?;
        if !nr.is_finite() {
            return Err(Error::NoConvergence { iterations: it, residual: r });
        }
        if nr > r && theta > MIN_DAMPING {
            theta = (theta * 0.5).max(MIN_DAMPING);
        }
        psi = next;
        d = nd;
        r = nr;
    }
    if r < SOLVE_TOL {
        Ok((psi, r, FIXED_POINT_CAP))
    } else {
        Err(Error::NoConvergence { iterations: FIXED_POINT_CAP, residual: r })
    }
}

fn newton(g: &ScalarFn, mut psi: ScalarField) -> Result<(ScalarField, f64, usize)> {
    let grid = psi.grid().clone();
    let (_, mut r) = fixed_point_defect(g, &psi)?;
    let mut lap = vec![0.0; grid.len()];
    for it in 0..NEWTON_CAP {
        if r < scaled_tol(&psi) {
            return Ok((psi, r, it));
        }
        let c: Vec<f64> = psi
            .values()
            .iter()
            .map(|&s| -g.deriv(s).unwrap_or_else(|| numeric_derivative(g, s)))
            .collect();
        grid.neg_laplacian(psi.values(), &mut lap);
        let f: Vec<f64> = lap.iter().zip(psi.values()).map(|(l, &s)| g.eval(s) - l).collect();
        let step = ShiftedSolver::new(&grid, Some(&c))?.solve(&grid, &f)?;
        let step = ScalarField::from_values(&grid, step)?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let trial = psi.axpy(t, &step)?;
            let (_, tr) = fixed_point_defect(g, &trial)?;
            if tr < r || tr < scaled_tol(&trial) {
                psi = trial;
                r = tr;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if r < SOLVE_TOL {
        Ok((psi, r, NEWTON_CAP))
    } else {
        Err(Error::NoConvergence { iterations: NEWTON_CAP, residual: r })
    }
}

fn numeric_derivative(g: &ScalarFn, s: f64) -> f64 {
    let h = 1e-6 * s.abs().max(1.0);
    (g.eval(s + h) - g.eval(s - h)) / (2.0 * h)
}

/// The affine family `g(s) = αs + β`, solved directly from `(-Δ - α)ψ = β`.
pub fn linear_steady(alpha: f64, beta: f64, grid: &Arc<Grid>) -> Result<SteadyState> {
    let l1 = lambda1(grid)?;
    if (l1 - alpha).abs() < RESONANCE_GAP {
        return Err(Error::ResonanceError { alpha, lambda1: l1 });
    }
    let shift = vec![-alpha; grid.len()];
    let rhs = grid.constant(beta);
    let psi = ShiftedSolver::new(grid, Some(&shift))?.solve(grid, rhs.values())?;
    let psi = ScalarField::from_values(grid, psi)?;
    let g = ScalarFn::affine(alpha, beta);
    let (_, r) = fixed_point_defect(&g, &psi)?;
    SteadyState::assemble(g, &psi, r, 1, Construction::Linear { alpha, beta })
}

/// `∫|∇u|²` as the sum of squared edge differences, boundary edges included.
pub fn dirichlet_energy(u: &ScalarField) -> f64 {
    let g = u.grid();
    let v = u.values();
    let mut s = 0.0;
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            let k = g.index(i, j);
            if !g.is_active(k) {
                continue;
            }
            for (di, dj) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
                let d = v[k] - g.neighbor(v, i, j, di, dj);
                // interior edges are visited from both ends
                let w = if g.active_at(i as isize + di, j as isize + dj) { 0.5 } else { 1.0 };
                s += w * d * d;
            }
        }
    }
    s
}

/// Positive solution of `-Δψ = ψ^p` by constrained minimization of `∫|∇u|²`
/// on `{∫u^{p+1} = 1, u >= 0}`, rescaling, and a Newton polish.
pub fn lane_emden_solve(p: f64, grid: &Arc<Grid>) -> Result<SteadyState> {
    if !(p > 1.0 && p < 5.0) {
        return Err(Error::InvalidArgument(format!("Lane-Emden exponent {p} outside (1, 5)")));
    }
    let pow = move |s: f64| s.max(0.0).powf(p);
    let normalize = |u: &ScalarField| {
        let q = u.map(|s| s.max(0.0).powf(p + 1.0)).integral();
        u.scale(q.powf(-1.0 / (p + 1.0)))
    };
    let quotient = |u: &ScalarField| dirichlet_energy(u);

    let (_, phi1) = principal_eigenpair(grid, None)?;
    let mut u = normalize(&phi1);
    let mut energy = quotient(&u);
    let mut tau = 1.0;
    let mut iterations = 0;
    for it in 0..2000 {
        iterations = it;
        let mu = energy;
        let target = green_apply(&u.map(pow))?.scale(mu);
        let defect = u.sub(&target)?.lp_norm(2.0) / u.lp_norm(2.0);
        if defect < 1e-7 {
            break;
        }
        let mut accepted = false;
        while tau >= 1.0 / 1024.0 {
            let trial = normalize(&u.axpy(tau, &target.sub(&u)?)?.map(|s| s.max(0.0)));
            let e = quotient(&trial);
            if e <= energy {
                u = trial;
                energy = e;
                accepted = true;
                tau = (tau * 2.0).min(1.0);
                break;
            }
            tau *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let psi = u.scale(energy.powf(1.0 / (p - 1.0)));
    let g = lane_emden_profile(p);
    let (psi, r, polish) = newton(&g, psi)?;
    if psi.min() <= 0.0 {
        return Err(Error::NoConvergence { iterations, residual: r });
    }
    SteadyState::assemble(g, &psi, r, iterations + polish, Construction::LaneEmden { p })
}

/// `g(s) = s^p` for `s >= 0`, continued below zero so that the whole-line
/// profile is nondecreasing and C¹.
fn lane_emden_profile(p: f64) -> ScalarFn {
    if p.fract() == 0.0 {
        let core = ScalarFn::poly(PiecewisePoly::monomial(p as usize));
        // extension of s^p from [0, 1]; identical to s^p for s >= 0
        let ext = extend_monotone(&core.restrict(0.0, 1.0).expect("unit interval")).expect("s^p is monotone on [0, 1]");
        let pieces = ext.g_ext().as_poly().expect("polynomial extension").pieces();
        let mut kept: Vec<_> = pieces.iter().filter(|pc| pc.hi <= 0.0).cloned().collect();
        kept.push(crate::calculus::Piece::new(0.0, f64::INFINITY, 0.0, core.as_poly().unwrap().pieces()[0].coeffs.clone()));
        ScalarFn::poly(PiecewisePoly::new(kept).expect("contiguous pieces"))
    } else {
        ScalarFn::custom(
            move |s: f64| if s >= 0.0 { s.powf(p) } else if s >= -1.0 { -s * s } else { 2.0 * (s + 1.0) - 1.0 },
            Some(move |s: f64| if s >= 0.0 { p * s.powf(p - 1.0) } else if s >= -1.0 { -2.0 * s } else { 2.0 }),
            crate::calculus::Interval::REAL_LINE,
        )
    }
}

/// Twenty interior-supported smooth bumps spread over the domain.
pub fn default_test_fields(grid: &Arc<Grid>) -> Vec<ScalarField> {
    let (x0, y0) = grid.origin();
    let (lx, ly) = grid.extent();
    let disk = matches!(grid.spec().shape, crate::grid::Shape::Disk { .. });
    let span = if disk { 0.35 } else { 0.6 };
    let mut out = Vec::with_capacity(20);
    for k in 0..20 {
        // low-discrepancy placement, deterministic
        let a = (k as f64 * 0.618_033_988_749_895).fract();
        let b = (k as f64 * 0.754_877_666_246_693 + 0.5).fract();
        let cx = x0 + lx * (0.5 + span * (a - 0.5));
        let cy = y0 + ly * (0.5 + span * (b - 0.5));
        let w = 0.12 + 0.08 * ((k % 4) as f64 / 3.0);
        let spec = BumpSpec { center: [cx, cy], width: [w * lx, w * ly], amplitude: 1.0 };
        out.push(spec.sample(grid));
    }
    out
}

/// `max_ξ |∫ω ∇⊥𝒢ω·∇ξ| / ‖ξ‖_{H¹}` over the test fields.
pub fn steady_residual(omega: &ScalarField, test_fields: &[ScalarField]) -> Result<f64> {
    let psi = green_apply(omega)?;
    let vel = perp_gradient(&psi);
    let mut worst: f64 = 0.0;
    for xi in test_fields {
        omega.same_grid(xi)?;
        let grad = perp_gradient(xi);
        // ∇ξ = (-v, u) of its perpendicular gradient
        let mut s = 0.0;
        for k in 0..omega.grid().len() {
            if omega.grid().is_active(k) {
                s += omega.values()[k] * (vel.u[k] * (-grad.v[k]) + vel.v[k] * grad.u[k]);
            }
        }
        let s = s * omega.grid().cell_area();
        let h1 = (xi.lp_norm(2.0).powi(2) + dirichlet_energy(xi)).sqrt();
        if h1 > 0.0 {
            worst = worst.max(s.abs() / h1);
        }
    }
    Ok(worst)
}
