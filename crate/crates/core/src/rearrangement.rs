//! Distribution functions, distances between rearrangement classes, and
//! area-preserving perturbations transported along `∇⊥ξ`.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, Shape};
use crate::interp::Lattice;

/// Width, in cells, of the boundary collar where `ξ` must vanish.
pub const COLLAR: isize = 2;

/// Bumps drawn per sample before [`random_perturbations`] gives up.
const MAX_REDRAWS: usize = 50;
/// Largest displacement, in cells, of one integration substep.
const SUBSTEP_CELLS: f64 = 0.5;

/// Superlevel-set measures `μ(a) = |{ω > a}|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionCurve {
    pub thresholds: Vec<f64>,
    pub measures: Vec<f64>,
}

pub fn distribution_function(omega: &ScalarField, thresholds: &[f64]) -> Result<DistributionCurve> {
    if thresholds.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidArgument("thresholds must be sorted".into()));
    }
    let mut vals = omega.active_values();
    vals.sort_by(f64::total_cmp);
    let area = omega.grid().cell_area();
    let measures = thresholds
        .iter()
        .map(|&a| (vals.len() - vals.partition_point(|&v| v <= a)) as f64 * area)
        .collect();
    Ok(DistributionCurve { thresholds: thresholds.to_vec(), measures })
}

/// `Σ|sorted(ω₁) - sorted(ω₂)|` times the cell area.
pub fn rearrangement_distance(omega1: &ScalarField, omega2: &ScalarField) -> Result<f64> {
    omega1.same_grid(omega2)?;
    let mut a = omega1.active_values();
    let mut b = omega2.active_values();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() * omega1.grid().cell_area())
}

/// Largest gap between the distribution curves of two fields over the given
/// thresholds.
pub fn distribution_gap(omega1: &ScalarField, omega2: &ScalarField, thresholds: &[f64]) -> Result<f64> {
    let a = distribution_function(omega1, thresholds)?;
    let b = distribution_function(omega2, thresholds)?;
    Ok(a.measures.iter().zip(&b.measures).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

/// The exact rearrangement of `reference` ordered like `field`: node values of
/// `reference`, sorted, are handed out in the rank order of `field`.
pub fn project_to_class(field: &ScalarField, reference: &ScalarField) -> Result<ScalarField> {
    field.same_grid(reference)?;
    let grid = field.grid();
    let mut idx: Vec<usize> = (0..grid.len()).filter(|&k| grid.is_active(k)).collect();
    idx.sort_by(|&a, &b| field.values()[a].total_cmp(&field.values()[b]).then(a.cmp(&b)));
    let mut target = reference.active_values();
    target.sort_by(f64::total_cmp);
    let mut out = vec![0.0; grid.len()];
    for (k, v) in idx.into_iter().zip(target) {
        out[k] = v;
    }
    ScalarField::from_values(grid, out)
}

/// A C∞ tensor-product bump `A b((x-cx)/wx) b((y-cy)/wy)` with
/// `b(s) = exp(1 - 1/(1-s²))` on `|s| < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpSpec {
    pub center: [f64; 2],
    pub width: [f64; 2],
    pub amplitude: f64,
}

#[inline]
fn bump1(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

impl BumpSpec {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.amplitude * bump1((x - self.center[0]) / self.width[0]) * bump1((y - self.center[1]) / self.width[1])
    }

    pub fn sample(&self, grid: &Arc<Grid>) -> ScalarField {
        grid.sample(|x, y| self.eval(x, y))
    }

    /// A broad off-centre bump, wide enough to displace `ω̄` by a tenth of its
    /// norm for the flows the ladder is meant for.
    pub fn broad(grid: &Grid) -> BumpSpec {
        let (x0, y0) = grid.origin();
        let (lx, ly) = grid.extent();
        let margin = (COLLAR + 1) as f64 * grid.h();
        match grid.spec().shape {
            Shape::Disk { r } => {
                let w = (0.45 * r).min((r - margin - 0.13 * r) / std::f64::consts::SQRT_2).max(0.0);
                BumpSpec { center: [-0.1 * r, -0.08 * r], width: [w, w], amplitude: 0.05 }
            }
            Shape::Rectangle { .. } => {
                let wx = (0.3 * lx).min(0.38 * lx - margin).max(0.0);
                let wy = (0.3 * ly).min(0.42 * ly - margin).max(0.0);
                BumpSpec { center: [x0 + 0.38 * lx, y0 + 0.42 * ly], width: [wx, wy], amplitude: 0.05 }
            }
        }
    }

    /// A random bump whose support keeps clear of the boundary collar.
    pub fn random<R: Rng>(rng: &mut R, grid: &Grid) -> BumpSpec {
        let (x0, y0) = grid.origin();
        let (lx, ly) = grid.extent();
        let margin = (COLLAR + 1) as f64 * grid.h();
        let w = rng.gen_range(0.12..0.2);
        let (wx, wy) = (w * lx, w * ly);
        let (cx, cy) = match grid.spec().shape {
            Shape::Disk { r } => {
                let reach = (r - margin - wx.hypot(wy)).max(0.0);
                let rho = reach * rng.gen_range(0.0..1.0f64).sqrt();
                let th = rng.gen_range(0.0..std::f64::consts::TAU);
                (rho * th.cos(), rho * th.sin())
            }
            Shape::Rectangle { .. } => {
                let span = |lo: f64, len: f64, half: f64, u: f64| {
                    let (a, b) = (lo + half + margin, lo + len - half - margin);
                    if a < b { a + (b - a) * u } else { lo + 0.5 * len }
                };
                (span(x0, lx, wx, rng.gen_range(0.0..1.0)), span(y0, ly, wy, rng.gen_range(0.0..1.0)))
            }
        };
        BumpSpec { center: [cx, cy], width: [wx, wy], amplitude: rng.gen_range(0.5..1.0) }
    }
}

/// A perturbation: transport along `∇⊥ξ` for time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub xi: BumpSpec,
    pub t: f64,
}

impl PerturbationSpec {
    pub fn apply(&self, omega: &ScalarField) -> Result<ScalarField> {
        perturb_area_preserving(omega, &self.xi.sample(omega.grid()), self.t)
    }
}

/// `SupportViolation` unless `ξ` vanishes on the boundary collar.
pub fn check_collar(xi: &ScalarField) -> Result<()> {
    let g = xi.grid();
    for k in 0..g.len() {
        if !g.is_active(k) || xi.values()[k] == 0.0 {
            continue;
        }
        let (i, j) = ((k % g.nx()) as isize, (k / g.nx()) as isize);
        for dj in -COLLAR..=COLLAR {
            for di in -COLLAR..=COLLAR {
                if !g.active_at(i + di, j + dj) {
                    return Err(Error::SupportViolation);
                }
            }
        }
    }
    Ok(())
}

/// Classical RK4 along `dX/ds = sign ∇⊥Ξ(X)` for `n` substeps of size `ds`.
#[inline]
pub(crate) fn rk4_trace(vel: &Lattice, mut x: f64, mut y: f64, ds: f64, n: usize) -> (f64, f64) {
    for _ in 0..n {
        let (u1, v1) = vel.perp_gradient(x, y);
        let (u2, v2) = vel.perp_gradient(x + 0.5 * ds * u1, y + 0.5 * ds * v1);
        let (u3, v3) = vel.perp_gradient(x + 0.5 * ds * u2, y + 0.5 * ds * v2);
        let (u4, v4) = vel.perp_gradient(x + ds * u3, y + ds * v3);
        x += ds / 6.0 * (u1 + 2.0 * u2 + 2.0 * u3 + u4);
        y += ds / 6.0 * (v1 + 2.0 * v2 + 2.0 * v3 + v4);
    }
    (x, y)
}

/// `ω ∘ Φ₋ₜ` where `Φ` is the flow of `∇⊥ξ`; values are pulled back by
/// bilinear interpolation.
pub fn perturb_area_preserving(omega: &ScalarField, xi: &ScalarField, t: f64) -> Result<ScalarField> {
    omega.same_grid(xi)?;
    check_collar(xi)?;
    let grid = omega.grid();
    if t == 0.0 {
        return Ok(omega.clone());
    }
    let vel = Lattice::zero_padded(grid, xi.values(), 2);
    let vmax = vel.max_node_speed(grid);
    // margin for the speed between nodes
    let steps = ((1.25 * vmax * t.abs()) / (SUBSTEP_CELLS * grid.h())).ceil().max(1.0) as usize;
    let ds = -t / steps as f64;
    let field = Lattice::zero_padded(grid, omega.values(), 1);
    let values: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            if !grid.is_active(k) {
                return 0.0;
            }
            let (x, y) = grid.coords(k);
            let (fx, fy) = rk4_trace(&vel, x, y, ds, steps);
            field.bilinear(fx, fy)
        })
        .collect();
    ScalarField::from_values(grid, values)
}

/// Smallest transport time `t` with `‖P_t(ω̄) - ω̄‖_p = ε`: geometric
/// bracketing from a sub-cell displacement, then Illinois false position.
pub fn perturbation_time(omega_bar: &ScalarField, xi: &ScalarField, eps: f64, p: f64) -> Result<(f64, ScalarField)> {
    let dist = |t: f64| -> Result<(f64, ScalarField)> {
        let f = perturb_area_preserving(omega_bar, xi, t)?;
        Ok((f.sub(omega_bar)?.lp_norm(p) - eps, f))
    };
    let lat = Lattice::zero_padded(omega_bar.grid(), xi.values(), 2);
    let vmax = lat.max_node_speed(omega_bar.grid());
    if !(vmax > 0.0) || !(eps > 0.0) {
        return Err(Error::InvalidArgument("perturbation needs a nonzero stream function and target".into()));
    }
    let (lx, ly) = omega_bar.grid().extent();
    let reach = lx.max(ly);
    let (mut t0, mut f0) = (0.0, -eps);
    let mut t1 = 0.01 * omega_bar.grid().h() / vmax;
    let (mut f1, mut field) = dist(t1)?;
    let mut grow = 0;
    while f1 < 0.0 {
        grow += 1;
        // give up once particles could have crossed the domain several times
        if grow > 80 || t1 * vmax > 4.0 * reach {
            return Err(Error::UnreachableDistance { target: eps });
        }
        (t0, f0) = (t1, f1);
        t1 *= 1.5;
        (f1, field) = dist(t1)?;
    }
    // f0 < 0 <= f1
    let (mut side, mut iterations) = (0i8, 0);
    let (mut best_t, mut last) = (t1, f1);
    while last.abs() > 1e-6 * eps {
        iterations += 1;
        if iterations > 100 {
            return Err(Error::NoConvergence { iterations, residual: last.abs() / eps });
        }
        let t = (t0 * f1 - t1 * f0) / (f1 - f0);
        let (ft, f) = dist(t)?;
        (best_t, last) = (t, ft);
        if ft < 0.0 {
            field = f;
            (t0, f0) = (t, ft);
            if side == -1 {
                f1 *= 0.5;
            }
            side = -1;
        } else {
            (t1, f1) = (t, ft);
            field = f;
            if side == 1 {
                f0 *= 0.5;
            }
            side = 1;
        }
        if (t1 - t0).abs() <= 1e-14 * t1 {
            break;
        }
    }
    Ok((best_t, field))
}

/// One random area-preserving perturbation at a prescribed distance.
#[derive(Debug, Clone)]
pub struct PerturbationSample {
    pub spec: PerturbationSpec,
    /// Target `‖ω - ω̄‖₂ / ‖ω̄‖₂`.
    pub relative_distance: f64,
    pub field: ScalarField,
}

/// `count` perturbations of `omega_bar` with random bumps and relative `L²`
/// distances drawn log-uniformly from `range`.
pub fn random_perturbations<R: Rng>(omega_bar: &ScalarField, count: usize, range: (f64, f64), rng: &mut R) -> Result<Vec<PerturbationSample>> {
    if !(range.0 > 0.0 && range.0 <= range.1) {
        return Err(Error::InvalidArgument(format!("distance range {range:?} must be positive and ordered")));
    }
    let norm = omega_bar.lp_norm(2.0);
    let grid = omega_bar.grid();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let u: f64 = rng.gen_range(0.0..=1.0);
        let rel = range.0 * (range.1 / range.0).powf(u);
        // a small bump over a flat part of ω̄ may never move it far enough
        let mut attempts = 0;
        loop {
            let xi = BumpSpec::random(rng, grid);
            match perturbation_time(omega_bar, &xi.sample(grid), rel * norm, 2.0) {
                Ok((t, field)) => {
                    out.push(PerturbationSample { spec: PerturbationSpec { xi, t }, relative_distance: rel, field });
                    break;
                }
                Err(Error::UnreachableDistance { .. }) if attempts < MAX_REDRAWS => attempts += 1,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridSpec};

    #[test]
    fn plateau_measure() {
        let g = build_grid(GridSpec::unit_square(64)).unwrap();
        let f = g.sample(|x, y| if (x - 0.5).abs() < 0.25 && (y - 0.5).abs() < 0.25 { 1.0 } else { 0.0 });
        let d = distribution_function(&f, &[0.5, 2.0]).unwrap();
        assert!((d.measures[0] - 0.25).abs() < 2.0 * g.h());
        assert_eq!(d.measures[1], 0.0);
    }

    #[test]
    fn shift_distance() {
        let g = build_grid(GridSpec::unit_square(16)).unwrap();
        let f = g.sample(|x, y| x * y);
        let d = rearrangement_distance(&f, &f.map(|v| v + 0.3)).unwrap();
        assert!((d - 0.3 * g.area()).abs() < 1e-12);
    }

    #[test]
    fn collar_is_enforced() {
        let g = build_grid(GridSpec::unit_square(16)).unwrap();
        let f = g.sample(|x, y| x + y);
        assert!(matches!(perturb_area_preserving(&f, &g.constant(1.0), 0.1), Err(Error::SupportViolation)));
    }

    #[test]
    fn projection_is_exact_rearrangement() {
        let g = build_grid(GridSpec::unit_square(16)).unwrap();
        let a = g.sample(|x, y| (x - 0.3).powi(2) + y);
        let b = g.sample(|x, y| x - y * y);
        let p = project_to_class(&b, &a).unwrap();
        assert_eq!(rearrangement_distance(&p, &a).unwrap(), 0.0);
    }

    #[test]
    fn forward_then_back_error_is_second_order() {
        let err = |n: usize| {
            let g = build_grid(GridSpec::unit_square(n)).unwrap();
            let omega = g.sample(|x, y| (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin());
            let xi = BumpSpec { center: [0.45, 0.55], width: [0.3, 0.3], amplitude: 0.05 }.sample(&g);
            let there = perturb_area_preserving(&omega, &xi, 1.0).unwrap();
            let back = perturb_area_preserving(&there, &xi, -1.0).unwrap();
            back.sub(&omega).unwrap().lp_norm(2.0)
        };
        let (coarse, fine) = (err(64), err(128));
        assert!(coarse / fine > 3.0, "{coarse} -> {fine}");
    }
}
