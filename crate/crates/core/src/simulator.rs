//! Semi-Lagrangian integration of the vorticity equation `∂tω + v·∇ω = 0`,
//! `v = ∇⊥𝒢ω`, with conservation diagnostics and perturbation experiments.
//!
//! Each step traces characteristics backward with classical RK4 through the
//! gradient of a Catmull–Rom interpolant of `ψ` (an exactly divergence-free
//! velocity, tangential to straight walls), using `ψ` extrapolated linearly in
//! time from the last two steps. The vorticity is read at the foot points from
//! a Catmull–Rom interpolant of `ω` and clamped to the previous range of `ω`;
//! the small mass defect of each step is then put back where the cubic and
//! bilinear reconstructions disagree.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{green_apply, Grid, ScalarField, Shape};
use crate::interp::Lattice;
use crate::rearrangement::{perturbation_time, rearrangement_distance, BumpSpec};
use crate::spectral::{classify_stability, Classification};
use crate::steady::SteadyState;

/// Largest admissible `max|v| dt / h`.
pub const CFL_LIMIT: f64 = 0.5;
const PAD: usize = 2;
/// Ghost layers filled around the disk before zero padding takes over.
const DISK_FILL_LAYERS: usize = 3;

#[derive(Debug, Clone)]
pub struct SimState {
    pub t: f64,
    pub omega: ScalarField,
    pub psi: ScalarField,
    pub step_count: usize,
    /// `ψ` and step size of the previous step, for time extrapolation.
    prev: Option<(Vec<f64>, f64)>,
}

impl SimState {
    pub fn new(omega: ScalarField) -> Result<Self> {
        let psi = green_apply(&omega)?;
        Ok(SimState { t: 0.0, omega, psi, step_count: 0, prev: None })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.omega.grid()
    }

    /// Largest node speed of the current velocity.
    pub fn max_speed(&self) -> f64 {
        psi_lattice(self.grid(), self.psi.values()).max_node_speed(self.grid())
    }

    /// Largest stable step for the given Courant number.
    pub fn stable_dt(&self, cfl: f64) -> f64 {
        let v = self.max_speed();
        if v > 0.0 {
            cfl * self.grid().h() / v
        } else {
            f64::INFINITY
        }
    }
}

/// Stream-function lattice: zero on the wall, cubic extrapolation to ghosts
/// on rectangles, zero outside the disk.
fn psi_lattice(grid: &Grid, psi: &[f64]) -> Lattice {
    match grid.spec().shape {
        Shape::Rectangle { .. } => extrapolated(grid, psi, true, None),
        Shape::Disk { .. } => Lattice::zero_padded(grid, psi, PAD),
    }
}

/// Vorticity lattice: quadratic extrapolation across walls (clamped to
/// `range`), neighbour-average fill outside the disk.
fn omega_lattice(grid: &Grid, omega: &[f64], range: (f64, f64)) -> Lattice {
    match grid.spec().shape {
        Shape::Rectangle { .. } => extrapolated(grid, omega, false, Some(range)),
        Shape::Disk { .. } => disk_filled(grid, omega),
    }
}

/// Lattice over the bounding box with ghost layers filled by polynomial
/// extrapolation normal to each wall (rows first, then columns).
fn extrapolated(grid: &Grid, f: &[f64], dirichlet: bool, clamp: Option<(f64, f64)>) -> Lattice {
    let (nx, ny) = (grid.nx() as isize, grid.ny() as isize);
    let p = PAD as isize;
    let w = (nx + 2 + 2 * p) as usize;
    let hgt = (ny + 2 + 2 * p) as usize;
    let mut a = vec![0.0; w * hgt];
    let at = |i: isize, j: isize| ((j + p) as usize) * w + (i + p) as usize;
    for j in 1..=ny {
        for i in 1..=nx {
            a[at(i, j)] = f[(j - 1) as usize * grid.nx() + (i - 1) as usize];
        }
    }
    let fix = |v: f64| match clamp {
        Some((lo, hi)) => v.clamp(lo, hi),
        None => v,
    };
    // values at offsets 0, -1, -2 from the wall, given interior values f1, f2, f3
    let extend = |f1: f64, f2: f64, f3: f64| -> [f64; 3] {
        if dirichlet {
            [0.0, -6.0 * f1 + 4.0 * f2 - f3, -20.0 * f1 + 15.0 * f2 - 4.0 * f3]
        } else {
            [
                fix(3.0 * f1 - 3.0 * f2 + f3),
                fix(6.0 * f1 - 8.0 * f2 + 3.0 * f3),
                fix(10.0 * f1 - 15.0 * f2 + 6.0 * f3),
            ]
        }
    };
    for j in 1..=ny {
        let lo = extend(a[at(1, j)], a[at(2, j)], a[at(3, j)]);
        let hi = extend(a[at(nx, j)], a[at(nx - 1, j)], a[at(nx - 2, j)]);
        for s in 0..3 {
            a[at(-(s as isize), j)] = lo[s];
            a[at(nx + 1 + s as isize, j)] = hi[s];
        }
    }
    for i in -p..nx + 2 + p {
        let lo = extend(a[at(i, 1)], a[at(i, 2)], a[at(i, 3)]);
        let hi = extend(a[at(i, ny)], a[at(i, ny - 1)], a[at(i, ny - 2)]);
        for s in 0..3 {
            a[at(i, -(s as isize))] = lo[s];
            a[at(i, ny + 1 + s as isize)] = hi[s];
        }
    }
    Lattice::build(grid, PAD, |i, j| a[at(i, j)])
}

fn disk_filled(grid: &Grid, f: &[f64]) -> Lattice {
    let (nx, ny) = (grid.nx() as isize, grid.ny() as isize);
    let p = PAD as isize;
    let w = (nx + 2 + 2 * p) as usize;
    let hgt = (ny + 2 + 2 * p) as usize;
    let at = |i: isize, j: isize| ((j + p) as usize) * w + (i + p) as usize;
    let mut a = vec![0.0; w * hgt];
    let mut known = vec![false; w * hgt];
    for j in 0..ny {
        for i in 0..nx {
            if grid.active_at(i, j) {
                a[at(i + 1, j + 1)] = f[j as usize * grid.nx() + i as usize];
                known[at(i + 1, j + 1)] = true;
            }
        }
    }
    for _ in 0..DISK_FILL_LAYERS {
        let mut updates = Vec::new();
        for j in -p..ny + 2 + p {
            for i in -p..nx + 2 + p {
                if known[at(i, j)] {
                    continue;
                }
                let (mut s, mut c) = (0.0, 0);
                for (di, dj) in [(-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (1, -1), (-1, 1), (1, 1)] {
                    let (ii, jj) = (i + di, j + dj);
                    if ii >= -p && jj >= -p && ii < nx + 2 + p && jj < ny + 2 + p && known[at(ii, jj)] {
                        s += a[at(ii, jj)];
                        c += 1;
                    }
                }
                if c > 0 {
                    updates.push((at(i, j), s / c as f64));
                }
            }
        }
        for (k, v) in updates {
            a[k] = v;
            known[k] = true;
        }
    }
    Lattice::build(grid, PAD, |i, j| a[at(i, j)])
}

/// Clamp a point into the closed physical domain.
#[inline]
fn clamp_to_domain(grid: &Grid, x: f64, y: f64) -> (f64, f64) {
    match grid.spec().shape {
        Shape::Rectangle { .. } => {
            let (x0, y0) = grid.origin();
            let (lx, ly) = grid.extent();
            (x.clamp(x0, x0 + lx), y.clamp(y0, y0 + ly))
        }
        Shape::Disk { r } => {
            let d = x.hypot(y);
            if d > r {
                (x * r / d, y * r / d)
            } else {
                (x, y)
            }
        }
    }
}

/// Add the mass defect back, distributed in proportion to the gap between
/// the cubic and bilinear foot-point values so it lands where the field is
/// least resolved.
fn restore_mass(grid: &Grid, values: &mut [f64], feet: &[(f64, f64)], target: f64) {
    let area = grid.cell_area();
    let defect = target / area - values.iter().sum::<f64>();
    let weights: Vec<f64> = feet.iter().map(|(c, l)| (c - l).abs()).collect();
    let total: f64 = weights.iter().sum();
    if defect == 0.0 || !(total > 0.0) {
        return;
    }
    for (v, w) in values.iter_mut().zip(&weights) {
        *v += defect * w / total;
    }
}

/// Advance by `dt`; fails if `max|v| dt > 0.5 h`.
pub fn step(state: &SimState, dt: f64) -> Result<SimState> {
    let grid = state.grid().clone();
    let h = grid.h();
    let psi_now = state.psi.values();
    let lat_now = psi_lattice(&grid, psi_now);
    let vmax = lat_now.max_node_speed(&grid);
    let courant = vmax * dt;
    if courant > CFL_LIMIT * h * (1.0 + 1e-12) {
        return Err(Error::CflViolation { courant, limit: CFL_LIMIT * h });
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step {dt} must be positive")));
    }
    // ψ at t_n + dt/2 and t_n + dt, extrapolated from the last two steps
    let (lat_half, lat_next) = match &state.prev {
        Some((prev, dt_prev)) => {
            let r = dt / dt_prev;
            let at = |s: f64| -> Vec<f64> { psi_now.iter().zip(prev).map(|(&a, &b)| a + s * r * (a - b)).collect() };
            (psi_lattice(&grid, &at(0.5)), psi_lattice(&grid, &at(1.0)))
        }
        None => (lat_now.clone(), lat_now.clone()),
    };
    let (lo, hi) = (state.omega.min(), state.omega.max());
    let om = omega_lattice(&grid, state.omega.values(), (lo, hi));
    let feet: Vec<(f64, f64)> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            if !grid.is_active(k) {
                return (0.0, 0.0);
            }
            let (x, y) = grid.coords(k);
            let (u1, v1) = lat_next.perp_gradient(x, y);
            let (a, b) = clamp_to_domain(&grid, x - 0.5 * dt * u1, y - 0.5 * dt * v1);
            let (u2, v2) = lat_half.perp_gradient(a, b);
            let (a, b) = clamp_to_domain(&grid, x - 0.5 * dt * u2, y - 0.5 * dt * v2);
            let (u3, v3) = lat_half.perp_gradient(a, b);
            let (a, b) = clamp_to_domain(&grid, x - dt * u3, y - dt * v3);
            let (u4, v4) = lat_now.perp_gradient(a, b);
            let fx = x - dt / 6.0 * (u1 + 2.0 * u2 + 2.0 * u3 + u4);
            let fy = y - dt / 6.0 * (v1 + 2.0 * v2 + 2.0 * v3 + v4);
            let (fx, fy) = clamp_to_domain(&grid, fx, fy);
            (om.bicubic(fx, fy).clamp(lo, hi), om.bilinear(fx, fy))
        })
        .collect();
    let mut values: Vec<f64> = feet.iter().map(|p| p.0).collect();
    restore_mass(&grid, &mut values, &feet, state.omega.integral());
    let omega = ScalarField::from_values(&grid, values)?;
    let psi = green_apply(&omega)?;
    Ok(SimState {
        t: state.t + dt,
        omega,
        psi,
        step_count: state.step_count + 1,
        prev: Some((psi_now.to_vec(), dt)),
    })
}

/// `L / max|v|` with `L` the larger side of the bounding box.
pub fn turnover_time(omega: &ScalarField) -> Result<f64> {
    let s = SimState::new(omega.clone())?;
    let (lx, ly) = omega.grid().extent();
    let v = s.max_speed();
    if v > 0.0 {
        Ok(lx.max(ly) / v)
    } else {
        Ok(f64::INFINITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunOptions {
    pub cfl: f64,
    /// Record diagnostics every this many steps (and at the end).
    pub sample_every: usize,
    /// Norm used for the deviation from the reference.
    pub p: f64,
    /// Evaluate the Casimir and energy–Casimir functional at each sample.
    pub casimir: bool,
    /// Keep a copy of `ω` every this many steps; 0 keeps none.
    pub snapshot_every: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { cfl: CFL_LIMIT, sample_every: 10, p: 2.0, casimir: false, snapshot_every: 0 }
    }
}

/// One diagnostics row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub step: usize,
    pub t: f64,
    #[serde(rename = "E")]
    pub energy: f64,
    pub mass: f64,
    pub l1: f64,
    pub l2: f64,
    pub l4: f64,
    pub dist_curve_gap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deviation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub casimir: Option<f64>,
    #[serde(rename = "EC", skip_serializing_if = "Option::is_none")]
    pub ec: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryDiagnostics {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub mass: Vec<f64>,
    pub l1: Vec<f64>,
    pub l2: Vec<f64>,
    pub l4: Vec<f64>,
    pub dist_curve_gap: Vec<f64>,
    pub deviation: Option<Vec<f64>>,
    pub casimir: Option<Vec<f64>>,
    pub ec: Option<Vec<f64>>,
    pub steps: usize,
    pub turnover: f64,
    pub deviation_p: f64,
    #[serde(skip)]
    pub rows: Vec<DiagnosticsRow>,
    #[serde(skip)]
    pub final_omega: Option<ScalarField>,
    /// `(step, ω)` pairs requested through `snapshot_every`.
    #[serde(skip)]
    pub snapshots: Vec<(usize, ScalarField)>,
}

fn rel_drift(series: &[f64]) -> f64 {
    let s0 = series[0];
    let scale = if s0 != 0.0 { s0.abs() } else { 1.0 };
    series.iter().map(|v| (v - s0).abs()).fold(0.0, f64::max) / scale
}

impl TrajectoryDiagnostics {
    /// Largest relative drift of `∫ω` from its initial value.
    pub fn mass_drift(&self) -> f64 {
        // mass may vanish; measure against the L¹ norm then
        let s0 = self.mass[0];
        let scale = if s0.abs() > 1e-3 * self.l1[0] { s0.abs() } else { self.l1[0].max(f64::MIN_POSITIVE) };
        self.mass.iter().map(|v| (v - s0).abs()).fold(0.0, f64::max) / scale
    }

    pub fn energy_drift(&self) -> f64 {
        rel_drift(&self.energy)
    }

    pub fn l2_drift(&self) -> f64 {
        rel_drift(&self.l2)
    }

    pub fn l1_drift(&self) -> f64 {
        rel_drift(&self.l1)
    }

    pub fn l4_drift(&self) -> f64 {
        rel_drift(&self.l4)
    }

    pub fn max_deviation(&self) -> Option<f64> {
        self.deviation.as_ref().map(|d| d.iter().cloned().fold(0.0, f64::max))
    }

    /// Final time divided by the turnover time.
    pub fn turnovers(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0) / self.turnover
    }
}

fn sample_row(state: &SimState, omega0: &ScalarField, reference: Option<&SteadyState>, opts: &RunOptions) -> Result<DiagnosticsRow> {
    let om = &state.omega;
    let energy = 0.5 * om.inner(&state.psi)?;
    let deviation = match reference {
        Some(r) => Some(om.sub(&r.omega_bar)?.lp_norm(opts.p)),
        None => None,
    };
    let (casimir, ec) = match (opts.casimir, reference.and_then(|r| r.profile.as_ref())) {
        (true, Some(p)) => {
            let g_hat = p.g_hat();
            let c = om.map(|v| g_hat.eval(v)).integral();
            (Some(c), Some(energy - c))
        }
        _ => (None, None),
    };
    Ok(DiagnosticsRow {
        step: state.step_count,
        t: state.t,
        energy,
        mass: om.integral(),
        l1: om.lp_norm(1.0),
        l2: om.lp_norm(2.0),
        l4: om.lp_norm(4.0),
        dist_curve_gap: rearrangement_distance(om, omega0)?,
        deviation,
        casimir,
        ec,
    })
}

/// Evolve `omega0` up to time `t_end`, sampling diagnostics along the way.
pub fn run(omega0: &ScalarField, t_end: f64, reference: Option<&SteadyState>, opts: &RunOptions) -> Result<TrajectoryDiagnostics> {
    if !(opts.cfl > 0.0 && opts.cfl <= CFL_LIMIT) {
        return Err(Error::InvalidArgument(format!("Courant number {} outside (0, {CFL_LIMIT}]", opts.cfl)));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidArgument(format!("final time {t_end} must be finite and nonnegative")));
    }
    let every = opts.sample_every.max(1);
    let mut state = SimState::new(omega0.clone())?;
    let turnover = turnover_time(omega0)?;
    let mut rows = vec![sample_row(&state, omega0, reference, opts)?];
    let mut snapshots = Vec::new();
    if opts.snapshot_every > 0 {
        snapshots.push((0, omega0.clone()));
    }
    while state.t < t_end {
        let remaining = t_end - state.t;
        let mut dt = state.stable_dt(opts.cfl).min(remaining);
        // avoid a sliver of a final step
        if remaining - dt < 1e-9 * t_end {
            dt = remaining;
        }
        if !(dt > 0.0) {
            break;
        }
        let last = dt >= remaining;
        state = step(&state, dt)?;
        if last {
            state.t = t_end;
        }
        if state.step_count % every == 0 || last {
            rows.push(sample_row(&state, omega0, reference, opts)?);
        }
        if opts.snapshot_every > 0 && state.step_count % opts.snapshot_every == 0 {
            snapshots.push((state.step_count, state.omega.clone()));
        }
        if last {
            break;
        }
    }
    let col = |f: fn(&DiagnosticsRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let opt_col = |f: fn(&DiagnosticsRow) -> Option<f64>| rows.iter().map(f).collect::<Option<Vec<_>>>();
    Ok(TrajectoryDiagnostics {
        times: col(|r| r.t),
        energy: col(|r| r.energy),
        mass: col(|r| r.mass),
        l1: col(|r| r.l1),
        l2: col(|r| r.l2),
        l4: col(|r| r.l4),
        dist_curve_gap: col(|r| r.dist_curve_gap),
        deviation: opt_col(|r| r.deviation),
        casimir: opt_col(|r| r.casimir),
        ec: opt_col(|r| r.ec),
        steps: state.step_count,
        turnover,
        deviation_p: opts.p,
        rows,
        final_omega: Some(state.omega),
        snapshots,
    })
}

/// One rung of the amplitude ladder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LadderRow {
    /// Requested `ε / ‖ω̄‖_p`.
    pub amplitude: f64,
    /// Transport time of the perturbation flow that realizes it.
    pub perturbation_time: f64,
    /// `‖ω₀ - ω̄‖_p`.
    pub epsilon: f64,
    /// `sup_t ‖ω(t) - ω̄‖_p`.
    pub sup_deviation: f64,
    pub ratio: f64,
    pub energy_drift: f64,
    pub mass_drift: f64,
    pub l2_drift: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityReport {
    pub p: f64,
    /// Recorded, never used to gate the run.
    pub classification: Classification,
    pub turnovers: f64,
    pub final_time: f64,
    pub reference_norm: f64,
    /// `sup_t ‖ω(t) - ω̄‖_p` when starting exactly at `ω̄`.
    pub steadiness_floor: f64,
    pub xi: BumpSpec,
    pub rows: Vec<LadderRow>,
    /// Largest over smallest ratio across the ladder.
    pub ratio_spread: f64,
    pub max_ratio: f64,
}

/// Perturb `ω̄` along `∇⊥ξ` to each amplitude of the ladder, evolve for the
/// given number of turnovers and compare the worst deviation with the
/// initial one.
pub fn stability_experiment(
    steady: &SteadyState,
    xi: &BumpSpec,
    amplitudes: &[f64],
    turnovers: f64,
    opts: &RunOptions,
) -> Result<StabilityReport> {
    let omega_bar = &steady.omega_bar;
    let p = opts.p;
    let norm = omega_bar.lp_norm(p);
    let t_end = turnovers * turnover_time(omega_bar)?;
    let xi_field = xi.sample(omega_bar.grid());
    let classification = classify_stability(steady)?.classification;
    let baseline = run(omega_bar, t_end, Some(steady), opts)?;
    let floor = baseline.max_deviation().unwrap_or(0.0);
    let rows = amplitudes
        .par_iter()
        .map(|&a| -> Result<LadderRow> {
            let eps_target = a * norm;
            let (tp, omega0) = perturbation_time(omega_bar, &xi_field, eps_target, p)?;
            let epsilon = omega0.sub(omega_bar)?.lp_norm(p);
            let d = run(&omega0, t_end, Some(steady), opts)?;
            let sup = d.max_deviation().unwrap_or(0.0);
            Ok(LadderRow {
                amplitude: a,
                perturbation_time: tp,
                epsilon,
                sup_deviation: sup,
                ratio: sup / epsilon,
                energy_drift: d.energy_drift(),
                mass_drift: d.mass_drift(),
                l2_drift: d.l2_drift(),
                steps: d.steps,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let min_ratio = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    Ok(StabilityReport {
        p,
        classification,
        turnovers,
        final_time: t_end,
        reference_norm: norm,
        steadiness_floor: floor,
        xi: *xi,
        ratio_spread: if rows.is_empty() { 1.0 } else { max_ratio / min_ratio },
        max_ratio,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridSpec};

    #[test]
    fn zero_vorticity_stays_zero() {
        let g = build_grid(GridSpec::unit_square(16)).unwrap();
        let d = run(&g.zeros(), 1.0, None, &RunOptions::default()).unwrap();
        assert!(d.l2.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn oversized_step_is_rejected() {
        let g = build_grid(GridSpec::unit_square(16)).unwrap();
        let s = SimState::new(g.sample(|x, y| (x * (1.0 - x) * y * (1.0 - y)) * 50.0)).unwrap();
        let dt = s.stable_dt(CFL_LIMIT);
        assert!(step(&s, dt).is_ok());
        assert!(matches!(step(&s, 2.0 * dt), Err(Error::CflViolation { .. })));
    }
}
