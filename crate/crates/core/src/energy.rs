//! Kinetic energy, energy–Casimir functionals and the supporting functional
//! `D̂` obtained by minimizing `D_λ` over the multiplier `λ`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::MonotoneProfile;
use crate::error::{Error, Result};
use crate::grid::{green_apply, ScalarField};
use crate::rearrangement::rearrangement_distance;
use crate::steady::SteadyState;

/// Relative width at which the multiplier bisection stops.
const LAMBDA_TOL: f64 = 1e-13;
const MAX_BRACKET_DOUBLINGS: usize = 200;

/// Default distance to `ω̄`'s rearrangement class accepted by
/// [`supporting_gap`].
pub const CLASS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    #[serde(rename = "E")]
    pub e: f64,
    pub casimir: f64,
    #[serde(rename = "EC")]
    pub ec: f64,
    pub lambda_bar: Option<f64>,
    #[serde(rename = "D_hat")]
    pub d_hat: Option<f64>,
    #[serde(rename = "M0")]
    pub m0: f64,
}

/// `E = ½∫ω𝒢ω`.
pub fn kinetic_energy(omega: &ScalarField) -> Result<f64> {
    Ok(0.5 * omega.energy_inner(omega)?)
}

/// `∫F(ω)` by cell sum.
fn cell_sum(field: &ScalarField, f: impl Fn(f64) -> f64 + Sync) -> f64 {
    let grid = field.grid();
    let vals: Vec<f64> = field
        .values()
        .par_iter()
        .enumerate()
        .map(|(k, &v)| if grid.is_active(k) { f(v) } else { 0.0 })
        .collect();
    vals.iter().sum::<f64>() * grid.cell_area()
}

/// `E(ω)`, the Casimir `∫Ĝ(ω)` and `EC = E - ∫Ĝ(ω)`.
pub fn ec_functional(omega: &ScalarField, profile: &MonotoneProfile) -> Result<FunctionalReport> {
    let e = kinetic_energy(omega)?;
    let g_hat = profile.g_hat();
    let casimir = cell_sum(omega, |v| g_hat.eval(v));
    if !casimir.is_finite() {
        return Err(Error::InvalidArgument("vorticity outside the evaluable range of the profile".into()));
    }
    Ok(FunctionalReport { e, casimir, ec: e - casimir, lambda_bar: None, d_hat: None, m0: omega.integral() })
}

/// `λ̄` solving `∫g(𝒢ω - λ) = M₀` (the leftmost root when there are several)
/// and `D̂(ω) = D_λ̄(ω) = -½∫ω𝒢ω + ∫G(𝒢ω - λ̄) + λ̄M₀`.
pub fn minimize_d_lambda(omega: &ScalarField, profile: &MonotoneProfile, m0: f64) -> Result<(f64, f64)> {
    let psi = green_apply(omega)?;
    let lambda = multiplier(&psi, profile, m0)?;
    Ok((lambda, d_lambda(omega, &psi, profile, m0, lambda)?))
}

fn d_lambda(omega: &ScalarField, psi: &ScalarField, profile: &MonotoneProfile, m0: f64, lambda: f64) -> Result<f64> {
    let big_g = profile.big_g();
    Ok(-0.5 * omega.inner(psi)? + cell_sum(psi, |s| big_g.eval(s - lambda)) + lambda * m0)
}

/// `M₀ - ∫g(ψ - λ)`, the λ-derivative of `D_λ`; nondecreasing in `λ`.
pub fn stationarity(psi: &ScalarField, profile: &MonotoneProfile, m0: f64, lambda: f64) -> f64 {
    m0 - cell_sum(psi, |s| profile.eval(s - lambda))
}

fn multiplier(psi: &ScalarField, profile: &MonotoneProfile, m0: f64) -> Result<f64> {
    // excess(λ) = ∫g(ψ - λ) - M₀ is nonincreasing; find inf { λ : excess(λ) <= 0 }
    let excess = |l: f64| -stationarity(psi, profile, m0, l);
    let (pmin, pmax) = (psi.min().min(0.0), psi.max().max(0.0));
    let mut span = (pmax - pmin).max(1.0);
    let (mut lo, mut hi) = (pmin - span, pmax + span);
    let mut tries = 0;
    while !(excess(lo) > 0.0 && excess(hi) <= 0.0) {
        tries += 1;
        if tries > MAX_BRACKET_DOUBLINGS || !span.is_finite() {
            return Err(Error::RootBracketFailure);
        }
        span *= 2.0;
        if excess(lo) <= 0.0 {
            lo = pmin - span;
        }
        if excess(hi) > 0.0 {
            hi = pmax + span;
        }
    }
    loop {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi || hi - lo <= LAMBDA_TOL * lo.abs().max(hi.abs()).max(1.0) {
            return Ok(hi);
        }
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Everything [`ec_functional`] and [`minimize_d_lambda`] report for one field.
pub fn full_report(omega: &ScalarField, profile: &MonotoneProfile, m0: f64) -> Result<FunctionalReport> {
    let mut r = ec_functional(omega, profile)?;
    let (l, d) = minimize_d_lambda(omega, profile, m0)?;
    r.lambda_bar = Some(l);
    r.d_hat = Some(d);
    r.m0 = m0;
    Ok(r)
}

/// One NDJSON row of a supporting-functional check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub sample_id: usize,
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "EC")]
    pub ec: Option<f64>,
    #[serde(rename = "D_hat")]
    pub d_hat: Option<f64>,
    pub lambda_bar: Option<f64>,
    /// `D̂(ω) - EC(ω)`.
    pub gap: Option<f64>,
    /// `EC(ω̄) - EC(ω)`.
    pub ec_drop: Option<f64>,
    /// `E(ω̄) - E(ω)`.
    pub energy_drop: f64,
    /// `‖ω - ω̄‖₂`.
    pub distance: f64,
    pub class_distance: f64,
    /// Rayleigh quotient of the rank-one-corrected form at `u = 𝒢(ω - ω̄)`,
    /// comparable with the coercivity constant `δ`.
    pub form_quotient: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupportReport {
    /// Row for `ω̄` itself.
    pub reference: GapRow,
    pub rows: Vec<GapRow>,
    pub min_gap: Option<f64>,
    pub max_gap: Option<f64>,
    pub min_energy_drop: f64,
    pub max_energy_drop: f64,
    /// Largest sampled distance such that every sample at most this far from
    /// `ω̄` has lower energy (0 when the nearest sample already violates it).
    pub no_violation_radius: f64,
    pub min_form_quotient: Option<f64>,
}

/// Compare `D̂`, `EC` and `E` between `ω̄` and each sample. Samples must lie in
/// the rearrangement class of `ω̄` up to `class_tol`.
pub fn supporting_gap(steady: &SteadyState, samples: &[ScalarField], class_tol: f64) -> Result<SupportReport> {
    let omega_bar = &steady.omega_bar;
    let psi_bar = &steady.psi_bar;
    let m0 = omega_bar.integral();
    let e_bar = 0.5 * omega_bar.inner(psi_bar)?;
    let bar_report = match &steady.profile {
        Some(p) => Some(full_report(omega_bar, p, m0)?),
        None => None,
    };
    // g'(ψ̄) and its mass, when the rank-one-corrected form is defined
    let weight = match &steady.profile {
        Some(p) => {
            let gp = psi_bar.map(|s| p.deriv(s));
            let mass = gp.integral();
            (mass > 0.0).then_some((gp, mass))
        }
        None => None,
    };
    let form_quotient = |phi: &ScalarField| -> Result<Option<f64>> {
        let Some((gp, mass)) = &weight else { return Ok(None) };
        let u = green_apply(phi)?;
        let uu = u.inner(&u)?;
        if uu == 0.0 {
            return Ok(None);
        }
        let gu = gp.inner(&u)?;
        let guu = gp.zip_map(&u, |a, b| a * b * b)?.integral();
        Ok(Some((phi.inner(&u)? - guu + gu * gu / mass) / uu))
    };
    let row_for = |id: usize, omega: &ScalarField, class_distance: f64| -> Result<GapRow> {
        let phi = omega.sub(omega_bar)?;
        // E(ω) - E(ω̄) without cancellation
        let de = phi.inner(psi_bar)? + 0.5 * phi.energy_inner(&phi)?;
        let (ec, d_hat, lambda_bar, gap, ec_drop) = match (&steady.profile, &bar_report) {
            (Some(p), Some(bar)) => {
                let r = full_report(omega, p, m0)?;
                let d = r.d_hat.unwrap();
                (Some(r.ec), Some(d), r.lambda_bar, Some(d - r.ec), Some(bar.ec - r.ec))
            }
            _ => (None, None, None, None, None),
        };
        Ok(GapRow {
            sample_id: id,
            e: e_bar + de,
            ec,
            d_hat,
            lambda_bar,
            gap,
            ec_drop,
            energy_drop: -de,
            distance: phi.lp_norm(2.0),
            class_distance,
            form_quotient: form_quotient(&phi)?,
        })
    };
    let reference = row_for(0, omega_bar, 0.0)?;
    let mut rows = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let d = rearrangement_distance(s, omega_bar)?;
        if !(d <= class_tol) {
            return Err(Error::ClassViolation { index: i, distance: d });
        }
        rows.push(row_for(i + 1, s, d)?);
    }
    let gaps: Vec<f64> = rows.iter().filter_map(|r| r.gap).collect();
    let drops: Vec<f64> = rows.iter().map(|r| r.energy_drop).collect();
    let mut by_distance: Vec<&GapRow> = rows.iter().collect();
    by_distance.sort_by(|a, b| a.distance.total_cmp(&b.distance));
    let no_violation_radius = by_distance.iter().take_while(|r| r.energy_drop > 0.0).last().map_or(0.0, |r| r.distance);
    Ok(SupportReport {
        reference,
        min_gap: gaps.iter().cloned().reduce(f64::min),
        max_gap: gaps.iter().cloned().reduce(f64::max),
        min_energy_drop: drops.iter().cloned().fold(f64::INFINITY, f64::min),
        max_energy_drop: drops.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        no_violation_radius,
        min_form_quotient: rows.iter().filter_map(|r| r.form_quotient).reduce(f64::min),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{extend_monotone, ScalarFn};
    use crate::grid::{build_grid, GridSpec};
    use crate::spectral::principal_eigenpair;

    #[test]
    fn eigenfunction_energy() {
        let g = build_grid(GridSpec::unit_square(32)).unwrap();
        let (l, phi) = principal_eigenpair(&g, None).unwrap();
        assert!((kinetic_energy(&phi).unwrap() - 0.5 / l).abs() < 1e-8);
        assert_eq!(kinetic_energy(&g.zeros()).unwrap(), 0.0);
    }

    #[test]
    fn identity_profile_multiplier_closed_form() {
        let g = build_grid(GridSpec::unit_square(24)).unwrap();
        let profile = extend_monotone(&ScalarFn::affine(1.0, 0.0).restrict(-1.0, 1.0).unwrap()).unwrap();
        let omega = g.sample(|x, y| (3.0 * x).sin() + y * y);
        let m0 = 0.3;
        let (l, _) = minimize_d_lambda(&omega, &profile, m0).unwrap();
        let psi = green_apply(&omega).unwrap();
        // ψ - λ stays inside [-1, 1], where g is the identity
        let want = (psi.integral() - m0) / g.area();
        assert!((l - want).abs() < 1e-10);
    }

    #[test]
    fn zero_vorticity_ec() {
        let g = build_grid(GridSpec::unit_square(16)).unwrap();
        let profile = extend_monotone(&ScalarFn::affine(2.0, 1.0).restrict(-1.0, 1.0).unwrap()).unwrap();
        let r = ec_functional(&g.zeros(), &profile).unwrap();
        let g_hat0 = profile.g_hat().eval(0.0);
        assert!((r.ec + g.area() * g_hat0).abs() < 1e-14);
    }
}
