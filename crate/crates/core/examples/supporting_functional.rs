//! The supporting functional D̂ against EC over rearrangements of a certified
//! flow.

use euler_stability::energy::{full_report, supporting_gap, CLASS_TOL};
use euler_stability::grid::{build_grid, GridSpec};
use euler_stability::rearrangement::{project_to_class, random_perturbations};
use euler_stability::spectral::lambda1;
use euler_stability::steady::linear_steady;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> euler_stability::Result<()> {
    let g = build_grid(GridSpec::unit_square(32))?;
    let steady = linear_steady(0.5 * lambda1(&g)?, 1.0, &g)?;
    let profile = steady.profile.as_ref().expect("affine profiles are monotone");
    let bar = full_report(&steady.omega_bar, profile, steady.omega_bar.integral())?;
    println!("at ω̄: E = {:.6}, EC = {:.6}, D̂ = {:.6}, λ̄ = {:.1e}", bar.e, bar.ec, bar.d_hat.unwrap(), bar.lambda_bar.unwrap());

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let samples = random_perturbations(&steady.omega_bar, 12, (1e-3, 5e-2), &mut rng)?
        .into_iter()
        .map(|s| project_to_class(&s.field, &steady.omega_bar))
        .collect::<euler_stability::Result<Vec<_>>>()?;
    let report = supporting_gap(&steady, &samples, CLASS_TOL)?;
    println!("{:>4} {:>12} {:>12} {:>12}", "id", "‖ω-ω̄‖", "D̂-EC", "E(ω̄)-E(ω)");
    for r in &report.rows {
        println!("{:4} {:12.4e} {:12.4e} {:12.4e}", r.sample_id, r.distance, r.gap.unwrap(), r.energy_drop);
    }
    Ok(())
}
