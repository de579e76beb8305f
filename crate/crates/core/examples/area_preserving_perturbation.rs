//! Transport a steady vorticity along a bump stream function and tune the time
//! to hit a target distance.

use euler_stability::grid::{build_grid, GridSpec};
use euler_stability::rearrangement::{distribution_gap, perturbation_time, BumpSpec};
use euler_stability::spectral::lambda1;
use euler_stability::steady::linear_steady;

fn main() -> euler_stability::Result<()> {
    let g = build_grid(GridSpec::unit_square(64))?;
    let steady = linear_steady(0.5 * lambda1(&g)?, 1.0, &g)?;
    let omega_bar = &steady.omega_bar;
    let xi = BumpSpec::broad(&g).sample(&g);
    let norm = omega_bar.lp_norm(2.0);
    let thresholds: Vec<f64> = (1..8).map(|k| omega_bar.min() + k as f64 / 8.0 * (omega_bar.max() - omega_bar.min())).collect();
    for rel in [1e-3, 1e-2, 1e-1] {
        let (t, field) = perturbation_time(omega_bar, &xi, rel * norm, 2.0)?;
        let d = field.sub(omega_bar)?.lp_norm(2.0) / norm;
        let gap = distribution_gap(&field, omega_bar, &thresholds)?;
        println!("target {rel:.0e}: t = {t:.5}, distance {d:.6e}, mass change {:.1e}, level-set drift {gap:.1e}", field.integral() - omega_bar.integral());
    }
    Ok(())
}
