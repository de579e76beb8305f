//! Perturbation ladder around a certified affine flow.

use euler_stability::grid::{build_grid, GridSpec};
use euler_stability::rearrangement::BumpSpec;
use euler_stability::simulator::{stability_experiment, RunOptions};
use euler_stability::spectral::lambda1;
use euler_stability::steady::linear_steady;

fn main() -> euler_stability::Result<()> {
    let n = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(48);
    let g = build_grid(GridSpec::unit_square(n))?;
    let steady = linear_steady(0.5 * lambda1(&g)?, 1.0, &g)?;
    let report = stability_experiment(&steady, &BumpSpec::broad(&g), &[1e-3, 1e-2, 1e-1], 4.0, &RunOptions::default())?;
    println!("{:?} flow, steadiness floor {:.2e}", report.classification, report.steadiness_floor);
    for r in &report.rows {
        println!("amplitude {:.0e}: ε = {:.3e}, sup deviation {:.3e}, ratio {:.3}", r.amplitude, r.epsilon, r.sup_deviation, r.ratio);
    }
    println!("ratio spread {:.3}x", report.ratio_spread);
    Ok(())
}
