//! Evolve a compact vortex and report the conserved quantities.

use euler_stability::grid::{build_grid, GridSpec};
use euler_stability::simulator::{run, turnover_time, RunOptions};

fn main() -> euler_stability::Result<()> {
    let turns = 2.0;
    for n in [32, 64] {
        let g = build_grid(GridSpec::unit_square(n))?;
        let omega0 = g.sample(|x, y| {
            let r = ((x - 0.48).powi(2) + (y - 0.52).powi(2)) / 0.09;
            if r < 1.0 { (1.0 - r).powi(4) } else { 0.0 }
        });
        let t = turns * turnover_time(&omega0)?;
        let d = run(&omega0, t, None, &RunOptions::default())?;
        println!(
            "n = {n:3}: {} steps, drifts: mass {:.1e}, energy {:.2e}, L2 {:.2e}, L4 {:.2e}",
            d.steps,
            d.mass_drift(),
            d.energy_drift(),
            d.l2_drift(),
            d.l4_drift()
        );
    }
    Ok(())
}
