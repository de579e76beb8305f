//! Stability certificates for affine profiles across the principal eigenvalue.

use euler_stability::grid::{build_grid, GridSpec};
use euler_stability::spectral::{classify_stability, lambda1};
use euler_stability::steady::linear_steady;

fn main() -> euler_stability::Result<()> {
    let g = build_grid(GridSpec::unit_square(48))?;
    let l = lambda1(&g)?;
    println!("{:>8} {:>16} {:>10} {:>10}  labels", "α/λ₁", "classification", "μ₁", "δ");
    for ratio in [-1.0, 0.25, 0.5, 0.9, 0.99, 1.5, 3.0] {
        let steady = linear_steady(ratio * l, 1.0, &g)?;
        let c = classify_stability(&steady)?;
        let delta = c.delta.map_or("-".into(), |d| format!("{d:.3}"));
        println!("{ratio:8.2} {:>16} {:10.3} {delta:>10}  {:?}", format!("{:?}", c.classification), c.mu1, c.labels);
    }
    Ok(())
}
