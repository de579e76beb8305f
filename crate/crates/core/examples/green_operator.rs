//! Grids, the discrete Green operator and the principal eigenvalue.

use euler_stability::grid::{build_grid, green_apply, perp_gradient, GridSpec, Shape};
use euler_stability::spectral::{coercivity_delta, lambda1, principal_eigenpair};

fn main() -> euler_stability::Result<()> {
    for n in [32, 64, 128] {
        let g = build_grid(GridSpec::unit_square(n))?;
        let l = lambda1(&g)?;
        println!("n = {n:3}: λ₁ = {l:.6}  (2π² = {:.6})", 2.0 * std::f64::consts::PI.powi(2));
    }

    let g = build_grid(GridSpec { shape: Shape::Disk { r: 1.0 }, resolution: 64 })?;
    let (l, phi) = principal_eigenpair(&g, None)?;
    println!("disk: λ₁ = {l:.4} (j₀,₁² = 5.7832), {} active nodes", g.active_count());

    let omega = g.sample(|x, y| (-(x * x + y * y) / 0.1).exp());
    let psi = green_apply(&omega)?;
    let u = perp_gradient(&psi);
    println!("Gaussian vortex: E = {:.6e}, max |u| = {:.4}", 0.5 * omega.inner(&psi)?, u.max_speed());

    let delta = coercivity_delta(&phi.map(|v| 3.0 * v.max(0.0)))?;
    println!("coercivity δ for g' = 3φ₁: {delta:.4}");
    Ok(())
}
