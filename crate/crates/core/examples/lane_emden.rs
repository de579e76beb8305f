//! Positive Lane-Emden solution, its Pohozaev-type energy identity and its
//! certificate.

use euler_stability::grid::{build_grid, GridSpec};
use euler_stability::spectral::classify_stability;
use euler_stability::steady::{dirichlet_energy, lane_emden_solve};

fn main() -> euler_stability::Result<()> {
    let p = 3.0;
    let g = build_grid(GridSpec::unit_square(64))?;
    let s = lane_emden_solve(p, &g)?;
    let int_pow = s.psi_bar.map(|v| v.powf(p + 1.0)).integral();
    let d = dirichlet_energy(&s.psi_bar);
    println!("max ψ = {:.6}, iterations {}", s.psi_bar.max(), s.iterations);
    println!("∫|∇ψ|² - p∫ψ^(p+1) = {:.10}", d - p * int_pow);
    println!("(1 - p)∫ψ^(p+1)    = {:.10}", (1.0 - p) * int_pow);
    println!("residuals: fixed point {:.1e}, Green {:.1e}, weak {:.1e}", s.residual_fixed_point, s.residual_green, s.residual_weak);
    let c = classify_stability(&s)?;
    println!("classification {:?} (μ₁ = {:.3}, g' range [{:.3}, {:.3}])", c.classification, c.mu1, c.gprime_min, c.gprime_max);
    Ok(())
}
