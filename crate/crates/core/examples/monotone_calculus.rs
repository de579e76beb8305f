//! Generalized inverse, antiderivative, Legendre transform and the monotone
//! extension of a piecewise linear profile with a plateau.

use euler_stability::calculus::{antiderivative, extend_monotone, fenchel_gap, generalized_inverse, InverseMode, PiecewisePoly, ScalarFn};

fn main() -> euler_stability::Result<()> {
    let g = ScalarFn::poly(PiecewisePoly::linear_interpolant(&[-1.0, 0.0, 0.5, 1.0], &[-2.0, 0.0, 0.0, 3.0])?).restrict(-1.0, 1.0)?;
    let profile = extend_monotone(&g)?;
    let p = generalized_inverse(profile.g_ext(), InverseMode::Nondecreasing)?;
    for s in [-1.0, 0.0, 1.5] {
        println!("p({s}) = {:.6}   g(p({s})) = {:.6}", p.eval(s), profile.eval(p.eval(s)));
    }
    let big_p = antiderivative(&p)?;
    println!("P(2) - Ĝ(2) = {:.6}", big_p.eval(2.0) - profile.g_hat().eval(2.0));
    println!("P(-3) - Ĝ(-3) = {:.6}", big_p.eval(-3.0) - profile.g_hat().eval(-3.0));

    println!("tails {:?}, slope {} at +∞ and {} at -∞", profile.tails(), profile.c1(), profile.c2());
    for x in [-3.0, -1.0, 1.0, 3.0] {
        println!("g_ext({x}) = {:.4}   Ĝ(g_ext({x})) = {:.4}", profile.eval(x), profile.g_hat().eval(profile.eval(x)));
    }
    println!("Fenchel-Young gap at (s, τ) = (1, 0.2): {:.6}", fenchel_gap(&profile, 1.0, 0.2));
    println!("Fenchel-Young gap at s = g(τ):          {:.1e}", fenchel_gap(&profile, profile.eval(0.8), 0.8));
    Ok(())
}
