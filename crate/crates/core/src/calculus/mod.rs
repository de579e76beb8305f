//! Calculus of monotone scalar functions: generalized inverses, antiderivatives,
//! Legendre transforms and C¹ monotone extensions.
//!
//! Everything here is immutable once built; a [`ScalarFn`] is a cheap
//! reference-counted handle and may be evaluated from many threads at once.

mod poly;
mod profile;
pub mod quadrature;

use std::fmt;
use std::sync::Arc;

pub use poly::{Piece, PiecewisePoly};
pub use profile::{extend_monotone, fenchel_gap, MonotoneProfile, PieceDoc, ProfileDocument, Tail};

use crate::error::{Error, Result};

/// Default probe density (points per unit length) for monotonicity checks.
pub const PROBES_PER_UNIT: usize = 1024;
const MAX_PROBES: usize = 1 << 20;
/// Absolute quadrature tolerance per unit interval.
pub const QUADRATURE_TOL: f64 = 1e-12;
const BISECTION_CAP: usize = 200;

/// Closed interval, possibly unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const REAL_LINE: Interval = Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY };

    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn contains(&self, s: f64) -> bool {
        self.lo <= s && s <= self.hi
    }
}

/// Which generalized inverse to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InverseMode {
    /// `p(s) = inf { t : q(t) <= s }` for strictly decreasing `q`.
    Decreasing,
    /// `p(s) = inf { t : q(t) = s }` for continuous nondecreasing `q`.
    Nondecreasing,
}

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

enum Repr {
    Poly(PiecewisePoly),
    /// Linear interpolation of samples; stored as its degree-one interpolant.
    Sampled { xs: Vec<f64>, ys: Vec<f64>, interp: PiecewisePoly },
    Custom { f: RealFn, df: Option<RealFn>, domain: Interval },
    Inverse { source: ScalarFn, mode: InverseMode },
    /// `P(s) = s p(s) - (Q(p(s)) - Q(p(0)))`, the integral of an inverse.
    InverseIntegral { inverse: ScalarFn, source_integral: ScalarFn, base: f64 },
    /// `int_0^s f` by adaptive quadrature.
    Integral { integrand: ScalarFn },
    Offset { base: ScalarFn, offset: f64 },
    Extended { core: ScalarFn, lower: f64, upper: f64, left: Tail, right: Tail },
}

/// A real function of one real variable.
#[derive(Clone)]
pub struct ScalarFn(Arc<Repr>);

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarFn({})", self.kind())
    }
}

impl ScalarFn {
    pub fn poly(p: PiecewisePoly) -> Self {
        ScalarFn(Arc::new(Repr::Poly(p)))
    }

    pub fn affine(alpha: f64, beta: f64) -> Self {
        Self::poly(PiecewisePoly::affine(alpha, beta))
    }

    /// Samples joined by straight lines and continued linearly past the ends.
    pub fn sampled(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let interp = PiecewisePoly::linear_interpolant(&xs, &ys)?;
        Ok(ScalarFn(Arc::new(Repr::Sampled { xs, ys, interp })))
    }

    /// Arbitrary closure on `domain`, with an optional derivative.
    pub fn custom<F, D>(f: F, df: Option<D>, domain: Interval) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        ScalarFn(Arc::new(Repr::Custom {
            f: Arc::new(f),
            df: df.map(|d| Arc::new(d) as RealFn),
            domain,
        }))
    }

    fn extended(core: ScalarFn, lower: f64, upper: f64, left: Tail, right: Tail) -> Self {
        ScalarFn(Arc::new(Repr::Extended { core, lower, upper, left, right }))
    }

    fn offset(base: ScalarFn, offset: f64) -> Self {
        ScalarFn(Arc::new(Repr::Offset { base, offset }))
    }

    pub fn kind(&self) -> &'static str {
        match &*self.0 {
            Repr::Poly(_) => "piecewise-polynomial",
            Repr::Sampled { .. } => "sampled",
            Repr::Custom { .. } => "custom",
            Repr::Inverse { .. } => "generalized-inverse",
            Repr::InverseIntegral { .. } => "inverse-integral",
            Repr::Integral { .. } => "quadrature",
            Repr::Offset { .. } => "offset",
            Repr::Extended { .. } => "extended",
        }
    }

    /// The underlying piecewise polynomial, when the function is one.
    pub fn as_poly(&self) -> Option<&PiecewisePoly> {
        match &*self.0 {
            Repr::Poly(p) => Some(p),
            _ => None,
        }
    }

    /// Raw samples of a sampled function.
    pub fn samples(&self) -> Option<(&[f64], &[f64])> {
        match &*self.0 {
            Repr::Sampled { xs, ys, .. } => Some((xs, ys)),
            _ => None,
        }
    }

    pub fn domain(&self) -> Interval {
        match &*self.0 {
            Repr::Poly(p) => Interval::new(p.lo(), p.hi()),
            Repr::Sampled { .. } => Interval::REAL_LINE,
            Repr::Custom { domain, .. } => *domain,
            Repr::Inverse { .. } | Repr::InverseIntegral { .. } | Repr::Integral { .. } => Interval::REAL_LINE,
            Repr::Offset { base, .. } => base.domain(),
            Repr::Extended { .. } => Interval::REAL_LINE,
        }
    }

    /// Evaluate; quadrature-backed functions return NaN if the tolerance fails
    /// (use [`ScalarFn::try_eval`] to observe the error).
    pub fn eval(&self, s: f64) -> f64 {
        self.try_eval(s).unwrap_or(f64::NAN)
    }

    pub fn try_eval(&self, s: f64) -> Result<f64> {
        Ok(match &*self.0 {
            Repr::Poly(p) => p.eval(s),
            Repr::Sampled { interp, .. } => interp.eval(s),
            Repr::Custom { f, .. } => f(s),
            Repr::Inverse { source, mode } => invert(source, *mode, s),
            Repr::InverseIntegral { inverse, source_integral, base } => {
                let p = inverse.eval(s);
                if s == 0.0 {
                    0.0
                } else {
                    s * p - (source_integral.try_eval(p)? - base)
                }
            }
            Repr::Integral { integrand } => {
                let f = integrand.clone();
                quadrature::integrate(move |x| f.eval(x), 0.0, s, QUADRATURE_TOL)?
            }
            Repr::Offset { base, offset } => base.try_eval(s)? + offset,
            Repr::Extended { core, lower, upper, left, right } => {
                if s < *lower {
                    left.eval(s, *lower, core.eval(*lower), -1.0)
                } else if s > *upper {
                    right.eval(s, *upper, core.eval(*upper), 1.0)
                } else {
                    core.eval(s)
                }
            }
        })
    }

    /// Derivative, where the representation supports one.
    pub fn deriv(&self, s: f64) -> Option<f64> {
        match &*self.0 {
            Repr::Poly(p) => Some(p.deriv(s)),
            Repr::Sampled { interp, .. } => Some(interp.deriv(s)),
            Repr::Custom { df, .. } => df.as_ref().map(|d| d(s)),
            Repr::Inverse { .. } => None,
            Repr::InverseIntegral { inverse, .. } => Some(inverse.eval(s)),
            Repr::Integral { integrand } => Some(integrand.eval(s)),
            Repr::Offset { base, .. } => base.deriv(s),
            Repr::Extended { core, lower, upper, left, right } => {
                if s < *lower {
                    Some(left.deriv(s, *lower, -1.0))
                } else if s > *upper {
                    Some(right.deriv(s, *upper, 1.0))
                } else {
                    core.deriv(s)
                }
            }
        }
    }

    pub fn has_derivative(&self) -> bool {
        self.deriv(self.probe_point()).is_some()
    }

    /// The same function with its domain cut down to `[lo, hi]`.
    pub fn restrict(&self, lo: f64, hi: f64) -> Result<ScalarFn> {
        let d = self.domain();
        if !(lo <= hi) || lo < d.lo || hi > d.hi {
            return Err(Error::InvalidArgument(format!("[{lo}, {hi}] is not inside the domain of {}", self.kind())));
        }
        match &*self.0 {
            Repr::Poly(p) => Ok(ScalarFn::poly(p.restrict(lo, hi)?)),
            Repr::Sampled { interp, .. } => Ok(ScalarFn::poly(interp.restrict(lo, hi)?)),
            Repr::Custom { f, df, .. } => Ok(ScalarFn(Arc::new(Repr::Custom {
                f: f.clone(),
                df: df.clone(),
                domain: Interval::new(lo, hi),
            }))),
            Repr::Extended { core, lower, upper, .. } if *lower <= lo && hi <= *upper => core.restrict(lo, hi),
            _ => Err(Error::InvalidArgument(format!("cannot restrict a {} function", self.kind()))),
        }
    }

    fn probe_point(&self) -> f64 {
        let d = self.domain();
        if d.contains(0.0) {
            0.0
        } else if d.lo.is_finite() {
            d.lo
        } else {
            d.hi
        }
    }
}

/// Probe window used for monotonicity checks.
fn probe_window(q: &ScalarFn) -> (f64, f64) {
    let d = q.domain();
    if d.is_bounded() {
        return (d.lo, d.hi);
    }
    let bps: Vec<f64> = match &*q.0 {
        Repr::Poly(p) => p.breakpoints(),
        Repr::Sampled { xs, .. } => xs.clone(),
        Repr::Extended { lower, upper, .. } => vec![*lower - 1.0, *upper + 1.0],
        _ => vec![],
    };
    let lo = bps.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = bps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (-8.0, 8.0) };
    let lo = if d.lo.is_finite() { d.lo } else { lo - 1.0 };
    let hi = if d.hi.is_finite() { d.hi } else { hi + 1.0 };
    (lo, hi)
}

/// Probe abscissae covering `[lo, hi]` at `per_unit` density.
pub fn probe_grid(lo: f64, hi: f64, per_unit: usize) -> Vec<f64> {
    if lo == hi {
        return vec![lo];
    }
    let n = (((hi - lo) * per_unit as f64).ceil() as usize).clamp(16, MAX_PROBES);
    (0..=n).map(|k| if k == n { hi } else { lo + (hi - lo) * k as f64 / n as f64 }).collect()
}

/// Check monotonicity of `q` on its probe window.
pub fn check_monotone(q: &ScalarFn, mode: InverseMode, per_unit: usize) -> Result<()> {
    let (lo, hi) = probe_window(q);
    let xs = probe_grid(lo, hi, per_unit);
    let mut prev = q.eval(xs[0]);
    for &x in &xs[1..] {
        let v = q.eval(x);
        let ok = match mode {
            InverseMode::Decreasing => v < prev,
            InverseMode::Nondecreasing => v >= prev - 1e-14 * prev.abs().max(1.0),
        };
        if !ok || !v.is_finite() {
            let what = match mode {
                InverseMode::Decreasing => "strictly decreasing",
                InverseMode::Nondecreasing => "nondecreasing",
            };
            return Err(Error::MonotonicityViolation(format!("expected {what} near s = {x}")));
        }
        prev = v;
    }
    Ok(())
}

fn escapes(q: &ScalarFn, mode: InverseMode) -> bool {
    if !(q.domain() == Interval::REAL_LINE) {
        return false;
    }
    let (at_plus, at_minus) = match mode {
        InverseMode::Nondecreasing => (1.0, -1.0),
        InverseMode::Decreasing => (-1.0, 1.0),
    };
    match &*q.0 {
        Repr::Poly(p) => p.tends_to(true, at_plus) && p.tends_to(false, at_minus),
        Repr::Sampled { interp, .. } => interp.tends_to(true, at_plus) && interp.tends_to(false, at_minus),
        _ => {
            let far = 1e100;
            q.eval(far) * at_plus >= 1e50 && q.eval(-far) * at_minus >= 1e50
        }
    }
}

/// Build the generalized inverse of `q`, evaluated lazily by bisection.
pub fn generalized_inverse(q: &ScalarFn, mode: InverseMode) -> Result<ScalarFn> {
    generalized_inverse_with(q, mode, PROBES_PER_UNIT)
}

pub fn generalized_inverse_with(q: &ScalarFn, mode: InverseMode, per_unit: usize) -> Result<ScalarFn> {
    check_monotone(q, mode, per_unit)?;
    if !escapes(q, mode) {
        return Err(Error::CoercivityViolation(format!(
            "{} function does not reach both infinities",
            q.kind()
        )));
    }
    Ok(ScalarFn(Arc::new(Repr::Inverse { source: q.clone(), mode })))
}

/// Smallest `t` with `q(t) >= s` (nondecreasing) or `q(t) <= s` (decreasing).
fn invert(q: &ScalarFn, mode: InverseMode, s: f64) -> f64 {
    if s.is_nan() {
        return f64::NAN;
    }
    // `hit(t)` is monotone: false for small t, true for large t
    let hit = |t: f64| match mode {
        InverseMode::Nondecreasing => q.eval(t) >= s,
        InverseMode::Decreasing => q.eval(t) <= s,
    };
    let (mut lo, mut hi);
    if hit(0.0) {
        hi = 0.0;
        let mut step = 1.0;
        lo = -step;
        while hit(lo) {
            hi = lo;
            step *= 2.0;
            lo = -step;
            if !lo.is_finite() {
                return f64::NEG_INFINITY;
            }
        }
    } else {
        lo = 0.0;
        let mut step = 1.0;
        hi = step;
        while !hit(hi) {
            lo = hi;
            step *= 2.0;
            hi = step;
            if !hi.is_finite() {
                return f64::INFINITY;
            }
        }
    }
    for _ in 0..BISECTION_CAP {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi || hi - lo <= 1e-15 * hi.abs().max(lo.abs()).max(1.0) * 0.5 {
            break;
        }
        if hit(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// `P(s) = int_0^s p`: closed form for polynomial and sampled `p`, through the
/// inverse-function integral identity when `p` is a generalized inverse, and
/// adaptive quadrature otherwise.
pub fn antiderivative(p: &ScalarFn) -> Result<ScalarFn> {
    match &*p.0 {
        Repr::Poly(poly) => Ok(ScalarFn::poly(poly.antiderivative())),
        Repr::Sampled { interp, .. } => Ok(ScalarFn::poly(interp.antiderivative())),
        Repr::Inverse { source, .. } => {
            let source_integral = antiderivative(source)?;
            let base = source_integral.try_eval(p.eval(0.0))?;
            Ok(ScalarFn(Arc::new(Repr::InverseIntegral { inverse: p.clone(), source_integral, base })))
        }
        _ => {
            // fail early rather than on first use
            let probe = p.clone();
            quadrature::integrate(move |x| probe.eval(x), 0.0, 1.0, QUADRATURE_TOL)?;
            Ok(ScalarFn(Arc::new(Repr::Integral { integrand: p.clone() })))
        }
    }
}

/// Legendre transform `Q^(s) = sup_t (s t - Q(t))` of `Q = int_0 q`, built as
/// `P(s) + Q^(0)` with `P` the antiderivative of the generalized inverse of `q`
/// and `Q^(0) = -Q(p(0))`.
pub fn legendre_transform(big_q: &ScalarFn, q: &ScalarFn) -> Result<ScalarFn> {
    let p = generalized_inverse(q, InverseMode::Nondecreasing)?;
    let big_p = antiderivative(&p)?;
    let at_zero = -big_q.try_eval(p.eval(0.0))?;
    Ok(ScalarFn::offset(big_p, at_zero))
}
