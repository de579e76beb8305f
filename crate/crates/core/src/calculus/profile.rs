//! Monotone profiles `g` on `[m, M]` and their C¹ strictly increasing
//! extension to the whole line.

use serde::{Deserialize, Serialize};

use super::{antiderivative, check_monotone, legendre_transform, InverseMode, Piece, PiecewisePoly, ScalarFn};
use crate::error::{Error, Result};

/// Below this slope the end of `[m, M]` is treated as flat and bent upward.
const FLAT_SLOPE: f64 = 1e-12;

/// Continuation of a profile past one end `a` of `[m, M]`.
///
/// `dir` is `-1` on the left end and `+1` on the right end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tail {
    /// `g(a) + slope (s - a)`.
    Tangent { slope: f64 },
    /// `g(a) + dir (s - a)^2` within unit distance of `a`, then slope 2.
    Bend,
}

impl Tail {
    fn for_slope(slope: f64) -> Tail {
        if slope > FLAT_SLOPE {
            Tail::Tangent { slope }
        } else {
            Tail::Bend
        }
    }

    pub(super) fn eval(&self, s: f64, a: f64, ga: f64, dir: f64) -> f64 {
        match *self {
            Tail::Tangent { slope } => ga + slope * (s - a),
            Tail::Bend => {
                let x = s - a;
                if x.abs() <= 1.0 {
                    ga + dir * x * x
                } else {
                    ga + dir + 2.0 * (x - dir)
                }
            }
        }
    }

    pub(super) fn deriv(&self, s: f64, a: f64, dir: f64) -> f64 {
        match *self {
            Tail::Tangent { slope } => slope,
            Tail::Bend => {
                let x = s - a;
                if x.abs() <= 1.0 {
                    2.0 * dir * x
                } else {
                    2.0
                }
            }
        }
    }

    fn slope_at_infinity(&self) -> f64 {
        match *self {
            Tail::Tangent { slope } => slope,
            Tail::Bend => 2.0,
        }
    }

    /// Exact polynomial pieces of the tail, ordered left to right.
    fn pieces(&self, a: f64, ga: f64, dir: f64) -> Vec<Piece> {
        let mut out = match *self {
            Tail::Tangent { slope } => {
                let (lo, hi) = if dir < 0.0 { (f64::NEG_INFINITY, a) } else { (a, f64::INFINITY) };
                vec![Piece::new(lo, hi, a, vec![ga, slope])]
            }
            Tail::Bend => {
                let b = a + dir;
                let near = if dir < 0.0 { (b, a) } else { (a, b) };
                let far = if dir < 0.0 { (f64::NEG_INFINITY, b) } else { (b, f64::INFINITY) };
                vec![
                    Piece::new(near.0, near.1, a, vec![ga, 0.0, dir]),
                    Piece::new(far.0, far.1, b, vec![ga + dir, 2.0]),
                ]
            }
        };
        if dir < 0.0 {
            out.reverse();
        }
        out
    }
}

/// A nondecreasing C¹ profile on `[m, M]` together with its extension, the
/// antiderivative `G` of the extension and the Legendre transform of `G`.
#[derive(Debug, Clone)]
pub struct MonotoneProfile {
    g: ScalarFn,
    m: f64,
    big_m: f64,
    left: Tail,
    right: Tail,
    g_ext: ScalarFn,
    big_g: ScalarFn,
    g_hat: ScalarFn,
}

impl MonotoneProfile {
    /// Restrict `g` to `[m, M]` and extend.
    pub fn from_fn(g: &ScalarFn, m: f64, big_m: f64) -> Result<Self> {
        extend_monotone(&g.restrict(m, big_m)?)
    }

    /// The profile on `[m, M]`.
    pub fn g(&self) -> &ScalarFn {
        &self.g
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn big_m(&self) -> f64 {
        self.big_m
    }

    pub fn g_ext(&self) -> &ScalarFn {
        &self.g_ext
    }

    pub fn big_g(&self) -> &ScalarFn {
        &self.big_g
    }

    pub fn g_hat(&self) -> &ScalarFn {
        &self.g_hat
    }

    pub fn tails(&self) -> (Tail, Tail) {
        (self.left, self.right)
    }

    /// Asymptotic slope of the extension as `s -> +inf`.
    pub fn c1(&self) -> f64 {
        self.right.slope_at_infinity()
    }

    /// Asymptotic slope of the extension as `s -> -inf`.
    pub fn c2(&self) -> f64 {
        self.left.slope_at_infinity()
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.g_ext.eval(s)
    }

    /// Derivative of the extension (always available).
    pub fn deriv(&self, s: f64) -> f64 {
        self.g_ext.deriv(s).expect("extension carries a derivative")
    }

    /// Exact serialized form; only piecewise-polynomial profiles have one.
    pub fn to_document(&self) -> Result<ProfileDocument> {
        let poly = self
            .g
            .as_poly()
            .ok_or_else(|| Error::InvalidArgument(format!("{} profile has no exact document form", self.g.kind())))?;
        Ok(ProfileDocument {
            pieces: poly.pieces().iter().map(PieceDoc::from).collect(),
            m: fmt_exact(self.m),
            big_m: fmt_exact(self.big_m),
            extension: EXTENSION_TAG.to_string(),
        })
    }

    pub fn from_document(doc: &ProfileDocument) -> Result<Self> {
        if doc.extension != EXTENSION_TAG {
            return Err(Error::InvalidArgument(format!("unknown extension rule `{}`", doc.extension)));
        }
        let pieces = doc.pieces.iter().map(PieceDoc::to_piece).collect::<Result<Vec<_>>>()?;
        let poly = PiecewisePoly::new(pieces)?;
        let m = parse_exact(&doc.m)?;
        let big_m = parse_exact(&doc.big_m)?;
        MonotoneProfile::from_fn(&ScalarFn::poly(poly), m, big_m)
    }
}

/// Extend a C¹ nondecreasing `g` given on a bounded `[m, M]` to a C¹ function on
/// the line that is strictly increasing outside `[m, M]` with positive slopes at
/// both infinities.
///
/// At an end where `g'` is positive the extension is the tangent line; where it
/// vanishes the extension bends quadratically over one unit and then continues
/// with slope 2.
pub fn extend_monotone(g: &ScalarFn) -> Result<MonotoneProfile> {
    let dom = g.domain();
    if !dom.is_bounded() {
        return Err(Error::RegularityViolation("profile must be given on a bounded interval".into()));
    }
    let (m, big_m) = (dom.lo, dom.hi);
    check_monotone(g, InverseMode::Nondecreasing, super::PROBES_PER_UNIT)
        .map_err(|e| Error::RegularityViolation(format!("profile is not nondecreasing on [{m}, {big_m}]: {e}")))?;

    let (dl, dr) = match g.as_poly() {
        Some(p) => (p.one_sided_derivs(m).1, p.one_sided_derivs(big_m).0),
        None => match (g.deriv(m), g.deriv(big_m)) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::RegularityViolation("profile derivative is unavailable".into())),
        },
    };
    if !(dl.is_finite() && dr.is_finite()) || dl < -FLAT_SLOPE || dr < -FLAT_SLOPE {
        return Err(Error::RegularityViolation(format!("bad end slopes g'(m) = {dl}, g'(M) = {dr}")));
    }
    let left = Tail::for_slope(dl);
    let right = Tail::for_slope(dr);
    let (gm, g_big_m) = (g.eval(m), g.eval(big_m));

    let g_ext = match g.as_poly() {
        Some(core) => {
            let mut pieces = left.pieces(m, gm, -1.0);
            pieces.extend(core.pieces().iter().cloned());
            pieces.extend(right.pieces(big_m, g_big_m, 1.0));
            ScalarFn::poly(PiecewisePoly::new(pieces)?)
        }
        None => ScalarFn::extended(g.clone(), m, big_m, left, right),
    };
    let big_g = antiderivative(&g_ext)?;
    let g_hat = legendre_transform(&big_g, &g_ext)?;
    Ok(MonotoneProfile { g: g.clone(), m, big_m, left, right, g_ext, big_g, g_hat })
}

/// Fenchel–Young gap `Ĝ(s) + G(τ) - s τ`, nonnegative up to rounding and zero
/// exactly when `s = g(τ)`.
pub fn fenchel_gap(profile: &MonotoneProfile, s: f64, tau: f64) -> f64 {
    profile.g_hat.eval(s) + profile.big_g.eval(tau) - s * tau
}

const EXTENSION_TAG: &str = "lemma-mM";

/// JSON form of a piecewise-polynomial profile. Numbers are shortest
/// round-trip decimal strings so that documents reload bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileDocument {
    pub pieces: Vec<PieceDoc>,
    pub m: String,
    #[serde(rename = "M")]
    pub big_m: String,
    pub extension: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceDoc {
    pub lo: String,
    pub hi: String,
    pub anchor: String,
    pub coeffs: Vec<String>,
}

impl From<&Piece> for PieceDoc {
    fn from(p: &Piece) -> Self {
        PieceDoc {
            lo: fmt_exact(p.lo),
            hi: fmt_exact(p.hi),
            anchor: fmt_exact(p.anchor),
            coeffs: p.coeffs.iter().map(|&c| fmt_exact(c)).collect(),
        }
    }
}

impl PieceDoc {
    fn to_piece(&self) -> Result<Piece> {
        Ok(Piece::new(
            parse_exact(&self.lo)?,
            parse_exact(&self.hi)?,
            parse_exact(&self.anchor)?,
            self.coeffs.iter().map(|c| parse_exact(c)).collect::<Result<_>>()?,
        ))
    }
}

fn fmt_exact(x: f64) -> String {
    format!("{x:?}")
}

fn parse_exact(s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::InvalidArgument(format!("`{s}` is not a number")))
}
