//! Piecewise polynomials in local (anchored) monomial form.

use crate::error::{Error, Result};

/// One polynomial piece `sum_k coeffs[k] * (s - anchor)^k` valid on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub anchor: f64,
    pub coeffs: Vec<f64>,
}

impl Piece {
    pub fn new(lo: f64, hi: f64, anchor: f64, coeffs: Vec<f64>) -> Self {
        Piece { lo, hi, anchor, coeffs }
    }

    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        let x = s - self.anchor;
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    #[inline]
    pub fn deriv(&self, s: f64) -> f64 {
        let x = s - self.anchor;
        let mut acc = 0.0;
        for (k, &c) in self.coeffs.iter().enumerate().skip(1).rev() {
            acc = acc * x + c * k as f64;
        }
        acc
    }

    fn integral_raw(&self, s: f64) -> f64 {
        let x = s - self.anchor;
        let mut acc = 0.0;
        for (k, &c) in self.coeffs.iter().enumerate().rev() {
            acc = acc * x + c / (k + 1) as f64;
        }
        acc * x
    }

    /// Degree after trimming trailing zero coefficients (`None` for the zero polynomial).
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.iter().rposition(|&c| c != 0.0)
    }
}

/// Contiguous sequence of polynomial pieces; `pieces[i].hi == pieces[i + 1].lo`.
///
/// Evaluation outside `[first.lo, last.hi]` continues the end pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewisePoly {
    pieces: Vec<Piece>,
}

impl PiecewisePoly {
    pub fn new(pieces: Vec<Piece>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::InvalidArgument("piecewise polynomial needs at least one piece".into()));
        }
        for p in &pieces {
            if !(p.lo <= p.hi) || p.coeffs.is_empty() || p.coeffs.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidArgument(format!("malformed piece on [{}, {}]", p.lo, p.hi)));
            }
            if !p.anchor.is_finite() {
                return Err(Error::InvalidArgument("piece anchor must be finite".into()));
            }
        }
        for w in pieces.windows(2) {
            if w[0].hi != w[1].lo {
                return Err(Error::InvalidArgument(format!(
                    "pieces are not contiguous: {} != {}",
                    w[0].hi, w[1].lo
                )));
            }
        }
        Ok(PiecewisePoly { pieces })
    }

    /// `alpha * s + beta` on the whole line.
    pub fn affine(alpha: f64, beta: f64) -> Self {
        PiecewisePoly { pieces: vec![Piece::new(f64::NEG_INFINITY, f64::INFINITY, 0.0, vec![beta, alpha])] }
    }

    /// `s^n` on the whole line.
    pub fn monomial(n: usize) -> Self {
        let mut coeffs = vec![0.0; n + 1];
        coeffs[n] = 1.0;
        PiecewisePoly { pieces: vec![Piece::new(f64::NEG_INFINITY, f64::INFINITY, 0.0, coeffs)] }
    }

    /// Continuous piecewise-linear interpolant through `(xs[i], ys[i])`, continued
    /// linearly beyond both ends.
    pub fn linear_interpolant(xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(Error::InvalidArgument("interpolant needs at least two matching samples".into()));
        }
        if xs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("sample abscissae must be strictly increasing".into()));
        }
        let n = xs.len();
        let mut pieces = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            let slope = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]);
            let lo = if i == 0 { f64::NEG_INFINITY } else { xs[i] };
            let hi = if i == n - 2 { f64::INFINITY } else { xs[i + 1] };
            pieces.push(Piece::new(lo, hi, xs[i], vec![ys[i], slope]));
        }
        PiecewisePoly::new(pieces)
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn lo(&self) -> f64 {
        self.pieces[0].lo
    }

    pub fn hi(&self) -> f64 {
        self.pieces[self.pieces.len() - 1].hi
    }

    /// Index of the piece used for `s`: the last piece with `lo <= s`.
    #[inline]
    fn locate(&self, s: f64) -> usize {
        let idx = self.pieces.partition_point(|p| p.lo <= s);
        idx.saturating_sub(1)
    }

    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        self.pieces[self.locate(s)].eval(s)
    }

    #[inline]
    pub fn deriv(&self, s: f64) -> f64 {
        self.pieces[self.locate(s)].deriv(s)
    }

    /// One-sided derivatives `(q'(s-), q'(s+))`.
    pub fn one_sided_derivs(&self, s: f64) -> (f64, f64) {
        let right = self.locate(s);
        let left = if right > 0 && self.pieces[right].lo == s { right - 1 } else { right };
        (self.pieces[left].deriv(s), self.pieces[right].deriv(s))
    }

    /// Finite breakpoints between pieces.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.pieces.iter().skip(1).map(|p| p.lo).collect()
    }

    /// Antiderivative vanishing at 0, continuous across breakpoints.
    pub fn antiderivative(&self) -> PiecewisePoly {
        let n = self.pieces.len();
        let origin = self.locate(0.0);
        let mut consts = vec![0.0; n];
        consts[origin] = -self.pieces[origin].integral_raw(0.0);
        for i in origin + 1..n {
            let b = self.pieces[i].lo;
            consts[i] = self.pieces[i - 1].integral_raw(b) + consts[i - 1] - self.pieces[i].integral_raw(b);
        }
        for i in (0..origin).rev() {
            let b = self.pieces[i].hi;
            consts[i] = self.pieces[i + 1].integral_raw(b) + consts[i + 1] - self.pieces[i].integral_raw(b);
        }
        let pieces = self
            .pieces
            .iter()
            .zip(consts)
            .map(|(p, c)| {
                let mut coeffs = Vec::with_capacity(p.coeffs.len() + 1);
                // constant term in local variable: value at the anchor
                coeffs.push(c);
                coeffs.extend(p.coeffs.iter().enumerate().map(|(k, &a)| a / (k + 1) as f64));
                Piece::new(p.lo, p.hi, p.anchor, coeffs)
            })
            .collect();
        PiecewisePoly { pieces }
    }

    /// Pieces clipped to `[lo, hi]`; values inside are bit-identical.
    pub fn restrict(&self, lo: f64, hi: f64) -> Result<PiecewisePoly> {
        if !(lo <= hi) {
            return Err(Error::InvalidArgument(format!("empty restriction [{lo}, {hi}]")));
        }
        let first = self.locate(lo);
        let mut last = self.locate(hi);
        if last > first && self.pieces[last].lo == hi {
            last -= 1;
        }
        let mut pieces: Vec<Piece> = self.pieces[first..=last].to_vec();
        pieces[0].lo = lo;
        let k = pieces.len() - 1;
        pieces[k].hi = hi;
        PiecewisePoly::new(pieces)
    }

    /// Asymptotic slope `lim q(s)/s` in the given direction, if finite.
    pub fn asymptotic_slope(&self, positive: bool) -> Option<f64> {
        let p = if positive { &self.pieces[self.pieces.len() - 1] } else { &self.pieces[0] };
        match p.degree() {
            None | Some(0) => Some(0.0),
            Some(1) => Some(p.coeffs[1]),
            _ => None,
        }
    }

    /// Whether `q(s) -> +inf` (`sign = 1`) or `-inf` (`sign = -1`) as `s -> +inf` / `-inf`.
    pub fn tends_to(&self, positive_end: bool, sign: f64) -> bool {
        let end = if positive_end { self.hi() } else { self.lo() };
        if end.is_finite() {
            return false;
        }
        let p = if positive_end { &self.pieces[self.pieces.len() - 1] } else { &self.pieces[0] };
        match p.degree() {
            None | Some(0) => false,
            Some(d) => {
                let lead = p.coeffs[d];
                let dir = if positive_end || d % 2 == 0 { 1.0 } else { -1.0 };
                lead * dir * sign > 0.0
            }
        }
    }
}
