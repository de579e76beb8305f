//! Interpolation of node values: bilinear, and a C¹ tensor-product
//! Catmull–Rom bicubic with analytic gradient.

use crate::grid::Grid;

/// Node values on the full lattice of a grid (boundary ring included) plus
/// `pad` extra layers of ghost nodes on every side.
///
/// Lattice index `(a, b)` sits at `(x0 + a h, y0 + b h)`; interior node
/// `(i, j)` of the grid is `(i + 1, j + 1)`.
#[derive(Debug, Clone)]
pub struct Lattice {
    pad: isize,
    w: usize,
    hgt: usize,
    nx: isize,
    ny: isize,
    x0: f64,
    y0: f64,
    h: f64,
    data: Vec<f64>,
}

impl Lattice {
    /// Fill from `value(a, b)` for `-pad <= a <= nx + 1 + pad` (same for `b`).
    pub fn build(grid: &Grid, pad: usize, value: impl Fn(isize, isize) -> f64) -> Lattice {
        let p = pad as isize;
        let (nx, ny) = (grid.nx() as isize, grid.ny() as isize);
        let w = (nx + 2 + 2 * p) as usize;
        let hgt = (ny + 2 + 2 * p) as usize;
        let mut data = Vec::with_capacity(w * hgt);
        for b in -p..ny + 2 + p {
            for a in -p..nx + 2 + p {
                data.push(value(a, b));
            }
        }
        let (x0, y0) = grid.origin();
        Lattice { pad: p, w, hgt, nx, ny, x0, y0, h: grid.h(), data }
    }

    /// Interior values from `values`, zero on the boundary ring and beyond.
    pub fn zero_padded(grid: &Grid, values: &[f64], pad: usize) -> Lattice {
        let nx = grid.nx();
        Lattice::build(grid, pad, |a, b| {
            if grid.active_at(a - 1, b - 1) {
                values[(b - 1) as usize * nx + (a - 1) as usize]
            } else {
                0.0
            }
        })
    }

    #[inline]
    pub fn at(&self, a: isize, b: isize) -> f64 {
        self.data[(b + self.pad) as usize * self.w + (a + self.pad) as usize]
    }

    /// Lattice coordinates of `(x, y)`, clamped to the lattice.
    #[inline]
    fn local(&self, x: f64, y: f64) -> (f64, f64) {
        let lo = -(self.pad as f64);
        let fx = ((x - self.x0) / self.h).clamp(lo, (self.nx + 1) as f64 + self.pad as f64);
        let fy = ((y - self.y0) / self.h).clamp(lo, (self.ny + 1) as f64 + self.pad as f64);
        (fx, fy)
    }

    /// Cell origin and offset for a stencil reaching `below` nodes down and
    /// `above` nodes up.
    #[inline]
    fn cell(&self, f: f64, n: isize, below: isize, above: isize) -> (isize, f64) {
        let lo = -self.pad + below;
        let hi = n + 1 + self.pad - above;
        let c = (f.floor() as isize).clamp(lo, hi);
        (c, f - c as f64)
    }

    pub fn bilinear(&self, x: f64, y: f64) -> f64 {
        let (fx, fy) = self.local(x, y);
        let (a, tx) = self.cell(fx, self.nx, 0, 1);
        let (b, ty) = self.cell(fy, self.ny, 0, 1);
        let f00 = self.at(a, b);
        let f10 = self.at(a + 1, b);
        let f01 = self.at(a, b + 1);
        let f11 = self.at(a + 1, b + 1);
        (1.0 - ty) * ((1.0 - tx) * f00 + tx * f10) + ty * ((1.0 - tx) * f01 + tx * f11)
    }

    /// Catmull–Rom value, clamped to the range of the four surrounding nodes.
    pub fn bicubic_limited(&self, x: f64, y: f64) -> f64 {
        let (fx, fy) = self.local(x, y);
        let (a, tx) = self.cell(fx, self.nx, 1, 2);
        let (b, ty) = self.cell(fy, self.ny, 1, 2);
        let wx = weights(tx);
        let wy = weights(ty);
        let mut v = 0.0;
        for (jb, wyj) in wy.iter().enumerate() {
            let mut row = 0.0;
            for (ia, wxi) in wx.iter().enumerate() {
                row += wxi * self.at(a - 1 + ia as isize, b - 1 + jb as isize);
            }
            v += wyj * row;
        }
        let c = [self.at(a, b), self.at(a + 1, b), self.at(a, b + 1), self.at(a + 1, b + 1)];
        let lo = c.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        v.clamp(lo, hi)
    }

    /// Catmull–Rom value.
    pub fn bicubic(&self, x: f64, y: f64) -> f64 {
        let (fx, fy) = self.local(x, y);
        let (a, tx) = self.cell(fx, self.nx, 1, 2);
        let (b, ty) = self.cell(fy, self.ny, 1, 2);
        let wx = weights(tx);
        let wy = weights(ty);
        let mut v = 0.0;
        for (jb, wyj) in wy.iter().enumerate() {
            let mut row = 0.0;
            for (ia, wxi) in wx.iter().enumerate() {
                row += wxi * self.at(a - 1 + ia as isize, b - 1 + jb as isize);
            }
            v += wyj * row;
        }
        v
    }

    /// Gradient `(∂x, ∂y)` of the Catmull–Rom interpolant.
    #[inline]
    pub fn bicubic_gradient(&self, x: f64, y: f64) -> (f64, f64) {
        let (fx, fy) = self.local(x, y);
        let (a, tx) = self.cell(fx, self.nx, 1, 2);
        let (b, ty) = self.cell(fy, self.ny, 1, 2);
        let wx = weights(tx);
        let wy = weights(ty);
        let dx = dweights(tx);
        let dy = dweights(ty);
        let (mut gx, mut gy) = (0.0, 0.0);
        for jb in 0..4 {
            let (mut row_v, mut row_d) = (0.0, 0.0);
            for ia in 0..4 {
                let f = self.at(a - 1 + ia as isize, b - 1 + jb as isize);
                row_v += wx[ia] * f;
                row_d += dx[ia] * f;
            }
            gx += wy[jb] * row_d;
            gy += dy[jb] * row_v;
        }
        (gx / self.h, gy / self.h)
    }

    /// Velocity `∇⊥F = (∂yF, -∂xF)` of the Catmull–Rom interpolant `F`.
    #[inline]
    pub fn perp_gradient(&self, x: f64, y: f64) -> (f64, f64) {
        let (gx, gy) = self.bicubic_gradient(x, y);
        (gy, -gx)
    }

    pub fn rows(&self) -> usize {
        self.hgt
    }

    /// Largest `|∇⊥F|` over the active nodes of `grid`.
    pub fn max_node_speed(&self, grid: &Grid) -> f64 {
        (0..grid.len())
            .filter(|&k| grid.is_active(k))
            .map(|k| {
                let (x, y) = grid.coords(k);
                let (u, v) = self.perp_gradient(x, y);
                u.hypot(v)
            })
            .fold(0.0, f64::max)
    }
}

#[inline]
fn weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

#[inline]
fn dweights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    [
        0.5 * (-3.0 * t2 + 4.0 * t - 1.0),
        0.5 * (9.0 * t2 - 10.0 * t),
        0.5 * (-9.0 * t2 + 8.0 * t + 1.0),
        0.5 * (3.0 * t2 - 2.0 * t),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridSpec};

    #[test]
    fn cubic_reproduces_quadratics() {
        let g = build_grid(GridSpec::unit_square(16)).unwrap();
        let f = |x: f64, y: f64| 1.0 + 2.0 * x - y + 0.5 * x * x + x * y - 0.25 * y * y;
        let (x0, y0) = g.origin();
        let h = g.h();
        let lat = Lattice::build(&g, 2, |a, b| f(x0 + a as f64 * h, y0 + b as f64 * h));
        for &(x, y) in &[(0.31, 0.47), (0.05, 0.9), (0.77, 0.13)] {
            let (gx, gy) = lat.bicubic_gradient(x, y);
            assert!((gx - (2.0 + x + y)).abs() < 1e-12);
            assert!((gy - (-1.0 + x - 0.5 * y)).abs() < 1e-12);
            assert!((lat.bilinear(x, y) - f(x, y)).abs() < h * h);
        }
    }

    #[test]
    fn limiter_keeps_values_in_cell_range() {
        let g = build_grid(GridSpec::unit_square(16)).unwrap();
        let lat = Lattice::build(&g, 2, |a, _| if a < 8 { 0.0 } else { 1.0 });
        for k in 0..50 {
            let x = 0.40 + 0.002 * k as f64;
            let v = lat.bicubic_limited(x, 0.5);
            assert!((0.0..=1.0).contains(&v));
        }
    }
}
