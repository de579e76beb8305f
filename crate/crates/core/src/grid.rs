//! Uniform grids on a rectangle or a masked disk, fields on them, and
//! cell-sum quadrature.
//!
//! Node `(i, j)` with `0 <= i < nx`, `0 <= j < ny` sits at
//! `(x0 + (i + 1) h, y0 + (j + 1) h)`; the surrounding ring of nodes is the
//! Dirichlet boundary and carries the value zero. On a disk, nodes outside the
//! circle are inactive and behave like boundary nodes.

use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::GreenOperator;

/// Smallest allowed number of intervals per side.
pub const MIN_RESOLUTION: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Rectangle { lx: f64, ly: f64 },
    Disk { r: f64 },
}

/// A shape plus the number of grid intervals across its width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub shape: Shape,
    pub resolution: usize,
}

impl GridSpec {
    pub fn unit_square(resolution: usize) -> Self {
        GridSpec { shape: Shape::Rectangle { lx: 1.0, ly: 1.0 }, resolution }
    }

    pub fn disk(r: f64, resolution: usize) -> Self {
        GridSpec { shape: Shape::Disk { r }, resolution }
    }
}

pub struct Grid {
    spec: GridSpec,
    nx: usize,
    ny: usize,
    h: f64,
    x0: f64,
    y0: f64,
    mask: Vec<bool>,
    active: usize,
    green: OnceLock<GreenOperator>,
    pub(crate) principal: OnceLock<(f64, Vec<f64>)>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("spec", &self.spec)
            .field("nx", &self.nx)
            .field("ny", &self.ny)
            .field("h", &self.h)
            .field("active", &self.active)
            .finish()
    }
}

/// Build a grid; the result is shared by every field that lives on it.
pub fn build_grid(spec: GridSpec) -> Result<Arc<Grid>> {
    Grid::new(spec).map(Arc::new)
}

impl Grid {
    pub fn new(spec: GridSpec) -> Result<Grid> {
        let n = spec.resolution;
        if n < MIN_RESOLUTION {
            return Err(Error::InvalidSpec(format!("resolution {n} is below the minimum {MIN_RESOLUTION}")));
        }
        let (nx, ny, h, x0, y0) = match spec.shape {
            Shape::Rectangle { lx, ly } => {
                if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
                    return Err(Error::InvalidSpec(format!("rectangle sides must be positive, got {lx} x {ly}")));
                }
                let h = lx / n as f64;
                let m = (ly / h).round();
                if m < MIN_RESOLUTION as f64 {
                    return Err(Error::InvalidSpec(format!("rectangle {lx} x {ly} is too thin for resolution {n}")));
                }
                if ((ly / h) - m).abs() > 1e-9 * m {
                    return Err(Error::InvalidSpec(format!("height {ly} is not a multiple of the spacing {h}")));
                }
                (n - 1, m as usize - 1, h, 0.0, 0.0)
            }
            Shape::Disk { r } => {
                if !(r > 0.0 && r.is_finite()) {
                    return Err(Error::InvalidSpec(format!("disk radius must be positive, got {r}")));
                }
                (n - 1, n - 1, 2.0 * r / n as f64, -r, -r)
            }
        };
        let mut mask = vec![true; nx * ny];
        if let Shape::Disk { r } = spec.shape {
            for j in 0..ny {
                for i in 0..nx {
                    let x = x0 + (i + 1) as f64 * h;
                    let y = y0 + (j + 1) as f64 * h;
                    mask[j * nx + i] = x * x + y * y < r * r;
                }
            }
        }
        let active = mask.iter().filter(|&&b| b).count();
        Ok(Grid { spec, nx, ny, h, x0, y0, mask, active, green: OnceLock::new(), principal: OnceLock::new() })
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.active == 0
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    #[inline]
    pub fn is_active(&self, k: usize) -> bool {
        self.mask[k]
    }

    /// Number of interior (active) nodes.
    pub fn active_count(&self) -> usize {
        self.active
    }

    /// Discrete area `|D|`: active node count times the cell area.
    pub fn area(&self) -> f64 {
        self.active as f64 * self.cell_area()
    }

    /// Lower-left corner of the bounding box (a boundary node).
    pub fn origin(&self) -> (f64, f64) {
        (self.x0, self.y0)
    }

    /// Side lengths of the bounding box.
    pub fn extent(&self) -> (f64, f64) {
        ((self.nx + 1) as f64 * self.h, (self.ny + 1) as f64 * self.h)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn coords(&self, k: usize) -> (f64, f64) {
        let (i, j) = (k % self.nx, k / self.nx);
        (self.x0 + (i + 1) as f64 * self.h, self.y0 + (j + 1) as f64 * self.h)
    }

    /// Value of the node `(i + di, j + dj)` of `values`, zero outside the interior.
    #[inline]
    pub(crate) fn neighbor(&self, values: &[f64], i: usize, j: usize, di: isize, dj: isize) -> f64 {
        let (ii, jj) = (i as isize + di, j as isize + dj);
        if ii < 0 || jj < 0 || ii >= self.nx as isize || jj >= self.ny as isize {
            return 0.0;
        }
        let k = jj as usize * self.nx + ii as usize;
        if self.mask[k] {
            values[k]
        } else {
            0.0
        }
    }

    #[inline]
    pub(crate) fn active_at(&self, i: isize, j: isize) -> bool {
        i >= 0 && j >= 0 && i < self.nx as isize && j < self.ny as isize && self.mask[j as usize * self.nx + i as usize]
    }

    /// The Dirichlet Green operator of this grid, factored on first use.
    pub fn green(&self) -> &GreenOperator {
        self.green.get_or_init(|| GreenOperator::direct(self).expect("the Dirichlet Laplacian is nonsingular"))
    }

    /// Applies the 5-point `-Δ` with zero values off the interior.
    pub fn neg_laplacian(&self, u: &[f64], out: &mut [f64]) {
        let inv_h2 = 1.0 / (self.h * self.h);
        for j in 0..self.ny {
            for i in 0..self.nx {
                let k = j * self.nx + i;
                out[k] = if self.mask[k] {
                    let s = self.neighbor(u, i, j, -1, 0)
                        + self.neighbor(u, i, j, 1, 0)
                        + self.neighbor(u, i, j, 0, -1)
                        + self.neighbor(u, i, j, 0, 1);
                    (4.0 * u[k] - s) * inv_h2
                } else {
                    0.0
                };
            }
        }
    }

    /// Sample `f(x, y)` at active nodes.
    pub fn sample<F: Fn(f64, f64) -> f64>(self: &Arc<Self>, f: F) -> ScalarField {
        let values = (0..self.len())
            .map(|k| {
                if self.mask[k] {
                    let (x, y) = self.coords(k);
                    f(x, y)
                } else {
                    0.0
                }
            })
            .collect();
        ScalarField { grid: self.clone(), values }
    }

    pub fn zeros(self: &Arc<Self>) -> ScalarField {
        ScalarField { grid: self.clone(), values: vec![0.0; self.len()] }
    }

    pub fn constant(self: &Arc<Self>, c: f64) -> ScalarField {
        self.sample(|_, _| c)
    }
}

/// A real value per node of a grid; inactive nodes hold zero.
#[derive(Clone)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarField({}x{})", self.grid.nx, self.grid.ny)
    }
}

impl ScalarField {
    /// Wrap raw row-major values; entries on inactive nodes are zeroed.
    pub fn from_values(grid: &Arc<Grid>, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite value at node {k}")));
        }
        for (v, &a) in values.iter_mut().zip(&grid.mask) {
            if !a {
                *v = 0.0;
            }
        }
        Ok(ScalarField { grid: grid.clone(), values })
    }

    pub(crate) fn from_vec_unchecked(grid: &Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        ScalarField { grid: grid.clone(), values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_grid(&self, other: &ScalarField) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || self.grid.spec == other.grid.spec {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Values at active nodes, in node order.
    pub fn active_values(&self) -> Vec<f64> {
        self.values.iter().zip(&self.grid.mask).filter(|(_, &a)| a).map(|(&v, _)| v).collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        let values = self.values.iter().zip(&self.grid.mask).map(|(&v, &a)| if a { f(v) } else { 0.0 }).collect();
        ScalarField { grid: self.grid.clone(), values }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        self.same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .zip(&self.grid.mask)
            .map(|((&a, &b), &m)| if m { f(a, b) } else { 0.0 })
            .collect();
        Ok(ScalarField { grid: self.grid.clone(), values })
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &ScalarField) -> Result<ScalarField> {
        self.zip_map(other, |a, b| a + c * b)
    }

    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> ScalarField {
        self.map(|v| c * v)
    }

    pub fn min(&self) -> f64 {
        self.active_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.active_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.active_iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn active_iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().zip(&self.grid.mask).filter(|(_, &a)| a).map(|(&v, _)| v)
    }

    /// `∫ f`, cell-sum quadrature.
    pub fn integral(&self) -> f64 {
        self.active_iter().sum::<f64>() * self.grid.cell_area()
    }

    /// `(∫ |f|^p)^(1/p)`; `p = inf` gives the max norm.
    pub fn lp_norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.max_abs();
        }
        let s: f64 = if p == 2.0 {
            self.active_iter().map(|v| v * v).sum()
        } else if p == 1.0 {
            self.active_iter().map(f64::abs).sum()
        } else {
            self.active_iter().map(|v| v.abs().powf(p)).sum()
        };
        (s * self.grid.cell_area()).powf(1.0 / p)
    }

    /// `∫ f g`.
    pub fn inner(&self, other: &ScalarField) -> Result<f64> {
        self.same_grid(other)?;
        Ok(dot(&self.values, &other.values) * self.grid.cell_area())
    }

    /// `∫ f 𝒢g`.
    pub fn energy_inner(&self, other: &ScalarField) -> Result<f64> {
        self.same_grid(other)?;
        self.inner(&green_apply(other)?)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// What [`field_reduce`] computes.
#[derive(Debug, Clone, Copy)]
pub enum Reduction<'a> {
    Integral,
    LpNorm(f64),
    Inner(&'a ScalarField),
    EnergyInner(&'a ScalarField),
}

pub fn field_reduce(f: &ScalarField, kind: Reduction<'_>) -> Result<f64> {
    match kind {
        Reduction::Integral => Ok(f.integral()),
        Reduction::LpNorm(p) => Ok(f.lp_norm(p)),
        Reduction::Inner(g) => f.inner(g),
        Reduction::EnergyInner(g) => f.energy_inner(g),
    }
}

/// `u = 𝒢f`: the solution of the 5-point `-Δu = f` with zero boundary values.
pub fn green_apply(f: &ScalarField) -> Result<ScalarField> {
    let grid = f.grid();
    let u = grid.green().solve(grid, f.values())?;
    Ok(ScalarField::from_vec_unchecked(grid, u))
}

/// Velocity samples `(u, v)` at the nodes of a grid.
#[derive(Clone)]
pub struct VelocityField {
    grid: Arc<Grid>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl fmt::Debug for VelocityField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VelocityField({}x{})", self.grid.nx, self.grid.ny)
    }
}

impl VelocityField {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn max_speed(&self) -> f64 {
        self.u
            .iter()
            .zip(&self.v)
            .zip(&self.grid.mask)
            .filter(|(_, &a)| a)
            .fold(0.0, |m, ((u, v), _)| m.max(u.hypot(*v)))
    }

    /// `∂x u + ∂y v` with the same difference rule as [`perp_gradient`].
    pub fn divergence(&self) -> ScalarField {
        let g = &self.grid;
        let values = (0..g.len())
            .map(|k| {
                if !g.mask[k] {
                    return 0.0;
                }
                let (i, j) = (k % g.nx, k / g.nx);
                diff(g, &self.u, i, j, 1, 0) + diff(g, &self.v, i, j, 0, 1)
            })
            .collect();
        ScalarField::from_vec_unchecked(g, values)
    }
}

/// Derivative of `f` along `(di, dj)` at node `(i, j)`: centered where both
/// neighbours are interior, second-order one-sided otherwise.
fn diff(g: &Grid, f: &[f64], i: usize, j: usize, di: isize, dj: isize) -> f64 {
    let (i, j) = (i as isize, j as isize);
    let at = |s: isize| f[((j + s * dj) as usize) * g.nx + (i + s * di) as usize];
    let has = |s: isize| g.active_at(i + s * di, j + s * dj);
    let h = g.h;
    match (has(-1), has(1)) {
        (true, true) => (at(1) - at(-1)) / (2.0 * h),
        (false, true) if has(2) => (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h),
        (false, true) => (at(1) - at(0)) / h,
        (true, false) if has(-2) => (3.0 * at(0) - 4.0 * at(-1) + at(-2)) / (2.0 * h),
        (true, false) => (at(0) - at(-1)) / h,
        (false, false) => 0.0,
    }
}

/// `v = ∇⊥ψ = (∂yψ, -∂xψ)` by finite differences of the node values.
pub fn perp_gradient(psi: &ScalarField) -> VelocityField {
    let g = psi.grid();
    let f = psi.values();
    let mut u = vec![0.0; g.len()];
    let mut v = vec![0.0; g.len()];
    for k in 0..g.len() {
        if g.mask[k] {
            let (i, j) = (k % g.nx, k / g.nx);
            u[k] = diff(g, f, i, j, 0, 1);
            v[k] = -diff(g, f, i, j, 1, 0);
        }
    }
    VelocityField { grid: g.clone(), u, v }
}

/// JSON sidecar of a binary field snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotMeta {
    pub shape: Shape,
    pub resolution: usize,
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    /// Run lengths of the mask in row-major order, starting with a run of
    /// inactive nodes (possibly empty).
    pub mask_rle: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

fn mask_rle(mask: &[bool]) -> Vec<usize> {
    let mut runs = Vec::new();
    let mut cur = false;
    let mut len = 0;
    for &b in mask {
        if b == cur {
            len += 1;
        } else {
            runs.push(len);
            cur = b;
            len = 1;
        }
    }
    runs.push(len);
    runs
}

impl ScalarField {
    /// Little-endian `f64` values in row-major order.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn snapshot_meta(&self) -> SnapshotMeta {
        let g = &self.grid;
        SnapshotMeta {
            shape: g.spec.shape,
            resolution: g.spec.resolution,
            nx: g.nx,
            ny: g.ny,
            h: g.h,
            mask_rle: mask_rle(&g.mask),
            config_hash: None,
            label: None,
        }
    }

    /// Rebuild a field from snapshot bytes and sidecar; the grid is rebuilt from
    /// the sidecar and checked against it.
    pub fn from_snapshot(bytes: &[u8], meta: &SnapshotMeta) -> Result<ScalarField> {
        let grid = build_grid(GridSpec { shape: meta.shape, resolution: meta.resolution })?;
        if grid.nx != meta.nx || grid.ny != meta.ny || grid.h.to_bits() != meta.h.to_bits() {
            return Err(Error::InvalidSpec("snapshot sidecar disagrees with its grid".into()));
        }
        if mask_rle(&grid.mask) != meta.mask_rle {
            return Err(Error::InvalidSpec("snapshot mask disagrees with its grid".into()));
        }
        if bytes.len() != 8 * grid.len() {
            return Err(Error::InvalidSpec(format!("snapshot holds {} bytes, expected {}", bytes.len(), 8 * grid.len())));
        }
        let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        ScalarField::from_values(&grid, values)
    }

    /// Write `<stem>.bin` and `<stem>.json`.
    pub fn write_snapshot(&self, stem: &std::path::Path) -> Result<()> {
        std::fs::write(stem.with_extension("bin"), self.to_bytes())?;
        let meta = serde_json::to_string_pretty(&self.snapshot_meta())?;
        std::fs::write(stem.with_extension("json"), meta + "\n")?;
        Ok(())
    }

    pub fn read_snapshot(stem: &std::path::Path) -> Result<ScalarField> {
        let bytes = std::fs::read(stem.with_extension("bin"))?;
        let meta: SnapshotMeta = serde_json::from_slice(&std::fs::read(stem.with_extension("json"))?)?;
        ScalarField::from_snapshot(&bytes, &meta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn rectangle_counts() {
        let g = build_grid(GridSpec::unit_square(64)).unwrap();
        assert_eq!((g.nx(), g.ny()), (63, 63));
        assert_eq!(g.h(), 1.0 / 64.0);
        let r = build_grid(GridSpec { shape: Shape::Rectangle { lx: 2.0, ly: 1.0 }, resolution: 32 }).unwrap();
        assert_eq!((r.nx(), r.ny()), (31, 15));
    }

    #[test]
    fn too_coarse_is_rejected() {
        assert!(matches!(build_grid(GridSpec::unit_square(4)), Err(Error::InvalidSpec(_))));
        assert!(matches!(build_grid(GridSpec::disk(-1.0, 32)), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn disk_area() {
        let g = build_grid(GridSpec::disk(0.5, 64)).unwrap();
        assert!((g.area() - PI / 4.0).abs() < 0.02 * PI / 4.0);
    }

    #[test]
    fn perp_gradient_of_linear_field() {
        let g = build_grid(GridSpec::unit_square(16)).unwrap();
        let v = perp_gradient(&g.sample(|_, y| y));
        for k in 0..g.len() {
            assert!((v.u[k] - 1.0).abs() < 1e-12);
            assert!(v.v[k].abs() < 1e-12);
        }
        let c = perp_gradient(&g.constant(3.0));
        assert_eq!(c.max_speed(), 0.0);
    }

    #[test]
    fn snapshot_round_trip_is_bitwise() {
        let g = build_grid(GridSpec::disk(1.0, 20)).unwrap();
        let f = g.sample(|x, y| (3.0 * x).sin() * y + 1.0 / 3.0);
        let back = ScalarField::from_snapshot(&f.to_bytes(), &f.snapshot_meta()).unwrap();
        assert!(f.values().iter().zip(back.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn rle_counts_all_nodes() {
        let g = build_grid(GridSpec::disk(1.0, 16)).unwrap();
        let runs = mask_rle(g.mask());
        assert_eq!(runs.iter().sum::<usize>(), g.len());
    }
}
