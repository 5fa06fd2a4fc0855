//! Uniform periodic grids on the unit torus and the finite-difference calculus
//! used by every spatial term of the scheme.
//!
//! Two Laplacians coexist. [`laplacian`] is the compact (h) stencil used
//! for the nonlinear diffusion. [`divergence`] of [`gradient`] is the wide
//! (2h) stencil; the pair `gradient`/`divergence` is exactly skew-adjoint under
//! [`inner`], which keeps every flux term mass conservative.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum spatial dimension supported.
pub const MAX_DIM: usize = 2;

/// A point of the torus. Components past `dim` are zero.
pub type Point = [f64; MAX_DIM];

/// Periodic uniform grid on `[0,1)^dim`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TorusGrid {
    dim: usize,
    points_per_dim: usize,
}

impl TorusGrid {
    pub fn new(dim: usize, points_per_dim: usize) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::Config(format!("grid dimension must be 1 or 2, got {dim}")));
        }
        if points_per_dim < 3 {
            return Err(Error::Config(format!(
                "grid needs at least 3 points per dimension, got {points_per_dim}"
            )));
        }
        Ok(Self { dim, points_per_dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_dim(&self) -> usize {
        self.points_per_dim
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.points_per_dim as f64
    }

    pub fn total_points(&self) -> usize {
        self.points_per_dim.pow(self.dim as u32)
    }

    /// `h^d`, the quadrature weight of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Flat-index stride of `axis` (row-major, axis 0 slowest).
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        self.points_per_dim.pow((self.dim - 1 - axis) as u32)
    }

    /// Per-axis integer coordinates of a flat index.
    #[inline]
    pub fn multi_index(&self, idx: usize) -> [usize; MAX_DIM] {
        let n = self.points_per_dim;
        match self.dim {
            1 => [idx, 0],
            _ => [idx / n, idx % n],
        }
    }

    #[inline]
    pub fn flat_index(&self, multi: [usize; MAX_DIM]) -> usize {
        match self.dim {
            1 => multi[0],
            _ => multi[0] * self.points_per_dim + multi[1],
        }
    }

    /// Index of the neighbour `offset` cells away along `axis`, wrapping around.
    #[inline]
    pub fn shift(&self, idx: usize, axis: usize, offset: isize) -> usize {
        let n = self.points_per_dim as isize;
        let mut multi = self.multi_index(idx);
        let c = multi[axis] as isize;
        multi[axis] = (c + offset).rem_euclid(n) as usize;
        self.flat_index(multi)
    }

    /// Physical coordinates of grid point `idx`.
    #[inline]
    pub fn point(&self, idx: usize) -> Point {
        let h = self.spacing();
        let m = self.multi_index(idx);
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.dim {
            x[a] = m[a] as f64 * h;
        }
        x
    }

    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.total_points()).map(move |i| self.point(i))
    }

    pub fn check_same(&self, other: &TorusGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch { left: *self, right: *other })
        }
    }
}

/// Shortest signed displacement `x - c` on the unit circle, in `[-1/2, 1/2)`.
#[inline]
pub fn periodic_offset(x: f64, c: f64) -> f64 {
    let d = x - c;
    d - (d + 0.5).floor()
}

/// Scalar grid function.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: TorusGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.total_points()] }
    }

    pub fn from_values(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.total_points() {
            return Err(Error::Format(format!(
                "expected {} values for {:?}, got {}",
                grid.total_points(),
                grid,
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn(Point) -> f64) -> Self {
        let values = (0..grid.total_points()).map(|i| f(grid.point(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.grid.check_same(&other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Field { grid: self.grid, values })
    }

    /// Spatial mean, i.e. the integral over the unit torus.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn norm_l1(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().map(|v| v.abs()).sum::<f64>()
    }

    pub fn norm_l2(&self) -> f64 {
        (self.grid.cell_volume() * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    /// `‖f‖_{L_p}^p`.
    pub fn lp_power(&self, p: f64) -> f64 {
        self.grid.cell_volume() * self.values.iter().map(|v| v.abs().powf(p)).sum::<f64>()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Field translated by `offset` cells along `axis`: `out[i] = self[i - offset]`.
    pub fn shifted(&self, axis: usize, offset: isize) -> Field {
        let mut out = vec![0.0; self.values.len()];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.values[self.grid.shift(i, axis, -offset)];
        }
        Field { grid: self.grid, values: out }
    }

    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        for v in &self.values {
            writeln!(w, "{v}")?;
        }
        Ok(())
    }

    pub fn read_csv(grid: TorusGrid, r: impl Read) -> Result<Field> {
        let mut values = Vec::with_capacity(grid.total_points());
        for line in BufReader::new(r).lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v: f64 = line
                .parse()
                .map_err(|e| Error::Format(format!("bad field value {line:?}: {e}")))?;
            values.push(v);
        }
        Field::from_values(grid, values)
    }

    /// Binary layout: magic `TFLD`, then `dim` and `N` as little-endian u32,
    /// then `N^dim` little-endian f64 in row-major order.
    pub fn write_binary(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(FIELD_MAGIC)?;
        w.write_all(&(self.grid.dim as u32).to_le_bytes())?;
        w.write_all(&(self.grid.points_per_dim as u32).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(r: &mut impl Read) -> Result<Field> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != FIELD_MAGIC {
            return Err(Error::Format("missing TFLD magic".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let dim = u32::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let n = u32::from_le_bytes(word) as usize;
        let grid = TorusGrid::new(dim, n)?;
        let mut values = Vec::with_capacity(grid.total_points());
        let mut buf = [0u8; 8];
        for _ in 0..grid.total_points() {
            r.read_exact(&mut buf)?;
            values.push(f64::from_le_bytes(buf));
        }
        Field::from_values(grid, values)
    }

    pub fn save_binary(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_binary(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load_binary(path: &Path) -> Result<Field> {
        let mut f = BufReader::new(std::fs::File::open(path)?);
        Field::read_binary(&mut f)
    }
}

const FIELD_MAGIC: &[u8; 4] = b"TFLD";

/// One scalar field per spatial direction.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    components: Vec<Field>,
}

impl VectorField {
    pub fn new(components: Vec<Field>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::Config("vector field needs at least one component".into()))?;
        let grid = *first.grid();
        if components.len() != grid.dim() {
            return Err(Error::Config(format!(
                "vector field on a {}-d grid needs {} components, got {}",
                grid.dim(),
                grid.dim(),
                components.len()
            )));
        }
        for c in &components {
            grid.check_same(c.grid())?;
        }
        Ok(Self { components })
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        Self { components: (0..grid.dim()).map(|_| Field::zeros(grid)).collect() }
    }

    pub fn grid(&self) -> &TorusGrid {
        self.components[0].grid()
    }

    pub fn components(&self) -> &[Field] {
        &self.components
    }

    pub fn component(&self, axis: usize) -> &Field {
        &self.components[axis]
    }

    pub fn component_mut(&mut self, axis: usize) -> &mut Field {
        &mut self.components[axis]
    }

    /// Pointwise squared Euclidean norm.
    pub fn norm_squared(&self) -> Field {
        let grid = *self.grid();
        let mut out = Field::zeros(grid);
        for c in &self.components {
            for (o, v) in out.values_mut().iter_mut().zip(c.values()) {
                *o += v * v;
            }
        }
        out
    }
}

/// `h^d Σ f g`.
pub fn inner(f: &Field, g: &Field) -> Result<f64> {
    f.grid().check_same(g.grid())?;
    let s: f64 = f.values().iter().zip(g.values()).map(|(a, b)| a * b).sum();
    Ok(f.grid().cell_volume() * s)
}

/// `Σ_i ⟨F_i, G_i⟩`.
pub fn inner_vector(f: &VectorField, g: &VectorField) -> Result<f64> {
    f.grid().check_same(g.grid())?;
    f.components().iter().zip(g.components()).map(|(a, b)| inner(a, b)).sum()
}

/// Compact second-order Laplacian with periodic wrap.
pub fn laplacian(f: &Field) -> Field {
    let grid = *f.grid();
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    let v = f.values();
    let mut out = vec![0.0; v.len()];
    for axis in 0..grid.dim() {
        for (i, o) in out.iter_mut().enumerate() {
            let fwd = v[grid.shift(i, axis, 1)];
            let bwd = v[grid.shift(i, axis, -1)];
            *o += (fwd - 2.0 * v[i] + bwd) * inv_h2;
        }
    }
    Field { grid, values: out }
}

/// Centered first difference along one axis.
pub fn centered_difference(f: &Field, axis: usize) -> Field {
    let grid = *f.grid();
    let inv_2h = 0.5 / grid.spacing();
    let v = f.values();
    let values = (0..v.len())
        .map(|i| (v[grid.shift(i, axis, 1)] - v[grid.shift(i, axis, -1)]) * inv_2h)
        .collect();
    Field { grid, values }
}

/// Forward first difference along one axis; its skew-adjoint partner composes
/// to the compact [`laplacian`].
pub fn forward_difference(f: &Field, axis: usize) -> Field {
    let grid = *f.grid();
    let inv_h = 1.0 / grid.spacing();
    let v = f.values();
    let values = (0..v.len()).map(|i| (v[grid.shift(i, axis, 1)] - v[i]) * inv_h).collect();
    Field { grid, values }
}

pub fn gradient(f: &Field) -> VectorField {
    VectorField { components: (0..f.grid().dim()).map(|a| centered_difference(f, a)).collect() }
}

pub fn forward_gradient(f: &Field) -> VectorField {
    VectorField { components: (0..f.grid().dim()).map(|a| forward_difference(f, a)).collect() }
}

/// Centered divergence, the negative adjoint of [`gradient`].
pub fn divergence(flux: &VectorField) -> Field {
    let grid = *flux.grid();
    let mut out = Field::zeros(grid);
    for (axis, c) in flux.components().iter().enumerate() {
        let d = centered_difference(c, axis);
        for (o, v) in out.values_mut().iter_mut().zip(d.values()) {
            *o += v;
        }
    }
    out
}
