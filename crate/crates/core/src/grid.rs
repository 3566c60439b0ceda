//! Truncated cylinder grids, grid functions and the discrete linear operator.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::banded::BandMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bc {
    Dirichlet,
    Neumann,
}

impl FromStr for Bc {
    type Err = Error;
    fn from_str(s: &str) -> Result<Bc> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dirichlet" => Ok(Bc::Dirichlet),
            "neumann" => Ok(Bc::Neumann),
            other => Err(Error::Grid(format!("unknown boundary tag `{other}`"))),
        }
    }
}

impl fmt::Display for Bc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Bc::Dirichlet => "dirichlet",
            Bc::Neumann => "neumann",
        })
    }
}

/// Raw grid parameters as they appear in a config file.
#[derive(Clone, Debug, PartialEq)]
pub struct GridConfig {
    pub n_y: usize,
    pub n_z: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub bc_left: String,
    pub bc_right: String,
}

impl GridConfig {
    /// Pure axial grid with `n_z` points on `[z_min, z_max]`.
    pub fn one_d(n_z: usize, z_min: f64, z_max: f64) -> Self {
        GridConfig {
            n_y: 1,
            n_z,
            y_min: 0.0,
            y_max: 1.0,
            z_min,
            z_max,
            bc_left: "neumann".into(),
            bc_right: "neumann".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CylinderGrid {
    pub n_y: usize,
    pub n_z: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub bc_left: Bc,
    pub bc_right: Bc,
    pub dy: f64,
    pub dz: f64,
}

pub fn build_grid(config: &GridConfig) -> Result<Arc<CylinderGrid>> {
    let bc_left: Bc = config.bc_left.parse()?;
    let bc_right: Bc = config.bc_right.parse()?;
    if config.n_z < 16 {
        return Err(Error::Grid(format!("axial resolution too small: n_z = {} < 16", config.n_z)));
    }
    if config.n_y == 0 {
        return Err(Error::Grid("n_y must be at least 1".into()));
    }
    if !(config.z_max - config.z_min > 0.0) || !config.z_min.is_finite() || !config.z_max.is_finite() {
        return Err(Error::Grid("axial window length must be positive".into()));
    }
    if config.n_y == 1 {
        if bc_left != Bc::Neumann || bc_right != Bc::Neumann {
            return Err(Error::Grid("one-dimensional mode requires neumann tags on both ends".into()));
        }
    } else if !(config.y_max - config.y_min > 0.0) || !config.y_min.is_finite() || !config.y_max.is_finite() {
        return Err(Error::Grid("cross-section length must be positive".into()));
    } else if config.n_y < 3 {
        return Err(Error::Grid("cross-section needs at least 3 points".into()));
    }
    let dz = (config.z_max - config.z_min) / (config.n_z - 1) as f64;
    let dy = if config.n_y > 1 { (config.y_max - config.y_min) / (config.n_y - 1) as f64 } else { 0.0 };
    Ok(Arc::new(CylinderGrid {
        n_y: config.n_y,
        n_z: config.n_z,
        y_min: config.y_min,
        y_max: config.y_max,
        z_min: config.z_min,
        z_max: config.z_max,
        bc_left,
        bc_right,
        dy,
        dz,
    }))
}

impl CylinderGrid {
    pub fn is_1d(&self) -> bool {
        self.n_y == 1
    }

    pub fn y(&self, j: usize) -> f64 {
        self.y_min + j as f64 * self.dy
    }

    pub fn z(&self, k: usize) -> f64 {
        self.z_min + k as f64 * self.dz
    }

    pub fn len(&self) -> usize {
        self.n_y * self.n_z
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cross-section indices that carry unknowns (Dirichlet end nodes excluded).
    pub fn active_y(&self) -> std::ops::Range<usize> {
        if self.is_1d() {
            return 0..1;
        }
        let j0 = usize::from(self.bc_left == Bc::Dirichlet);
        let j1 = if self.bc_right == Bc::Dirichlet { self.n_y - 1 } else { self.n_y };
        j0..j1
    }

    pub fn n_active_y(&self) -> usize {
        self.active_y().len()
    }

    /// Axial unknowns: every column except the Dirichlet column at z_max.
    pub fn n_active_z(&self) -> usize {
        self.n_z - 1
    }

    pub fn n_unknowns(&self) -> usize {
        self.n_active_y() * self.n_active_z()
    }

    pub fn is_fixed(&self, j: usize, k: usize) -> bool {
        k == self.n_z - 1 || !self.active_y().contains(&j)
    }

    /// Trapezoid weights across the section; `[1]` in one-dimensional mode.
    pub fn y_weights(&self) -> Vec<f64> {
        if self.is_1d() {
            return vec![1.0];
        }
        let mut w = vec![self.dy; self.n_y];
        w[0] *= 0.5;
        w[self.n_y - 1] *= 0.5;
        w
    }

    /// Trapezoid weights along the axis.
    pub fn z_weights(&self) -> Vec<f64> {
        let mut w = vec![self.dz; self.n_z];
        w[0] *= 0.5;
        w[self.n_z - 1] *= 0.5;
        w
    }

    pub fn section_measure(&self) -> f64 {
        self.y_weights().iter().sum()
    }

    /// Same grid with axial coordinates moved by `-shift`.
    pub fn shifted_window(&self, shift: f64) -> CylinderGrid {
        let mut g = self.clone();
        g.z_min -= shift;
        g.z_max -= shift;
        g
    }

    /// Cross-section stiffness: symmetric tridiagonal matrix on active nodes with
    /// `(K v)_j = mu_j * (-D_yy v)_j`. Returned as (diag, off) with `off[i]`
    /// coupling active nodes i and i+1.
    pub fn y_stiffness(&self) -> (Vec<f64>, Vec<f64>) {
        let na = self.n_active_y();
        let mut diag = vec![0.0; na];
        let mut off = vec![0.0; na.saturating_sub(1)];
        if self.is_1d() {
            return (diag, off);
        }
        let j0 = self.active_y().start;
        let g = 1.0 / self.dy;
        for e in 0..self.n_y - 1 {
            let (a, b) = (e, e + 1);
            let ia = self.active_y().contains(&a).then(|| a - j0);
            let ib = self.active_y().contains(&b).then(|| b - j0);
            if let Some(i) = ia {
                diag[i] += g;
            }
            if let Some(i) = ib {
                diag[i] += g;
            }
            if let (Some(i), Some(_)) = (ia, ib) {
                off[i] -= g;
            }
        }
        (diag, off)
    }

    /// Band index of unknown (j, k): cross-section index runs fastest.
    #[inline]
    pub fn unknown_index(&self, j: usize, k: usize) -> usize {
        k * self.n_active_y() + (j - self.active_y().start)
    }

    /// The linear operator `D_yy + D_zz + c D_z` on the unknowns as a band matrix
    /// with half-bandwidth `n_active_y`.
    pub fn assemble_operator(&self, c: f64) -> BandMatrix {
        let na = self.n_active_y();
        let nz = self.n_active_z();
        let mut m = BandMatrix::zeros(na * nz, na, na);
        let (kd, ko) = self.y_stiffness();
        let mu = self.y_weights();
        let j0 = self.active_y().start;
        let h2 = self.dz * self.dz;
        let x = 0.5 * c * self.dz;
        for k in 0..nz {
            for ia in 0..na {
                let row = k * na + ia;
                let muj = mu[ia + j0];
                m.add(row, row, -kd[ia] / muj);
                if ia > 0 {
                    m.add(row, row - 1, -ko[ia - 1] / muj);
                }
                if ia + 1 < na {
                    m.add(row, row + 1, -ko[ia] / muj);
                }
                m.add(row, row, -2.0 / h2);
                if k == 0 {
                    m.add(row, row + na, 2.0 / h2);
                } else {
                    m.add(row, row - na, (1.0 - x) / h2);
                    if k + 1 < nz {
                        m.add(row, row + na, (1.0 + x) / h2);
                    }
                }
            }
        }
        m
    }

    pub fn descriptor(&self) -> String {
        format!(
            "n_y={} n_z={} y=[{}, {}] z=[{}, {}] bc={}/{}",
            self.n_y, self.n_z, self.y_min, self.y_max, self.z_min, self.z_max, self.bc_left, self.bc_right
        )
    }
}

/// Grid function on the cylinder, stored column by column (cross-section index fastest).
#[derive(Clone, Debug)]
pub struct Field {
    grid: Arc<CylinderGrid>,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Arc<CylinderGrid>) -> Self {
        Field { grid: grid.clone(), values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: &Arc<CylinderGrid>, v: f64) -> Self {
        Field { grid: grid.clone(), values: vec![v; grid.len()] }
    }

    pub fn from_fn(grid: &Arc<CylinderGrid>, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for k in 0..grid.n_z {
            let z = grid.z(k);
            for j in 0..grid.n_y {
                values.push(f(grid.y(j), z));
            }
        }
        Field { grid: grid.clone(), values }
    }

    pub fn from_values(grid: &Arc<CylinderGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!("{} values for a grid of {}", values.len(), grid.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field construction".into()));
        }
        Ok(Field { grid: grid.clone(), values })
    }

    pub fn grid(&self) -> &Arc<CylinderGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.values[k * self.grid.n_y + j]
    }

    #[inline]
    pub fn set(&mut self, j: usize, k: usize, v: f64) {
        let n_y = self.grid.n_y;
        self.values[k * n_y + j] = v;
    }

    pub fn column(&self, k: usize) -> &[f64] {
        let n_y = self.grid.n_y;
        &self.values[k * n_y..(k + 1) * n_y]
    }

    /// Axial row j as a vector.
    pub fn row(&self, j: usize) -> Vec<f64> {
        (0..self.grid.n_z).map(|k| self.get(j, k)).collect()
    }

    pub fn set_row(&mut self, j: usize, row: &[f64]) {
        for (k, v) in row.iter().enumerate() {
            self.set(j, k, *v);
        }
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::Shape("fields live on different grids".into()))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { grid: self.grid.clone(), values: self.values.iter().map(|v| f(*v)).collect() }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.check_same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| f(*a, *b)).collect();
        Ok(Field { grid: self.grid.clone(), values })
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Column-wise sup over the section, `max_j |u(j, k)|`.
    pub fn section_sup(&self) -> Vec<f64> {
        (0..self.grid.n_z).map(|k| self.column(k).iter().fold(0.0f64, |m, v| m.max(v.abs()))).collect()
    }

    /// Same values on another grid of identical shape.
    pub fn with_grid(&self, grid: &Arc<CylinderGrid>) -> Result<Field> {
        if grid.n_y != self.grid.n_y || grid.n_z != self.grid.n_z {
            return Err(Error::Shape("grid shapes differ".into()));
        }
        Ok(Field { grid: grid.clone(), values: self.values.clone() })
    }

    /// Values at the unknowns, in band order.
    pub fn gather_unknowns(&self) -> Vec<f64> {
        let g = &self.grid;
        let mut out = Vec::with_capacity(g.n_unknowns());
        for k in 0..g.n_active_z() {
            for j in g.active_y() {
                out.push(self.get(j, k));
            }
        }
        out
    }

    /// Field holding `x` at the unknowns and zero at fixed nodes.
    pub fn scatter_unknowns(grid: &Arc<CylinderGrid>, x: &[f64]) -> Field {
        let mut f = Field::zeros(grid);
        let na = grid.n_active_y();
        let j0 = grid.active_y().start;
        for k in 0..grid.n_active_z() {
            for ia in 0..na {
                f.set(j0 + ia, k, x[k * na + ia]);
            }
        }
        f
    }

    /// Shift data by `cells` columns toward larger z (negative: toward smaller z),
    /// padding with the edge column.
    pub fn shift_cells(&self, cells: isize) -> Field {
        let g = &self.grid;
        let nz = g.n_z as isize;
        let mut out = Field::zeros(&self.grid);
        for k in 0..nz {
            let src = (k - cells).clamp(0, nz - 1) as usize;
            for j in 0..g.n_y {
                out.set(j, k as usize, self.get(j, src));
            }
        }
        out
    }
}

/// Function on the cross-section.
#[derive(Clone, Debug)]
pub struct CrossSectionField {
    grid: Arc<CylinderGrid>,
    values: Vec<f64>,
}

impl CrossSectionField {
    /// Dirichlet end values are forced to zero.
    pub fn from_values(grid: &Arc<CylinderGrid>, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_y {
            return Err(Error::Shape(format!("{} values for a section of {}", values.len(), grid.n_y)));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("cross-section field".into()));
        }
        if !grid.is_1d() {
            if grid.bc_left == Bc::Dirichlet {
                values[0] = 0.0;
            }
            if grid.bc_right == Bc::Dirichlet {
                values[grid.n_y - 1] = 0.0;
            }
        }
        Ok(CrossSectionField { grid: grid.clone(), values })
    }

    pub fn from_fn(grid: &Arc<CylinderGrid>, f: impl Fn(f64) -> f64) -> Self {
        let v = (0..grid.n_y).map(|j| f(grid.y(j))).collect();
        CrossSectionField::from_values(grid, v).expect("finite section values")
    }

    pub fn constant(grid: &Arc<CylinderGrid>, v: f64) -> Self {
        CrossSectionField::from_fn(grid, |_| v)
    }

    pub fn grid(&self) -> &Arc<CylinderGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn active_values(&self) -> Vec<f64> {
        self.values[self.grid.active_y()].to_vec()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// L2 norm with trapezoid weights across the section.
    pub fn l2_norm(&self) -> f64 {
        self.grid.y_weights().iter().zip(&self.values).map(|(w, v)| w * v * v).sum::<f64>().sqrt()
    }
}

/// Force Dirichlet nodes to zero. Neumann nodes are left untouched: their
/// condition lives in the ghost reflection used by the stencils.
pub fn apply_boundary(u: &Field) -> Field {
    let g = u.grid().clone();
    let mut out = u.clone();
    for k in 0..g.n_z {
        for j in 0..g.n_y {
            if g.is_fixed(j, k) {
                out.set(j, k, 0.0);
            }
        }
    }
    out
}

/// Ghost value beyond a Neumann end of a section column.
pub fn neumann_ghost(column: &[f64], left: bool) -> f64 {
    let n = column.len();
    if n < 2 {
        column[0]
    } else if left {
        column[1]
    } else {
        column[n - 2]
    }
}

/// Centered normal derivative at each section end using the ghost value.
pub fn end_normal_derivatives(u: &Field, k: usize) -> (f64, f64) {
    let g = u.grid();
    let col = u.column(k);
    let n = col.len();
    if n < 2 {
        return (0.0, 0.0);
    }
    let left = (col[1] - neumann_ghost(col, true)) / (2.0 * g.dy);
    let right = (neumann_ghost(col, false) - col[n - 2]) / (2.0 * g.dy);
    (left, right)
}

/// Discrete `Δu + c u_z`, zero at fixed nodes.
pub fn laplacian_advection(u: &Field, c: f64) -> Field {
    let g = u.grid().clone();
    let mut out = Field::zeros(&g);
    let (h2z, x) = (g.dz * g.dz, 0.5 * c * g.dz);
    let h2y = g.dy * g.dy;
    for k in 0..g.n_active_z() {
        for j in g.active_y() {
            let uc = u.get(j, k);
            let zpart = if k == 0 {
                2.0 * (u.get(j, 1) - uc) / h2z
            } else {
                ((1.0 - x) * u.get(j, k - 1) - 2.0 * uc + (1.0 + x) * u.get(j, k + 1)) / h2z
            };
            let ypart = if g.is_1d() {
                0.0
            } else {
                let lo = if j == 0 { u.get(1, k) } else { u.get(j - 1, k) };
                let hi = if j == g.n_y - 1 { u.get(g.n_y - 2, k) } else { u.get(j + 1, k) };
                (lo - 2.0 * uc + hi) / h2y
            };
            out.set(j, k, zpart + ypart);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacings() {
        let g = build_grid(&GridConfig::one_d(401, -20.0, 20.0)).unwrap();
        assert!((g.dz - 0.1).abs() < 1e-15);
        let mut c = GridConfig::one_d(64, 0.0, 1.0);
        c.n_y = 33;
        let g = build_grid(&c).unwrap();
        assert_eq!(g.dy, 1.0 / 32.0);
    }

    #[test]
    fn rejects_bad_configs() {
        let err = build_grid(&GridConfig::one_d(8, 0.0, 1.0)).unwrap_err();
        assert!(err.to_string().contains("axial resolution too small"));
        let mut c = GridConfig::one_d(32, 0.0, 1.0);
        c.bc_left = "robin".into();
        assert!(build_grid(&c).is_err());
        let c = GridConfig::one_d(32, 1.0, 1.0);
        assert!(build_grid(&c).is_err());
    }

    #[test]
    fn operator_matches_stencil() {
        let mut c = GridConfig::one_d(20, -1.0, 1.0);
        c.n_y = 6;
        c.bc_left = "dirichlet".into();
        let g = build_grid(&c).unwrap();
        let u = apply_boundary(&Field::from_fn(&g, |y, z| (y * 3.0).sin() + z * z * y));
        let direct = laplacian_advection(&u, 0.7);
        let band = g.assemble_operator(0.7).matvec(&u.gather_unknowns());
        let via = Field::scatter_unknowns(&g, &band);
        for (a, b) in direct.values().iter().zip(via.values()) {
            assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()), "{a} vs {b}");
        }
    }
}
