//! Exponentially weighted quadrature, norms and the axial translation T_R.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{CylinderGrid, Field};

/// Largest exponent allowed in a weight before the caller must re-reference.
pub const MAX_EXPONENT: f64 = 600.0;

/// Weight `e^{c (z - z_ref)}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightedMeasure {
    pub c: f64,
    pub z_ref: f64,
}

impl WeightedMeasure {
    pub fn new(c: f64, z_ref: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() || !z_ref.is_finite() {
            return Err(Error::Invalid(format!("weight rate must be positive, got {c}")));
        }
        Ok(WeightedMeasure { c, z_ref })
    }

    /// Factor mapping a norm taken with `self` to the same norm under `other`.
    pub fn conversion_factor(&self, other: &WeightedMeasure) -> f64 {
        (0.5 * self.c * (self.z_ref - other.z_ref)).exp()
    }

    /// Trapezoid axial weights times `e^{c(z - z_ref)}`.
    pub fn axial_weights(&self, grid: &CylinderGrid) -> Result<Vec<f64>> {
        let lo = self.c * (grid.z_min - self.z_ref);
        let hi = self.c * (grid.z_max - self.z_ref);
        let worst = lo.abs().max(hi.abs());
        if worst > MAX_EXPONENT {
            return Err(Error::WeightOverflow(worst));
        }
        let tz = grid.z_weights();
        Ok((0..grid.n_z).map(|k| tz[k] * (self.c * (grid.z(k) - self.z_ref)).exp()).collect())
    }
}

/// Node and edge weights under which the discrete operator `D_zz + c D_z`
/// is an exact gradient: `w_k = rho^k` with `rho = (1+x)/(1-x)`, `x = c dz/2`.
#[derive(Clone, Debug)]
pub struct LatticeWeights {
    pub x: f64,
    /// Lattice rate `(2/dz) atanh(x)`, equal to `c` up to `O(dz^2)`.
    pub c_h: f64,
    /// Node masses, length `n_z` (the last column is fixed and never used).
    pub node: Vec<f64>,
    /// Edge weights between columns k and k+1, length `n_z - 1`.
    pub edge: Vec<f64>,
}

impl LatticeWeights {
    pub fn new(grid: &CylinderGrid, c: f64, z_ref: f64) -> Result<Self> {
        let x = 0.5 * c * grid.dz;
        if !(x.abs() < 1.0) {
            return Err(Error::Invalid(format!("c dz / 2 = {x} must lie in (-1, 1)")));
        }
        let c_h = 2.0 * x.atanh() / grid.dz;
        let worst = (c_h * (grid.z_min - z_ref)).abs().max((c_h * (grid.z_max - z_ref)).abs());
        if worst > MAX_EXPONENT {
            return Err(Error::WeightOverflow(worst));
        }
        let w: Vec<f64> = (0..grid.n_z).map(|k| (c_h * (grid.z(k) - z_ref)).exp()).collect();
        let mut node = w.clone();
        node[0] *= 0.5 * (1.0 + x);
        let edge = w[..grid.n_z - 1].iter().map(|wk| wk * (1.0 + x)).collect();
        Ok(LatticeWeights { x, c_h, node, edge })
    }

    /// Full mass on the unknowns, `dz * node_k * mu_j`, in band order.
    pub fn unknown_masses(&self, grid: &CylinderGrid) -> Vec<f64> {
        let mu = grid.y_weights();
        let mut out = Vec::with_capacity(grid.n_unknowns());
        for k in 0..grid.n_active_z() {
            for j in grid.active_y() {
                out.push(grid.dz * self.node[k] * mu[j]);
            }
        }
        out
    }
}

fn check_pair(u: &Field, v: &Field) -> Result<()> {
    u.check_same_grid(v)
}

/// Symmetric bilinear trapezoid quadrature of `e^{c(z-z_ref)} u v`.
pub fn weighted_inner(u: &Field, v: &Field, m: &WeightedMeasure) -> Result<f64> {
    check_pair(u, v)?;
    let g = u.grid();
    let wz = m.axial_weights(g)?;
    let mu = g.y_weights();
    let mut s = 0.0;
    for (k, wk) in wz.iter().enumerate() {
        let mut col = 0.0;
        for (j, mj) in mu.iter().enumerate() {
            col += mj * u.get(j, k) * v.get(j, k);
        }
        s += wk * col;
    }
    Ok(s)
}

pub fn weighted_norm_l2(u: &Field, m: &WeightedMeasure) -> Result<f64> {
    Ok(weighted_inner(u, u, m)?.max(0.0).sqrt())
}

/// First derivative of samples with spacing `h`: centered in the interior,
/// one-sided second order at the ends.
pub fn diff1(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    match n {
        0 | 1 => vec![0.0; n],
        2 => vec![(v[1] - v[0]) / h; 2],
        _ => {
            let mut d = vec![0.0; n];
            d[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
            d[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h);
            for i in 1..n - 1 {
                d[i] = (v[i + 1] - v[i - 1]) / (2.0 * h);
            }
            d
        }
    }
}

/// Fourth-order centered first derivative, lower order near the ends.
pub fn diff1_high(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    let mut d = diff1(v, h);
    if n >= 5 {
        for i in 2..n - 2 {
            d[i] = (-v[i + 2] + 8.0 * v[i + 1] - 8.0 * v[i - 1] + v[i - 2]) / (12.0 * h);
        }
    }
    d
}

/// Second derivative: centered in the interior, one-sided second order at the ends.
pub fn diff2(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    let h2 = h * h;
    if n < 3 {
        return vec![0.0; n];
    }
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        d[i] = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / h2;
    }
    if n >= 4 {
        d[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h2;
        d[n - 1] = (2.0 * v[n - 1] - 5.0 * v[n - 2] + 4.0 * v[n - 3] - v[n - 4]) / h2;
    } else {
        d[0] = d[1];
        d[n - 1] = d[n - 2];
    }
    d
}

fn map_rows(u: &Field, f: impl Fn(&[f64]) -> Vec<f64>) -> Field {
    let g = u.grid();
    let mut out = Field::zeros(g);
    for j in 0..g.n_y {
        out.set_row(j, &f(&u.row(j)));
    }
    out
}

fn map_columns(u: &Field, f: impl Fn(&[f64]) -> Vec<f64>) -> Field {
    let g = u.grid();
    let mut out = Field::zeros(g);
    for k in 0..g.n_z {
        for (j, v) in f(u.column(k)).into_iter().enumerate() {
            out.set(j, k, v);
        }
    }
    out
}

pub fn partial_z(u: &Field) -> Field {
    let h = u.grid().dz;
    map_rows(u, |r| diff1(r, h))
}

pub fn partial_z_high(u: &Field) -> Field {
    let h = u.grid().dz;
    map_rows(u, |r| diff1_high(r, h))
}

pub fn partial_y(u: &Field) -> Field {
    if u.grid().is_1d() {
        return Field::zeros(u.grid());
    }
    let h = u.grid().dy;
    map_columns(u, |c| diff1(c, h))
}

pub fn weighted_norm_h1(u: &Field, m: &WeightedMeasure) -> Result<f64> {
    let l2 = weighted_inner(u, u, m)?;
    let uz = partial_z(u);
    let uy = partial_y(u);
    let s = l2 + weighted_inner(&uz, &uz, m)? + weighted_inner(&uy, &uy, m)?;
    Ok(s.max(0.0).sqrt())
}

pub fn weighted_norm_h2(u: &Field, m: &WeightedMeasure) -> Result<f64> {
    let g = u.grid();
    let uz = partial_z(u);
    let uzz = map_rows(u, |r| diff2(r, g.dz));
    let mut s = weighted_inner(u, u, m)? + weighted_inner(&uz, &uz, m)? + weighted_inner(&uzz, &uzz, m)?;
    if !g.is_1d() {
        let uy = partial_y(u);
        let uyy = map_columns(u, |c| diff2(c, g.dy));
        let uyz = partial_z(&uy);
        s += weighted_inner(&uy, &uy, m)? + weighted_inner(&uyy, &uyy, m)? + 2.0 * weighted_inner(&uyz, &uyz, m)?;
    }
    Ok(s.max(0.0).sqrt())
}

/// Monotone piecewise-cubic Hermite interpolant of equally spaced samples.
#[derive(Clone, Debug)]
pub struct MonotoneCubic {
    values: Vec<f64>,
    slopes: Vec<f64>,
    h: f64,
}

impl MonotoneCubic {
    pub fn new(values: &[f64], h: f64) -> Self {
        let n = values.len();
        let mut slopes = diff1_high(values, h);
        if n >= 2 {
            let secant: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]) / h).collect();
            // slopes at interior extrema and against the local trend are zeroed
            for i in 0..n {
                let left = if i > 0 { Some(secant[i - 1]) } else { None };
                let right = if i < n - 1 { Some(secant[i]) } else { None };
                match (left, right) {
                    (Some(a), Some(b)) if a * b <= 0.0 => slopes[i] = 0.0,
                    (Some(a), Some(_)) | (Some(a), None) | (None, Some(a)) if slopes[i] * a < 0.0 => {
                        slopes[i] = 0.0
                    }
                    _ => {}
                }
            }
            for (i, d) in secant.iter().enumerate() {
                if *d == 0.0 {
                    slopes[i] = 0.0;
                    slopes[i + 1] = 0.0;
                    continue;
                }
                let a = slopes[i] / d;
                let b = slopes[i + 1] / d;
                let r = a * a + b * b;
                if r > 9.0 {
                    let t = 3.0 / r.sqrt();
                    slopes[i] = t * a * d;
                    slopes[i + 1] = t * b * d;
                }
            }
        }
        MonotoneCubic { values: values.to_vec(), slopes, h }
    }

    /// Value and derivative at fractional index `s`; constant outside the data.
    #[inline]
    pub fn eval(&self, s: f64) -> (f64, f64) {
        let n = self.values.len();
        if n == 1 || s <= 0.0 {
            return (self.values[0], 0.0);
        }
        let last = (n - 1) as f64;
        if s >= last {
            return (self.values[n - 1], 0.0);
        }
        let i = (s.floor() as usize).min(n - 2);
        let t = s - i as f64;
        if t == 0.0 {
            return (self.values[i], self.slopes[i]);
        }
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (d0, d1) = (self.slopes[i] * self.h, self.slopes[i + 1] * self.h);
        let t2 = t * t;
        let t3 = t2 * t;
        let v = (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * d0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * d1;
        let dv = ((6.0 * t2 - 6.0 * t) * (y0 - y1) + (3.0 * t2 - 4.0 * t + 1.0) * d0 + (3.0 * t2 - 2.0 * t) * d1) / self.h;
        (v, dv)
    }
}

fn check_shift(grid: &CylinderGrid, r: f64) -> Result<()> {
    let half = 0.5 * (grid.z_max - grid.z_min);
    if !r.is_finite() || r.abs() >= half {
        return Err(Error::TranslateRange { shift: r, half });
    }
    Ok(())
}

/// Interpolants of every axial row, reusable across many shifts.
#[derive(Clone, Debug)]
pub struct RowInterpolants {
    grid: Arc<CylinderGrid>,
    rows: Vec<MonotoneCubic>,
}

impl RowInterpolants {
    pub fn new(u: &Field) -> Self {
        let g = u.grid().clone();
        let rows = (0..g.n_y).map(|j| MonotoneCubic::new(&u.row(j), g.dz)).collect();
        RowInterpolants { grid: g, rows }
    }

    pub fn grid(&self) -> &Arc<CylinderGrid> {
        &self.grid
    }

    /// `(T_R u, (T_R u)_z)` on the same grid.
    pub fn translate(&self, r: f64) -> Result<(Field, Field)> {
        check_shift(&self.grid, r)?;
        let g = &self.grid;
        let mut val = Field::zeros(g);
        let mut der = Field::zeros(g);
        let off = r / g.dz;
        for (j, row) in self.rows.iter().enumerate() {
            for k in 0..g.n_z {
                let (v, d) = row.eval(k as f64 - off);
                val.set(j, k, v);
                der.set(j, k, d);
            }
        }
        Ok((val, der))
    }
}

/// `T_R u (y, z) = u(y, z - R)` by monotone cubic interpolation along z.
pub fn translate(u: &Field, r: f64) -> Result<Field> {
    check_shift(u.grid(), r)?;
    if r == 0.0 {
        return Ok(u.clone());
    }
    Ok(RowInterpolants::new(u).translate(r)?.0)
}

pub fn translate_with_derivative(u: &Field, r: f64) -> Result<(Field, Field)> {
    RowInterpolants::new(u).translate(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridConfig};

    #[test]
    fn unit_field_norm_closed_form() {
        let mut c = GridConfig::one_d(2001, 0.0, 1.0);
        c.n_y = 11;
        let g = build_grid(&c).unwrap();
        let u = Field::constant(&g, 1.0);
        let n = weighted_norm_l2(&u, &WeightedMeasure::new(2.0, 0.0).unwrap()).unwrap();
        let exact = ((2f64.exp() - 1.0) / 2.0).sqrt();
        assert!((n - exact).abs() < 1e-6, "{n} vs {exact}");
    }

    #[test]
    fn overflow_guard() {
        let g = build_grid(&GridConfig::one_d(101, -10.0, 1000.0)).unwrap();
        let u = Field::constant(&g, 1.0);
        let err = weighted_norm_l2(&u, &WeightedMeasure::new(1.0, 0.0).unwrap()).unwrap_err();
        assert!(err.to_string().contains("re-reference weight"));
    }

    #[test]
    fn interpolant_reproduces_nodes() {
        let v: Vec<f64> = (0..20).map(|i| (i as f64 * 0.3).sin()).collect();
        let p = MonotoneCubic::new(&v, 0.1);
        for (i, vi) in v.iter().enumerate() {
            assert_eq!(p.eval(i as f64).0, *vi);
        }
    }
}
