//! Banded linear algebra: Thomas sweeps, banded LU with partial pivoting,
//! and a symmetric banded LDL^T used for inertia counts.

use crate::error::{Error, Result};

/// Solve a tridiagonal system with sub-diagonal `a` (a[0] unused), diagonal `b`
/// and super-diagonal `c` (c[n-1] unused).
pub fn thomas_solve(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    if a.len() != n || c.len() != n || d.len() != n {
        return Err(Error::Shape(format!("tridiagonal system of size {n}")));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    if b[0] == 0.0 {
        return Err(Error::Singular(0));
    }
    cp[0] = c[0] / b[0];
    dp[0] = d[0] / b[0];
    for i in 1..n {
        let denom = b[i] - a[i] * cp[i - 1];
        if denom == 0.0 {
            return Err(Error::Singular(i));
        }
        cp[i] = c[i] / denom;
        dp[i] = (d[i] - a[i] * dp[i - 1]) / denom;
    }
    let mut x = dp;
    for i in (0..n - 1).rev() {
        x[i] -= cp[i] * x[i + 1];
    }
    Ok(x)
}

/// Square band matrix with `kl` sub- and `ku` super-diagonals, row-major band storage.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        BandMatrix { n, kl, ku, data: vec![0.0; n * (kl + ku + 1)] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kl(&self) -> usize {
        self.kl
    }

    pub fn ku(&self) -> usize {
        self.ku
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        if j + self.kl < i || j > i + self.ku {
            None
        } else {
            Some(i * (self.kl + self.ku + 1) + j + self.kl - i)
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    /// Panics when (i, j) lies outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j).expect("entry outside band");
        self.data[s] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j).expect("entry outside band");
        self.data[s] += v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        let w = self.kl + self.ku + 1;
        for (i, yi) in y.iter_mut().enumerate() {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            let row = &self.data[i * w..(i + 1) * w];
            let mut s = 0.0;
            for j in lo..=hi {
                s += row[j + self.kl - i] * x[j];
            }
            *yi = s;
        }
        y
    }

    /// Returns `alpha * I + beta * self`.
    pub fn shifted(&self, alpha: f64, beta: f64) -> BandMatrix {
        let mut out = self.clone();
        for v in out.data.iter_mut() {
            *v *= beta;
        }
        for i in 0..self.n {
            out.add(i, i, alpha);
        }
        out
    }

    pub fn factor(&self) -> Result<BandLu> {
        BandLu::new(self)
    }
}

/// LU factors of a band matrix with row pivoting. Each row stores the window of
/// columns `[i - kl, i + kl + ku]` so that pivoting fill stays in place.
#[derive(Clone, Debug)]
pub struct BandLu {
    n: usize,
    kl: usize,
    width: usize,
    u: Vec<f64>,
    l: Vec<f64>,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn new(a: &BandMatrix) -> Result<Self> {
        let (n, kl, ku) = (a.n, a.kl, a.ku);
        let width = 2 * kl + ku + 1;
        let mut u = vec![0.0; n * width];
        for i in 0..n {
            let lo = i.saturating_sub(kl);
            let hi = (i + ku).min(n.saturating_sub(1));
            for j in lo..=hi {
                u[i * width + j + kl - i] = a.get(i, j);
            }
        }
        let mut l = vec![0.0; n * kl.max(1)];
        let mut piv = vec![0; n];
        // column j of row i sits at u[i*width + j + kl - i]
        let idx = |i: usize, j: usize| i * width + j + kl - i;
        let scale = a.data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = u[idx(k, k)].abs();
            for r in k + 1..=last {
                let v = u[idx(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best <= scale * 1e-300 {
                return Err(Error::Singular(k));
            }
            piv[k] = p;
            let cmax = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=cmax {
                    u.swap(idx(k, j), idx(p, j));
                }
            }
            let pivot = u[idx(k, k)];
            for r in k + 1..=last {
                let m = u[idx(r, k)] / pivot;
                l[k * kl.max(1) + (r - k - 1)] = m;
                u[idx(r, k)] = 0.0;
                if m != 0.0 {
                    for j in k + 1..=cmax {
                        u[idx(r, j)] -= m * u[idx(k, j)];
                    }
                }
            }
        }
        Ok(BandLu { n, kl, width, u, l, piv })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, kl, width) = (self.n, self.kl, self.width);
        let ku_total = width - 1 - kl;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                let last = (k + kl).min(n - 1);
                for r in k + 1..=last {
                    b[r] -= self.l[k * kl.max(1) + (r - k - 1)] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let row = &self.u[k * width..(k + 1) * width];
            let cmax = (k + ku_total).min(n - 1);
            let mut s = b[k];
            for j in k + 1..=cmax {
                s -= row[j + kl - k] * b[j];
            }
            b[k] = s / row[kl];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Solve `a x = b` with `sweeps` rounds of iterative refinement.
pub fn solve_refined(a: &BandMatrix, lu: &BandLu, b: &[f64], sweeps: usize) -> Vec<f64> {
    let mut x = lu.solve(b);
    for _ in 0..sweeps {
        let ax = a.matvec(&x);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        lu.solve_in_place(&mut r);
        for (xi, ri) in x.iter_mut().zip(&r) {
            *xi += ri;
        }
    }
    x
}

/// LDL^T of a symmetric band matrix (half-bandwidth `p`) without pivoting.
/// Only the lower band of the input is read.
#[derive(Clone, Debug)]
pub struct SymBandLdl {
    n: usize,
    p: usize,
    l: Vec<f64>,
    d: Vec<f64>,
}

impl SymBandLdl {
    /// Factor `a - shift * I`. Exactly zero pivots are nudged by a relative epsilon
    /// so that the inertia count stays defined.
    pub fn new(a: &BandMatrix, shift: f64) -> Self {
        let n = a.n;
        let p = a.kl;
        let mut l = vec![0.0; n * p.max(1)];
        let mut d = vec![0.0; n];
        let lidx = |i: usize, j: usize| i * p.max(1) + (j + p - i);
        for j in 0..n {
            let k0 = j.saturating_sub(p);
            let mut dj = a.get(j, j) - shift;
            for k in k0..j {
                let ljk = l[lidx(j, k)];
                dj -= ljk * ljk * d[k];
            }
            if dj == 0.0 {
                dj = f64::EPSILON * (a.get(j, j).abs() + shift.abs()).max(1.0);
            }
            d[j] = dj;
            for i in j + 1..=(j + p).min(n - 1) {
                let k0i = i.saturating_sub(p).max(k0);
                let mut s = a.get(i, j);
                for k in k0i..j {
                    s -= l[lidx(i, k)] * l[lidx(j, k)] * d[k];
                }
                l[lidx(i, j)] = s / dj;
            }
        }
        SymBandLdl { n, p, l, d }
    }

    pub fn negative_count(&self) -> usize {
        self.d.iter().filter(|v| **v < 0.0).count()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, p) = (self.n, self.p);
        let lidx = |i: usize, j: usize| i * p.max(1) + (j + p - i);
        let mut x = b.to_vec();
        for i in 0..n {
            let mut s = x[i];
            for k in i.saturating_sub(p)..i {
                s -= self.l[lidx(i, k)] * x[k];
            }
            x[i] = s;
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for r in i + 1..=(i + p).min(n.saturating_sub(1)) {
                s -= self.l[lidx(r, i)] * x[r];
            }
            x[i] = s;
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_mul(a: &BandMatrix, x: &[f64]) -> Vec<f64> {
        (0..a.n()).map(|i| (0..a.n()).map(|j| a.get(i, j) * x[j]).sum()).collect()
    }

    #[test]
    fn thomas_matches_known_solution() {
        let a = vec![0.0, -1.0, -1.0];
        let b = vec![2.0, 2.0, 2.0];
        let c = vec![-1.0, -1.0, 0.0];
        let x = thomas_solve(&a, &b, &c, &[1.0, 0.0, 1.0]).unwrap();
        for xi in x {
            assert!((xi - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn band_lu_needs_pivoting() {
        // zero leading diagonal forces a row swap
        let mut a = BandMatrix::zeros(5, 2, 1);
        let vals = [
            (0, 0, 0.0), (0, 1, 1.0), (1, 0, 2.0), (1, 1, 1.0), (1, 2, 3.0),
            (2, 0, 1.0), (2, 1, -1.0), (2, 2, 4.0), (2, 3, 1.0), (3, 1, 5.0),
            (3, 2, 2.0), (3, 3, -2.0), (3, 4, 1.0), (4, 2, 1.0), (4, 3, 1.0), (4, 4, 3.0),
        ];
        for (i, j, v) in vals {
            a.set(i, j, v);
        }
        let x_true = [1.0, -2.0, 0.5, 3.0, -1.0];
        let b = dense_mul(&a, &x_true);
        let x = a.factor().unwrap().solve(&b);
        for (xi, ti) in x.iter().zip(x_true) {
            assert!((xi - ti).abs() < 1e-12, "{xi} vs {ti}");
        }
    }

    #[test]
    fn ldl_inertia_of_diagonal() {
        let mut a = BandMatrix::zeros(4, 1, 1);
        for (i, v) in [3.0, -1.0, 2.0, -5.0].into_iter().enumerate() {
            a.set(i, i, v);
        }
        assert_eq!(SymBandLdl::new(&a, 0.0).negative_count(), 2);
        assert_eq!(SymBandLdl::new(&a, 2.5).negative_count(), 3);
        assert_eq!(SymBandLdl::new(&a, -6.0).negative_count(), 0);
    }
}
