//! Spectrum of the linearization about the wave in the weighted space.
//!
//! With `M` the lattice masses, `M (L_c + f_u)` is symmetric, so
//! `S = M^{1/2} A M^{-1/2}`, `A = -(L_c + f_u(ū))`, is a symmetric band matrix
//! with the same spectrum as `A` in the weighted geometry.

use crate::banded::{BandMatrix, SymBandLdl};
use crate::error::{Error, Result};
use crate::reaction::{max_abs_fu, ReactionModel};
use crate::wave::{assemble_linearization, WaveSolution};
use crate::weighted::{partial_z_high, LatticeWeights};

#[derive(Clone, Debug)]
pub struct GapResult {
    pub lambda0: f64,
    pub lambda0_residual: f64,
    /// Weighted cosine between the `lambda0` eigenfunction and `ū_z`.
    pub alignment: f64,
    /// The gap K.
    pub k: f64,
    /// Rayleigh quotient of the constrained eigenvector.
    pub k_rayleigh: f64,
    pub k_residual: f64,
    /// `|<w, ū_z>| / (‖w‖ ‖ū_z‖)` for the constrained eigenvector.
    pub constraint_residual: f64,
    /// `‖A ū_z‖ / ‖ū_z‖`, weighted.
    pub zero_mode_residual: f64,
    /// `max |f_u|`, the scale for `lambda0`.
    pub scale: f64,
    pub inverse_iterations: usize,
}

/// Symmetrized operator together with the square roots of the masses.
pub struct SymmetrizedOperator {
    pub s: BandMatrix,
    pub sqrt_mass: Vec<f64>,
    /// `M^{1/2} ū_z` on the unknowns, unnormalized.
    pub q: Vec<f64>,
    /// `A ū_z` in the weighted norm divided by `‖ū_z‖`.
    pub zero_mode_residual: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn symmetrize(ws: &WaveSolution, model: &dyn ReactionModel) -> Result<SymmetrizedOperator> {
    let g = ws.grid();
    let x = ws.u_bar.gather_unknowns();
    let a = assemble_linearization(g, model, ws.c_dag, &x);
    let masses = LatticeWeights::new(g, ws.c_dag, 0.0)?.unknown_masses(g);
    let r: Vec<f64> = masses.iter().map(|m| m.sqrt()).collect();
    let n = a.n();
    let p = a.kl();
    let mut s = BandMatrix::zeros(n, p, p);
    for i in 0..n {
        for j in i.saturating_sub(p)..=(i + p).min(n - 1) {
            let sij = -a.get(i, j) * r[i] / r[j];
            let sji = -a.get(j, i) * r[j] / r[i];
            s.set(i, j, 0.5 * (sij + sji));
        }
    }
    let uz = partial_z_high(&ws.u_bar).gather_unknowns();
    let au = a.matvec(&uz);
    let num: f64 = au.iter().zip(&masses).map(|(v, m)| m * v * v).sum::<f64>().sqrt();
    let den: f64 = uz.iter().zip(&masses).map(|(v, m)| m * v * v).sum::<f64>().sqrt();
    let q: Vec<f64> = uz.iter().zip(&r).map(|(v, ri)| v * ri).collect();
    Ok(SymmetrizedOperator { s, sqrt_mass: r, q, zero_mode_residual: num / den })
}

/// Number of eigenvalues below `sigma` of `S` compressed to the orthogonal
/// complement of `q`, from the inertia of the bordered matrix.
pub fn constrained_count(s: &BandMatrix, q: &[f64], sigma: f64) -> usize {
    let ldl = SymBandLdl::new(s, sigma);
    let t = dot(q, &ldl.solve(q));
    (ldl.negative_count() + usize::from(t > 0.0)).saturating_sub(1)
}

fn gershgorin(s: &BandMatrix) -> (f64, f64) {
    let n = s.n();
    let p = s.kl();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r: f64 = (i.saturating_sub(p)..=(i + p).min(n - 1)).filter(|&j| j != i).map(|j| s.get(i, j).abs()).sum();
        lo = lo.min(s.get(i, i) - r);
        hi = hi.max(s.get(i, i) + r);
    }
    (lo, hi)
}

/// `lambda0` by shifted inverse iteration and the gap `K` by inertia bisection
/// on the constrained problem.
pub fn spectral_gap(ws: &WaveSolution, model: &dyn ReactionModel) -> Result<GapResult> {
    let scale = max_abs_fu(model, ws.grid()).max(f64::MIN_POSITIVE);
    let op = symmetrize(ws, model)?;
    let s = &op.s;
    let n = s.n();
    let qn = norm(&op.q);
    if !(qn > 0.0) {
        return Err(Error::Invalid("profile has no axial derivative".into()));
    }
    let q: Vec<f64> = op.q.iter().map(|v| v / qn).collect();

    let shift = -1e-4 * scale;
    let lu = s.shifted(-shift, 1.0).factor()?;
    let mut x = q.clone();
    let mut lambda0 = f64::NAN;
    let mut res = f64::INFINITY;
    let mut iters = 0;
    while iters < 200 {
        iters += 1;
        let y = lu.solve(&x);
        let yn = norm(&y);
        x = y.iter().map(|v| v / yn).collect();
        let sx = s.matvec(&x);
        lambda0 = dot(&x, &sx);
        res = norm(&sx.iter().zip(&x).map(|(a, b)| a - lambda0 * b).collect::<Vec<_>>());
        if res <= 1e-12 * scale {
            break;
        }
    }
    if res > 1e-8 * scale {
        return Err(Error::NoConvergence(format!("inverse iteration for lambda0: residual {res:e}")));
    }
    let alignment = dot(&x, &q).abs();

    let (_, g_hi) = gershgorin(s);
    let mut lo = lambda0 - res - 1e-12 * scale;
    if constrained_count(s, &q, lo) != 0 {
        return Err(Error::Invalid("constrained spectrum lies below lambda0".into()));
    }
    let mut hi = g_hi + scale;
    for _ in 0..200 {
        if hi - lo <= 1e-13 * scale.max(hi.abs()) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if constrained_count(s, &q, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let k = 0.5 * (lo + hi);

    // Constrained eigenvector: (S - K) w is parallel to q.
    let luk = s.shifted(-k, 1.0).factor()?;
    let mut w = luk.solve(&q);
    let wq = dot(&w, &q);
    for (wi, qi) in w.iter_mut().zip(&q) {
        *wi -= wq * qi;
    }
    let wn = norm(&w);
    for wi in w.iter_mut() {
        *wi /= wn;
    }
    let sw = s.matvec(&w);
    let k_rayleigh = dot(&w, &sw);
    let psw = dot(&sw, &q);
    let k_residual = norm(&(0..n).map(|i| sw[i] - psw * q[i] - k_rayleigh * w[i]).collect::<Vec<_>>());
    let constraint_residual = dot(&w, &q).abs();
    Ok(GapResult {
        lambda0,
        lambda0_residual: res,
        alignment,
        k,
        k_rayleigh,
        k_residual,
        constraint_residual,
        zero_mode_residual: op.zero_mode_residual,
        scale,
        inverse_iterations: iters,
    })
}
