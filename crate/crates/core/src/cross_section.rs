//! Cross-section energy E[v], its critical points and the principal eigenvalues
//! of the section linearization.

use std::sync::Arc;

use crate::banded::{BandMatrix, SymBandLdl};
use crate::error::{Error, Result};
use crate::evolution::{dt_max, energy_parts, Stepper};
use crate::grid::{CrossSectionField, CylinderGrid, Field};
use crate::reaction::{max_abs_fu, Model, ReactionModel};
use crate::weighted::LatticeWeights;

pub const NEWTON_TOL: f64 = 1e-10;
pub const EIGEN_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct EigenResult {
    pub value: f64,
    /// Normalized in the section L2 norm and positive.
    pub eigenfunction: CrossSectionField,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct CriticalPoint {
    pub v: CrossSectionField,
    pub energy: f64,
    pub gradient_norm: f64,
    /// Smallest eigenvalue of the linearization at v.
    pub hessian_floor: f64,
    /// Converged to zero although the seed was not zero.
    pub trivial: bool,
    pub flow_steps: usize,
    pub newton_iterations: usize,
}

/// `E[v] = ∫ (½ |v_y|² + V(v, y)) dy` with trapezoid weights and edge gradients.
pub fn energy_e(v: &CrossSectionField, model: &dyn ReactionModel) -> f64 {
    let g = v.grid();
    let mu = g.y_weights();
    let vals = v.values();
    let mut e: f64 = (0..g.n_y).map(|j| mu[j] * model.potential(vals[j], g.y(j))).sum();
    for j in 0..g.n_y.saturating_sub(1) {
        let d = (vals[j + 1] - vals[j]) / g.dy;
        e += 0.5 * g.dy * d * d;
    }
    e
}

/// `D_yy v + f(v, y)` on the active nodes.
fn section_residual(grid: &CylinderGrid, model: &dyn ReactionModel, v: &[f64]) -> Vec<f64> {
    let (kd, ko) = grid.y_stiffness();
    let mu = grid.y_weights();
    let j0 = grid.active_y().start;
    let n = v.len();
    (0..n)
        .map(|i| {
            let mut kv = kd[i] * v[i];
            if i > 0 {
                kv += ko[i - 1] * v[i - 1];
            }
            if i + 1 < n {
                kv += ko[i] * v[i + 1];
            }
            -kv / mu[i + j0] + model.f(v[i], grid.y(i + j0))
        })
        .collect()
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Symmetrized `-D_yy - f_u(v, y)` as a tridiagonal band matrix.
fn symmetric_section_operator(grid: &CylinderGrid, model: &dyn ReactionModel, v: &[f64]) -> BandMatrix {
    let (kd, ko) = grid.y_stiffness();
    let mu = grid.y_weights();
    let j0 = grid.active_y().start;
    let n = kd.len();
    let mut s = BandMatrix::zeros(n, 1, 1);
    for i in 0..n {
        s.set(i, i, kd[i] / mu[i + j0] - model.f_u(v[i], grid.y(i + j0)));
        if i + 1 < n {
            let off = ko[i] / (mu[i + j0] * mu[i + 1 + j0]).sqrt();
            s.set(i, i + 1, off);
            s.set(i + 1, i, off);
        }
    }
    s
}

/// Principal eigenpair of `-Δ_y - f_u(v, y)` under the section boundary tags.
/// Sturm bisection brackets the value, shifted inverse iteration gives the vector.
pub fn eigen_nu(model: &dyn ReactionModel, grid: &Arc<CylinderGrid>, linearize_at: &CrossSectionField) -> Result<EigenResult> {
    let v = linearize_at.active_values();
    let s = symmetric_section_operator(grid, model, &v);
    let n = s.n();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let r = (if i > 0 { s.get(i, i - 1).abs() } else { 0.0 }) + (if i + 1 < n { s.get(i, i + 1).abs() } else { 0.0 });
        lo = lo.min(s.get(i, i) - r);
        hi = hi.max(s.get(i, i) + r);
    }
    let scale = lo.abs().max(hi.abs()).max(1.0);
    lo -= 1e-12 * scale;
    hi += 1e-12 * scale;
    let mut iterations = 0;
    while hi - lo > 1e-15 * scale && iterations < 200 {
        let mid = 0.5 * (lo + hi);
        if SymBandLdl::new(&s, mid).negative_count() >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
        iterations += 1;
    }
    let sigma = lo - 1e-10 * scale;
    let lu = s.shifted(-sigma, 1.0).factor()?;
    let mut phi = vec![1.0 / (n as f64).sqrt(); n];
    let mut value = 0.5 * (lo + hi);
    let mut residual = f64::INFINITY;
    for _ in 0..100 {
        iterations += 1;
        let mut x = lu.solve(&phi);
        let nrm = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        for a in x.iter_mut() {
            *a /= nrm;
        }
        let sx = s.matvec(&x);
        value = x.iter().zip(&sx).map(|(a, b)| a * b).sum();
        residual = sx.iter().zip(&x).map(|(a, b)| (a - value * b).powi(2)).sum::<f64>().sqrt();
        phi = x;
        if residual <= 1e-14 * scale {
            break;
        }
    }
    if residual > EIGEN_TOL {
        return Err(Error::NoConvergence(format!("section eigenproblem residual {residual:e}")));
    }
    let mu = grid.y_weights();
    let j0 = grid.active_y().start;
    let sign = if phi.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    let mut psi = vec![0.0; grid.n_y];
    for i in 0..n {
        psi[i + j0] = sign * phi[i] / mu[i + j0].sqrt();
    }
    Ok(EigenResult { value, eigenfunction: CrossSectionField::from_values(grid, psi)?, iterations, residual })
}

/// Rayleigh quotient of a section function for `-Δ_y - f_u(v, y)`.
pub fn rayleigh_quotient(model: &dyn ReactionModel, linearize_at: &CrossSectionField, psi: &CrossSectionField) -> f64 {
    let g = psi.grid();
    let mu = g.y_weights();
    let p = psi.values();
    let v = linearize_at.values();
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..g.n_y {
        num -= mu[j] * model.f_u(v[j], g.y(j)) * p[j] * p[j];
        den += mu[j] * p[j] * p[j];
    }
    for j in 0..g.n_y.saturating_sub(1) {
        let d = (p[j + 1] - p[j]) / g.dy;
        num += g.dy * d * d;
    }
    num / den
}

/// Semi-implicit gradient flow of E; returns the final state and the energy after
/// every step.
pub fn section_gradient_flow(
    model: &dyn ReactionModel,
    grid: &Arc<CylinderGrid>,
    seed: &CrossSectionField,
    max_time: f64,
    stop_residual: f64,
) -> Result<(CrossSectionField, Vec<f64>)> {
    let dt = (0.5 / max_abs_fu(model, grid).max(1e-12)).min(10.0);
    let (kd, ko) = grid.y_stiffness();
    let mu = grid.y_weights();
    let j0 = grid.active_y().start;
    let n = kd.len();
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    let mut c = vec![0.0; n];
    for i in 0..n {
        b[i] = 1.0 + dt * kd[i] / mu[i + j0];
        if i > 0 {
            a[i] = dt * ko[i - 1] / mu[i + j0];
        }
        if i + 1 < n {
            c[i] = dt * ko[i] / mu[i + j0];
        }
    }
    let mut v = seed.active_values();
    let mut energies = vec![energy_e(seed, model)];
    let steps = (max_time / dt).ceil() as usize;
    for _ in 0..steps {
        if sup(&section_residual(grid, model, &v)) <= stop_residual {
            break;
        }
        let rhs: Vec<f64> = v.iter().enumerate().map(|(i, x)| x + dt * model.f(*x, grid.y(i + j0))).collect();
        v = crate::banded::thomas_solve(&a, &b, &c, &rhs)?;
        for (i, x) in v.iter_mut().enumerate() {
            let (lo, hi) = model.bounds(grid.y(i + j0));
            *x = x.clamp(lo, hi);
        }
        energies.push(energy_e(&embed(grid, &v)?, model));
    }
    Ok((embed(grid, &v)?, energies))
}

fn embed(grid: &Arc<CylinderGrid>, active: &[f64]) -> Result<CrossSectionField> {
    let mut full = vec![0.0; grid.n_y];
    let j0 = grid.active_y().start;
    full[j0..j0 + active.len()].copy_from_slice(active);
    CrossSectionField::from_values(grid, full)
}

/// Gradient flow into a basin, then damped Newton on `Δ_y v + f(v, y) = 0`.
pub fn find_critical_point(model: &dyn ReactionModel, grid: &Arc<CylinderGrid>, seed: &CrossSectionField) -> Result<CriticalPoint> {
    let seed_size = seed.sup_norm();
    let (flowed, energies) = section_gradient_flow(model, grid, seed, 400.0, 1e-6)?;
    let flow_steps = energies.len() - 1;
    let mut v = flowed.active_values();
    let j0 = grid.active_y().start;
    let n = v.len();
    let mut r = section_residual(grid, model, &v);
    let mut iters = 0;
    while sup(&r) > NEWTON_TOL {
        if iters >= 50 {
            return Err(Error::NoConvergence(format!("section Newton stalled at residual {:e}", sup(&r))));
        }
        iters += 1;
        let jac = symmetric_section_operator(grid, model, &v);
        let mu = grid.y_weights();
        // J = -M^{-1/2} S M^{1/2}; solve S y = M^{1/2} r, then step = M^{-1/2} y
        let rhs: Vec<f64> = (0..n).map(|i| r[i] * mu[i + j0].sqrt()).collect();
        let y = jac.factor()?.solve(&rhs);
        let step: Vec<f64> = (0..n).map(|i| y[i] / mu[i + j0].sqrt()).collect();
        let mut lambda = 1.0;
        let r0 = sup(&r);
        loop {
            let trial: Vec<f64> = v.iter().zip(&step).map(|(a, s)| a + lambda * s).collect();
            let rt = section_residual(grid, model, &trial);
            if sup(&rt) < r0 || lambda < 1e-4 {
                v = trial;
                r = rt;
                break;
            }
            lambda *= 0.5;
        }
    }
    let vf = embed(grid, &v)?;
    let eig = eigen_nu(model, grid, &vf)?;
    Ok(CriticalPoint {
        energy: energy_e(&vf, model),
        gradient_norm: sup(&r),
        hessian_floor: eig.value,
        trivial: seed_size > 1e-8 && vf.sup_norm() < 1e-8,
        v: vf,
        flow_steps,
        newton_iterations: iters,
    })
}

#[derive(Clone, Debug)]
pub struct H3Report {
    pub c_trial: f64,
    pub nu0: f64,
    pub dispersion_positive: bool,
    /// Smallest Φ_{c_trial} seen along the weighted gradient flow.
    pub best_phi: f64,
    pub found_nonpositive: bool,
    pub budget: f64,
}

/// Check `c² + 4ν₀ > 0` and search for a nonzero field with `Φ_c ≤ 0` by running
/// the weighted gradient flow at speed `c_trial` from a front-like seed.
pub fn check_h3(model: Model, grid: &Arc<CylinderGrid>, c_trial: f64, budget: f64) -> Result<H3Report> {
    if !(c_trial > 0.0) {
        return Err(Error::Invalid("trial speed must be positive".into()));
    }
    let zero = CrossSectionField::constant(grid, 0.0);
    let nu0 = eigen_nu(model.as_ref(), grid, &zero)?.value;
    let plateau = find_critical_point(model.as_ref(), grid, &CrossSectionField::constant(grid, 0.9))?;
    let v = plateau.v.values().to_vec();
    let seed = Field::from_fn(grid, |y, z| {
        let j = if grid.is_1d() { 0 } else { ((y - grid.y_min) / grid.dy).round() as usize };
        v[j] * 0.5 * (1.0 - z.tanh())
    });
    let lw = LatticeWeights::new(grid, c_trial, 0.0)?;
    let dt = 0.9 * dt_max(model.as_ref(), grid).min(1.0);
    let stepper = Stepper::new(grid, model.clone(), c_trial, dt)?;
    let mut u = crate::grid::apply_boundary(&seed);
    let mut best = energy_parts(&u, model.as_ref(), &lw).phi;
    let steps = (budget / dt).ceil() as usize;
    for _ in 0..steps {
        u = stepper.advance(&u)?.0;
        best = best.min(energy_parts(&u, model.as_ref(), &lw).phi);
    }
    Ok(H3Report {
        c_trial,
        nu0,
        dispersion_positive: c_trial * c_trial + 4.0 * nu0 > 0.0,
        best_phi: best,
        found_nonpositive: best <= 0.0 && u.sup_norm() > 0.0,
        budget,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridConfig};
    use crate::reaction::CubicBistable;

    #[test]
    fn neumann_linearization_at_zero() {
        let mut c = GridConfig::one_d(32, 0.0, 1.0);
        c.n_y = 17;
        let g = build_grid(&c).unwrap();
        let m = CubicBistable::new(0.25);
        let r = eigen_nu(&m, &g, &CrossSectionField::constant(&g, 0.0)).unwrap();
        assert!((r.value - 0.25).abs() < 1e-10);
    }
}
