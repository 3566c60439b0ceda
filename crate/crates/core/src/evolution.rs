//! IMEX time stepping of `u_t = Δu + c u_z + f(u, y)` and the energy bookkeeping
//! of its gradient-flow structure.

use std::sync::Arc;

use crate::banded::BandLu;
use crate::error::{Error, Result};
use crate::grid::{apply_boundary, CylinderGrid, Field};
use crate::reaction::{max_abs_fu, Model, ReactionModel};
use crate::weighted::{LatticeWeights, WeightedMeasure};

/// Bound violations above this are treated as scheme failures rather than rounding.
pub const CLIP_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct EvolutionState {
    pub t: f64,
    pub u: Field,
    /// 0 for the lab frame, c for a frame moving with speed c.
    pub frame_speed: f64,
    /// Cumulative re-windowing in cells.
    pub window_shift: i64,
}

impl EvolutionState {
    pub fn new(u: Field, frame_speed: f64) -> Self {
        EvolutionState { t: 0.0, u: apply_boundary(&u), frame_speed, window_shift: 0 }
    }
}

/// Reaction stability bound `0.5 / max |f_u|`.
pub fn dt_max(model: &dyn ReactionModel, grid: &CylinderGrid) -> f64 {
    let m = max_abs_fu(model, grid);
    if m > 0.0 {
        0.5 / m
    } else {
        f64::INFINITY
    }
}

/// One factorization of `I - dt L_c`, reused for every step.
pub struct Stepper {
    grid: Arc<CylinderGrid>,
    model: Model,
    c: f64,
    dt: f64,
    lu: BandLu,
    ys: Vec<f64>,
    bounds: Vec<(f64, f64)>,
    right_value: f64,
}

impl Stepper {
    pub fn new(grid: &Arc<CylinderGrid>, model: Model, c: f64, dt: f64) -> Result<Self> {
        let bound = dt_max(model.as_ref(), grid);
        if !(dt > 0.0) || dt > bound * (1.0 + 1e-12) {
            return Err(Error::StepTooLarge { dt, dt_max: bound });
        }
        let lu = grid.assemble_operator(c).shifted(1.0, -dt).factor()?;
        let ys: Vec<f64> = grid.active_y().map(|j| grid.y(j)).collect();
        let bounds = ys.iter().map(|y| model.bounds(*y)).collect();
        Ok(Stepper { grid: grid.clone(), model, c, dt, lu, ys, bounds, right_value: 0.0 })
    }

    /// Value held on the fixed column at z_max (default 0).
    pub fn with_right_value(mut self, v: f64) -> Self {
        self.right_value = v;
        self
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn speed(&self) -> f64 {
        self.c
    }

    pub fn grid(&self) -> &Arc<CylinderGrid> {
        &self.grid
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    /// Advance one step; returns the new field and the largest clipped amount.
    pub fn advance(&self, u: &Field) -> Result<(Field, f64)> {
        if !Arc::ptr_eq(u.grid(), &self.grid) && **u.grid() != *self.grid {
            return Err(Error::Shape("field and stepper grids differ".into()));
        }
        let na = self.ys.len();
        let mut rhs = u.gather_unknowns();
        for (i, v) in rhs.iter_mut().enumerate() {
            *v += self.dt * self.model.f(*v, self.ys[i % na]);
        }
        if self.right_value != 0.0 {
            let g = &self.grid;
            let coupling = self.dt * (1.0 + 0.5 * self.c * g.dz) / (g.dz * g.dz) * self.right_value;
            let n = rhs.len();
            for v in rhs[n - na..].iter_mut() {
                *v += coupling;
            }
        }
        self.lu.solve_in_place(&mut rhs);
        let mut clipped = 0.0f64;
        for (i, v) in rhs.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite("time step".into()));
            }
            let (lo, hi) = self.bounds[i % na];
            if *v < lo {
                clipped = clipped.max(lo - *v);
                *v = lo;
            } else if *v > hi {
                clipped = clipped.max(*v - hi);
                *v = hi;
            }
        }
        if clipped > CLIP_TOLERANCE {
            return Err(Error::ClipViolation(clipped));
        }
        let mut out = Field::scatter_unknowns(&self.grid, &rhs);
        if self.right_value != 0.0 {
            let last = self.grid.n_z - 1;
            for j in self.grid.active_y() {
                out.set(j, last, self.right_value);
            }
        }
        Ok((out, clipped))
    }

    pub fn step(&self, state: &EvolutionState) -> Result<EvolutionState> {
        let (u, _) = self.advance(&state.u)?;
        Ok(EvolutionState { t: state.t + self.dt, u, frame_speed: self.c, window_shift: state.window_shift })
    }
}

/// Single step with a fresh factorization.
pub fn step(state: &EvolutionState, model: Model, dt: f64) -> Result<EvolutionState> {
    Stepper::new(state.u.grid(), model, state.frame_speed, dt)?.step(state)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyParts {
    pub phi: f64,
    /// Same sum with every term replaced by its absolute value.
    pub abs_scale: f64,
}

/// Discrete `Φ_c` under lattice weights; its gradient in the lattice mass inner
/// product is exactly `-(L_c u + f(u))`.
pub fn energy_parts(u: &Field, model: &dyn ReactionModel, lw: &LatticeWeights) -> EnergyParts {
    let g = u.grid();
    let mu = g.y_weights();
    let mut phi = 0.0;
    let mut abs = 0.0;
    for k in 0..g.n_active_z() {
        let mut col = 0.0;
        let mut col_abs = 0.0;
        for j in 0..g.n_y {
            let v = mu[j] * model.potential(u.get(j, k), g.y(j));
            col += v;
            col_abs += v.abs();
        }
        for j in 0..g.n_y.saturating_sub(1) {
            let d = (u.get(j + 1, k) - u.get(j, k)) / g.dy;
            let e = 0.5 * g.dy * d * d;
            col += e;
            col_abs += e;
        }
        let mut zgrad = 0.0;
        for j in 0..g.n_y {
            let d = (u.get(j, k + 1) - u.get(j, k)) / g.dz;
            zgrad += 0.5 * mu[j] * d * d;
        }
        phi += g.dz * (lw.node[k] * col + lw.edge[k] * zgrad);
        abs += g.dz * (lw.node[k] * col_abs + lw.edge[k] * zgrad);
    }
    EnergyParts { phi, abs_scale: abs }
}

pub fn energy_phi(u: &Field, model: &dyn ReactionModel, m: &WeightedMeasure) -> Result<f64> {
    let lw = LatticeWeights::new(u.grid(), m.c, m.z_ref)?;
    Ok(energy_parts(u, model, &lw).phi)
}

/// `dt ‖(u_next - u_prev)/dt‖²` in the lattice mass inner product.
pub fn dissipation_increment(u_prev: &Field, u_next: &Field, lw: &LatticeWeights, dt: f64) -> f64 {
    let g = u_prev.grid();
    let mu = g.y_weights();
    let mut s = 0.0;
    for k in 0..g.n_active_z() {
        let mut col = 0.0;
        for j in g.active_y() {
            let r = (u_next.get(j, k) - u_prev.get(j, k)) / dt;
            col += mu[j] * r * r;
        }
        s += g.dz * lw.node[k] * col;
    }
    s * dt
}

#[derive(Clone, Debug, PartialEq)]
pub struct DissipationReport {
    pub steps: usize,
    pub phi_start: f64,
    pub phi_end: f64,
    /// `Φ(start) - Φ(end)`.
    pub phi_drop: f64,
    /// Time quadrature of `‖u_t‖²`.
    pub dissipation: f64,
    pub relative_residual: f64,
    /// Largest single-step increase of Φ relative to the absolute energy scale.
    pub max_increase_rel: f64,
    pub increases: usize,
    pub monotone: bool,
}

/// Streaming form of the dissipation identity check.
#[derive(Clone, Debug)]
pub struct DissipationAccumulator {
    lw: LatticeWeights,
    model: Model,
    tol: f64,
    phi_start: f64,
    phi_prev: EnergyParts,
    dissipation: f64,
    max_increase_rel: f64,
    increases: usize,
    steps: usize,
}

impl DissipationAccumulator {
    pub fn new(u0: &Field, model: Model, m: &WeightedMeasure, tol: f64) -> Result<Self> {
        let lw = LatticeWeights::new(u0.grid(), m.c, m.z_ref)?;
        let e = energy_parts(u0, model.as_ref(), &lw);
        Ok(DissipationAccumulator {
            lw,
            model,
            tol,
            phi_start: e.phi,
            phi_prev: e,
            dissipation: 0.0,
            max_increase_rel: f64::NEG_INFINITY,
            increases: 0,
            steps: 0,
        })
    }

    pub fn weights(&self) -> &LatticeWeights {
        &self.lw
    }

    /// Record one step; returns the new energy.
    pub fn push(&mut self, u_prev: &Field, u_next: &Field, dt: f64) -> EnergyParts {
        let e = energy_parts(u_next, self.model.as_ref(), &self.lw);
        let scale = self.phi_prev.abs_scale.max(e.abs_scale).max(f64::MIN_POSITIVE);
        let rel = (e.phi - self.phi_prev.phi) / scale;
        self.max_increase_rel = self.max_increase_rel.max(rel);
        if rel > self.tol {
            self.increases += 1;
        }
        self.dissipation += dissipation_increment(u_prev, u_next, &self.lw, dt);
        self.phi_prev = e;
        self.steps += 1;
        e
    }

    pub fn report(&self) -> DissipationReport {
        let drop = self.phi_start - self.phi_prev.phi;
        let relative_residual = if drop.abs() > 0.0 { (drop - self.dissipation).abs() / drop.abs() } else { 0.0 };
        DissipationReport {
            steps: self.steps,
            phi_start: self.phi_start,
            phi_end: self.phi_prev.phi,
            phi_drop: drop,
            dissipation: self.dissipation,
            relative_residual,
            max_increase_rel: if self.steps == 0 { 0.0 } else { self.max_increase_rel },
            increases: self.increases,
            monotone: self.increases == 0,
        }
    }
}

/// Compare the drop of Φ against `∫ ‖u_t‖²` over consecutive states of one run.
pub fn dissipation_check(states: &[EvolutionState], model: Model, m: &WeightedMeasure) -> Result<DissipationReport> {
    let first = states.first().ok_or_else(|| Error::Invalid("empty trace".into()))?;
    let mut acc = DissipationAccumulator::new(&first.u, model, m, 1e-10)?;
    for w in states.windows(2) {
        let dt = w[1].t - w[0].t;
        if !(dt > 0.0) {
            return Err(Error::Invalid("states must be strictly increasing in time".into()));
        }
        acc.push(&w[0].u, &w[1].u, dt);
    }
    Ok(acc.report())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    pub ordered: bool,
    /// Largest `max(low - high)` seen at any output time.
    pub max_violation: f64,
    pub first_violation_time: Option<f64>,
    pub checks: usize,
}

/// Integrate an ordered pair (or any ordered family) and check the ordering after
/// every step.
pub fn comparison_family(initial: &[Field], stepper: &Stepper, horizon: f64, tol: f64) -> Result<ComparisonReport> {
    for w in initial.windows(2) {
        w[0].check_same_grid(&w[1])?;
    }
    let mut fields: Vec<Field> = initial.iter().map(apply_boundary).collect();
    let n_steps = (horizon / stepper.dt()).round().max(1.0) as usize;
    let mut report = ComparisonReport { ordered: true, max_violation: f64::NEG_INFINITY, first_violation_time: None, checks: 0 };
    let check = |fields: &[Field], t: f64, report: &mut ComparisonReport| {
        for w in fields.windows(2) {
            let v = w[0].values().iter().zip(w[1].values()).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
            report.max_violation = report.max_violation.max(v);
            if v > tol && report.first_violation_time.is_none() {
                report.first_violation_time = Some(t);
                report.ordered = false;
            }
        }
        report.checks += 1;
    };
    check(&fields, 0.0, &mut report);
    for n in 1..=n_steps {
        for f in fields.iter_mut() {
            *f = stepper.advance(f)?.0;
        }
        check(&fields, n as f64 * stepper.dt(), &mut report);
    }
    Ok(report)
}

/// Evolve `u0_low ≤ u0_high` and report whether the order survives.
pub fn comparison_test(u0_low: &Field, u0_high: &Field, stepper: &Stepper, horizon: f64) -> Result<ComparisonReport> {
    let pre = u0_low.values().iter().zip(u0_high.values()).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
    if pre > 0.0 {
        return Err(Error::Invalid(format!("initial pair is not ordered (excess {pre:e})")));
    }
    comparison_family(&[u0_low.clone(), u0_high.clone()], stepper, horizon, 1e-10)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridConfig};
    use crate::reaction::CubicBistable;

    #[test]
    fn equilibria_are_fixed() {
        let g = build_grid(&GridConfig::one_d(64, 0.0, 10.0)).unwrap();
        let model: Model = Arc::new(CubicBistable::new(0.25));
        let s = Stepper::new(&g, model, 0.3, 0.5).unwrap();
        let zero = Field::zeros(&g);
        assert_eq!(s.advance(&zero).unwrap().0.sup_norm(), 0.0);
    }

    #[test]
    fn rejects_large_step() {
        let g = build_grid(&GridConfig::one_d(64, 0.0, 10.0)).unwrap();
        let model: Model = Arc::new(CubicBistable::new(0.25));
        assert!(matches!(Stepper::new(&g, model, 0.0, 1.0), Err(Error::StepTooLarge { .. })));
    }
}
