//! Fronts invading a nontrivial plateau v from above, in the shifted unknown
//! `h = u - v`.

use std::sync::Arc;

use crate::cross_section::{find_critical_point, CriticalPoint};
use crate::error::Result;
use crate::grid::{CrossSectionField, CylinderGrid};
use crate::reaction::{Model, ShiftedReaction};
use crate::wave::{solve_wave_with, tanh_front, WaveOptions, WaveSolution};

#[derive(Clone, Debug)]
pub enum SecondaryOutcome {
    NotApplicable(String),
    Solved {
        c_dag_v: f64,
        wave: WaveSolution,
        /// Critical point above v that the shifted wave connects to.
        upper: CriticalPoint,
        model: Model,
    },
}

impl SecondaryOutcome {
    pub fn speed(&self) -> Option<f64> {
        match self {
            SecondaryOutcome::Solved { c_dag_v, .. } => Some(*c_dag_v),
            SecondaryOutcome::NotApplicable(_) => None,
        }
    }
}

/// Room above v, below the model's upper bound.
fn headroom(model: &Model, v: &CrossSectionField) -> f64 {
    let g = v.grid();
    g.active_y().map(|j| model.bounds(g.y(j)).1 - v.values()[j]).fold(0.0f64, f64::max)
}

pub fn solve_secondary_speed(model: Model, grid: &Arc<CylinderGrid>, v: &CriticalPoint, c_seed: f64) -> Result<SecondaryOutcome> {
    solve_secondary_speed_with(model, grid, v, c_seed, &WaveOptions::default())
}

pub fn solve_secondary_speed_with(
    model: Model,
    grid: &Arc<CylinderGrid>,
    v: &CriticalPoint,
    c_seed: f64,
    opts: &WaveOptions,
) -> Result<SecondaryOutcome> {
    if v.trivial || v.v.sup_norm() < 1e-8 {
        return Ok(SecondaryOutcome::NotApplicable("plateau v is trivial".into()));
    }
    if headroom(&model, &v.v) < 1e-8 {
        return Ok(SecondaryOutcome::NotApplicable("no room above v (v < 1 fails)".into()));
    }
    let vals = v.v.values().to_vec();
    let seed = CrossSectionField::from_fn(grid, |y| {
        let j = if grid.is_1d() { 0 } else { ((y - grid.y_min) / grid.dy).round() as usize };
        vals[j] + 0.9 * (model.bounds(y).1 - vals[j])
    });
    let upper = find_critical_point(model.as_ref(), grid, &seed)?;
    let gap: Vec<f64> = upper.v.values().iter().zip(&vals).map(|(a, b)| a - b).collect();
    if gap.iter().cloned().fold(0.0f64, f64::max) < 1e-6 {
        return Ok(SecondaryOutcome::NotApplicable("no critical point above v".into()));
    }
    if gap.iter().any(|d| *d < -1e-10) {
        return Ok(SecondaryOutcome::NotApplicable("critical point found above v is not ordered".into()));
    }
    let shifted: Model = Arc::new(ShiftedReaction::new(model.clone(), &v.v));
    let plateau = CrossSectionField::from_values(grid, gap.iter().map(|d| d.max(0.0)).collect())?;
    let h0 = tanh_front(grid, &plateau, 1.0, 0.5 * (grid.z_min + grid.z_max));
    let wave = solve_wave_with(shifted.clone(), &h0, c_seed, opts)?;
    Ok(SecondaryOutcome::Solved { c_dag_v: wave.c_dag, wave, upper, model: shifted })
}
