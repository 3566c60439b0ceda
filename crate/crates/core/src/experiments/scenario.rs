//! Scenario drivers: each builds its inputs from a config, runs the numerics,
//! writes its files and fills a manifest with summary scalars and assertions.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{ExperimentConfig, InitialKind, Scenario};
use super::manifest::RunManifest;
use crate::cross_section::{check_h3, eigen_nu, energy_e, find_critical_point, CriticalPoint};
use crate::error::{Error, Result};
use crate::evolution::{energy_parts, energy_phi, DissipationAccumulator, DissipationReport, Stepper};
use crate::gap::spectral_gap;
use crate::grid::{apply_boundary, build_grid, CrossSectionField, CylinderGrid, Field, GridConfig};
use crate::reaction::{check_hypotheses, CubicBistable, Model, ModelSpec};
use crate::secondary::{solve_secondary_speed, SecondaryOutcome};
use crate::tracker::{
    decay_window, fit_decay_series, fit_r_tail, track_with, z_delta_envelope, FrontTrace, FrontTracker, TrackOptions,
};
use crate::wave::{solve_wave, tanh_front, translated_profile, WaveSolution};
use crate::weighted::{weighted_norm_l2, LatticeWeights};

/// Significant digits for CSV and summary output, from `CYLFRONT_PRECISION`.
pub fn precision() -> usize {
    std::env::var("CYLFRONT_PRECISION").ok().and_then(|v| v.trim().parse::<usize>().ok()).unwrap_or(17).clamp(1, 17)
}

/// Plateau v: critical point of the section energy reached from the constant
/// seed `initial.amplitude`.
pub fn plateau(config: &ExperimentConfig, grid: &Arc<CylinderGrid>, model: &Model) -> Result<CriticalPoint> {
    let seed = CrossSectionField::constant(grid, config.initial.amplitude);
    let cp = find_critical_point(model.as_ref(), grid, &seed)?;
    if cp.v.sup_norm() < 1e-8 {
        return Err(Error::Invalid("plateau search collapsed to zero".into()));
    }
    Ok(cp)
}

pub fn primary_wave(config: &ExperimentConfig, grid: &Arc<CylinderGrid>, model: &Model, cp: &CriticalPoint) -> Result<WaveSolution> {
    let seed = tanh_front(grid, &cp.v, 0.5, 0.0f64.clamp(grid.z_min + 10.0, grid.z_max - 10.0));
    solve_wave(model.clone(), &seed, config.c_seed)
}

/// Initial datum on the wave's grid.
pub fn initial_field(config: &ExperimentConfig, ws: &WaveSolution, cp: &CriticalPoint, model: &Model) -> Field {
    let g = ws.grid();
    let i = &config.initial;
    let base = tanh_front(g, &cp.v, i.steepness, i.offset);
    match i.kind {
        InitialKind::Tanh => base,
        InitialKind::PlateauNoise => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let mut u = base;
            for k in 0..g.n_z {
                for j in 0..g.n_y {
                    let (lo, hi) = model.bounds(g.y(j));
                    let v = u.get(j, k) + i.noise * rng.gen_range(-1.0..=1.0);
                    u.set(j, k, v.clamp(lo, hi));
                }
            }
            apply_boundary(&u)
        }
    }
}

/// `min (u0 - v)` over the columns within 10 length units of the left end.
pub fn left_plateau_deficit(u0: &Field, v: &CrossSectionField) -> f64 {
    let g = u0.grid();
    let mut worst = f64::INFINITY;
    for k in (0..g.n_z).take_while(|&k| g.z(k) <= g.z_min + 10.0) {
        for j in g.active_y() {
            worst = worst.min(u0.get(j, k) - v.values()[j]);
        }
    }
    worst
}

/// Sup distance between a 1D profile and `1/(1+e^{(z-s)/√2})`, minimized over s.
pub fn closed_form_profile_error(ws: &WaveSolution) -> (f64, f64) {
    let g = ws.grid();
    let err = |s: f64| {
        (0..g.n_z).map(|k| (ws.u_bar.get(0, k) - CubicBistable::exact_profile(g.z(k) - s)).abs()).fold(0.0f64, f64::max)
    };
    let (mut a, mut b) = (-1.0f64, 1.0f64);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let x1 = b - phi * (b - a);
        let x2 = a + phi * (b - a);
        if err(x1) <= err(x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    let s = 0.5 * (a + b);
    (err(s), s)
}

fn fmt(v: f64, digits: usize) -> String {
    format!("{v:.p$e}", p = digits.max(1) - 1)
}

fn wave_checks(m: &mut RunManifest, config: &ExperimentConfig, ws: &WaveSolution, cp: &CriticalPoint, model: &Model) -> Result<()> {
    let d = precision();
    let g = ws.grid();
    m.scalar("c_dag", ws.c_dag, d);
    m.scalar("residual", ws.residual, d);
    m.scalar("normalization_shift", ws.normalization_shift, d);
    m.scalar("phase1_time", ws.phase1_time, d);
    m.scalar("phase1_drift", ws.phase1_drift, d);
    m.text("newton_iterations", ws.newton_iterations.to_string());
    let plateau_err = ws.v_limit.values().iter().zip(cp.v.values()).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
    let e_v = energy_e(&cp.v, model.as_ref());
    m.scalar("plateau_energy", e_v, d);
    m.scalar("plateau_mismatch", plateau_err, d);
    let tail = g.active_y().map(|j| ws.u_bar.get(j, g.n_z - 2)).fold(0.0f64, f64::max);
    m.scalar("right_tail", tail, d);
    let phi = energy_phi(&ws.u_bar, model.as_ref(), &ws.measure())?;
    m.scalar("phi_at_wave", phi, d);
    m.check("residual_below_tolerance", ws.residual <= 1e-8, format!("sup residual {}", fmt(ws.residual, 3)));
    m.check("profile_monotone", ws.monotone, "every row non-increasing in z");
    m.check("right_tail_small", tail < 1e-6, format!("last active column {}", fmt(tail, 3)));
    m.check("plateau_matches_critical_point", plateau_err <= 1e-6, format!("sup mismatch {}", fmt(plateau_err, 3)));
    m.check("plateau_energy_negative", e_v < 0.0, format!("E[v] = {}", fmt(e_v, 6)));
    m.check("phi_vanishes_at_wave", phi.abs() <= 1e-6, format!("Phi[u_bar] = {}", fmt(phi, 3)));
    if let (ModelSpec::Cubic { a }, true) = (&config.model, g.is_1d()) {
        let exact = (1.0 - 2.0 * a) / 2f64.sqrt();
        let (err, shift) = closed_form_profile_error(ws);
        m.scalar("c_exact", exact, d);
        m.scalar("profile_error", err, d);
        m.scalar("profile_shift", shift, d);
        m.check("speed_closed_form", (ws.c_dag - exact).abs() <= 1e-3, format!("|c - c_exact| = {}", fmt((ws.c_dag - exact).abs(), 3)));
        m.check("profile_closed_form", err <= 1e-3, format!("sup error {} after shift {}", fmt(err, 3), fmt(shift, 3)));
    }
    Ok(())
}

fn write_wave(m: &mut RunManifest, out: &Path, name: &str, ws: &WaveSolution) -> Result<()> {
    let text = ws.to_text();
    let back = WaveSolution::from_text(&text)?;
    let exact = back.c_dag.to_bits() == ws.c_dag.to_bits()
        && back.u_bar.values().iter().zip(ws.u_bar.values()).all(|(a, b)| a.to_bits() == b.to_bits());
    m.check(&format!("{name}_round_trip"), exact, "reload is bit-identical");
    m.write_file(out, name, text.as_bytes())
}

fn scenario_wave(config: &ExperimentConfig, out: &Path, m: &mut RunManifest) -> Result<()> {
    let (grid, model) = config.build()?;
    let cp = plateau(config, &grid, &model)?;
    let ws = primary_wave(config, &grid, &model, &cp)?;
    wave_checks(m, config, &ws, &cp, &model)?;
    write_wave(m, out, "wave.txt", &ws)
}

/// Φ drop against accumulated dissipation for a run without tracking.
pub fn dissipation_run(u0: &Field, stepper: &Stepper, horizon: f64, ws: &WaveSolution) -> Result<DissipationReport> {
    let mut acc = DissipationAccumulator::new(u0, stepper.model().clone(), &ws.measure(), 1e-10)?;
    let steps = (horizon / stepper.dt()).round() as usize;
    let mut u = u0.clone();
    for _ in 0..steps {
        let next = stepper.advance(&u)?.0;
        acc.push(&u, &next, stepper.dt());
        u = next;
    }
    Ok(acc.report())
}

/// Result of the tracked convergence run, also used by the acceptance suite.
pub struct ConvergeRun {
    pub ws: Arc<WaveSolution>,
    pub cp: CriticalPoint,
    pub u0: Field,
    pub trace: FrontTrace,
    pub sandwich_violation: f64,
    pub sandwich_checks: usize,
    pub initial_distance: f64,
}

pub fn converge_run(config: &ExperimentConfig) -> Result<ConvergeRun> {
    let (grid, model) = config.build()?;
    let cp = plateau(config, &grid, &model)?;
    let ws = Arc::new(primary_wave(config, &grid, &model, &cp)?);
    let u0 = initial_field(config, &ws, &cp, &model);
    let tracker = FrontTracker::new(ws.clone())?;
    let stepper = Stepper::new(ws.grid(), model.clone(), ws.c_dag, config.dt)?;
    let first = tracker.locate_front(&u0, 0.0)?;
    let initial_distance = weighted_norm_l2(&tracker.deviation(&u0, first.r)?, &ws.measure())?;

    let r = config.initial.sandwich_shift;
    let mut barriers = if r > 0.0 {
        let below = translated_profile(&ws, -r)?;
        let above = translated_profile(&ws, r)?;
        Some((u0.zip_map(&below, f64::min)?, u0.zip_map(&above, f64::max)?))
    } else {
        None
    };
    let mut violation = f64::NEG_INFINITY;
    let mut checks = 0;
    let excess = |a: &Field, b: &Field| a.values().iter().zip(b.values()).map(|(x, y)| x - y).fold(f64::NEG_INFINITY, f64::max);
    if let Some((lo, hi)) = &barriers {
        violation = excess(lo, &u0).max(excess(&u0, hi));
        checks += 1;
    }
    let trace = track_with(&u0, &tracker, &stepper, config.horizon, TrackOptions { delta: config.delta, phi_tol: 1e-10 }, |_, u| {
        if let Some((lo, hi)) = barriers.as_mut() {
            *lo = stepper.advance(lo)?.0;
            *hi = stepper.advance(hi)?.0;
            violation = violation.max(excess(lo, u)).max(excess(u, hi));
            checks += 1;
        }
        Ok(())
    })?;
    Ok(ConvergeRun { ws, cp, u0, trace, sandwich_violation: violation, sandwich_checks: checks, initial_distance })
}

fn scenario_converge(config: &ExperimentConfig, out: &Path, m: &mut RunManifest) -> Result<()> {
    let d = precision();
    let run = converge_run(config)?;
    let (_, model) = config.build()?;
    let ws = &run.ws;
    m.write_file(out, "trace.csv", run.trace.to_csv(d).as_bytes())?;
    write_wave(m, out, "wave.txt", ws)?;
    m.scalar("c_dag", ws.c_dag, d);
    let phi = energy_phi(&ws.u_bar, model.as_ref(), &ws.measure())?;
    m.scalar("phi_at_wave", phi, d);
    m.check("phi_vanishes_at_wave", phi.abs() <= 1e-6, format!("Phi[u_bar] = {}", fmt(phi, 3)));

    let deficit = left_plateau_deficit(&run.u0, &run.cp.v);
    m.scalar("initial_plateau_deficit", deficit, d);
    m.check("initial_data_admissible", deficit >= -config.initial.alpha, format!("min(u0 - v) on the left = {}", fmt(deficit, 3)));

    let tr = &run.trace;
    m.check("tracking_complete", tr.aborted.is_none(), tr.aborted.clone().unwrap_or_else(|| format!("{} samples", tr.samples.len())));
    let ts: Vec<f64> = tr.samples.iter().map(|s| s.t).collect();
    let ms: Vec<f64> = tr.samples.iter().map(|s| s.m).collect();
    let scale = weighted_norm_l2(&ws.u_bar, &ws.measure())?.powi(2);
    let window = decay_window(&ts, &ms, scale)?;
    let fit = fit_decay_series(&ts, &ms, window)?;
    m.scalar("sigma", fit.sigma, d);
    m.scalar("sigma_quality", fit.quality, d);
    m.text("fit_window", format!("{} {}", fmt(fit.window.0, 6), fmt(fit.window.1, 6)));
    m.check("decay_exponential", fit.sigma > 0.0 && fit.quality >= 0.99, format!("sigma {} quality {}", fmt(fit.sigma, 4), fmt(fit.quality, 6)));

    match fit_r_tail(tr, window) {
        Ok(t) => {
            m.scalar("r_infinity", t.r_infinity, d);
            m.scalar("r_tail_rate", t.rate, d);
            m.scalar("r_tail_quality", t.quality, d);
            m.check("front_position_converges", t.rate > 0.0 && t.quality >= 0.95, format!("rate {} quality {}", fmt(t.rate, 4), fmt(t.quality, 6)));
        }
        Err(e) => {
            m.check("front_position_converges", false, e.to_string());
        }
    }
    let h2: Vec<f64> = tr.samples.iter().map(|s| s.h2c_norm * s.h2c_norm).collect();
    let h2fit = fit_decay_series(&ts, &h2, window)?;
    m.scalar("h2c_sigma", h2fit.sigma, d);
    m.scalar("h2c_quality", h2fit.quality, d);
    m.check("h2c_decays_log_linearly", h2fit.sigma > 0.0 && h2fit.quality >= 0.99, format!("rate {} quality {}", fmt(h2fit.sigma, 4), fmt(h2fit.quality, 6)));

    let max_ortho = tr.samples.iter().map(|s| s.ortho_residual).fold(0.0f64, f64::max);
    m.scalar("max_ortho_residual", max_ortho, d);
    m.check("orthogonality_maintained", max_ortho <= 1e-8, format!("max {}", fmt(max_ortho, 3)));
    let min_hpp = tr.samples.iter().map(|s| s.h_pp).fold(f64::INFINITY, f64::min);
    m.scalar("min_h_pp", min_hpp, d);

    let r0 = tr.samples[0].r;
    let excursion = tr.samples.iter().map(|s| (s.r - r0).abs()).fold(0.0f64, f64::max);
    m.scalar("max_front_excursion", excursion, d);
    m.scalar("initial_distance", run.initial_distance, d);
    m.check("front_excursion_bounded", excursion <= 10.0 * run.initial_distance, format!("{} vs 10 x {}", fmt(excursion, 3), fmt(run.initial_distance, 3)));

    if let Some(dr) = &tr.dissipation {
        m.scalar("phi_max_increase_rel", dr.max_increase_rel, d);
        m.scalar("dissipation_residual", dr.relative_residual, d);
        m.check("phi_non_increasing", dr.monotone, format!("{} increases, max relative {}", dr.increases, fmt(dr.max_increase_rel, 3)));
        if config.refine_check {
            let half = Stepper::new(ws.grid(), model.clone(), ws.c_dag, 0.5 * config.dt)?;
            let fine = dissipation_run(&run.u0, &half, config.horizon, ws)?;
            let ratio = dr.relative_residual / fine.relative_residual;
            m.scalar("dissipation_residual_half_dt", fine.relative_residual, d);
            m.scalar("dissipation_halving_ratio", ratio, d);
            m.check("dissipation_first_order", (ratio - 2.0).abs() <= 0.4, format!("ratio {}", fmt(ratio, 4)));
        }
    }
    if run.sandwich_checks > 0 {
        m.scalar("sandwich_violation", run.sandwich_violation, d);
        m.check("sandwich_ordered", run.sandwich_violation <= 1e-10, format!("max excess {} over {} checks", fmt(run.sandwich_violation, 3), run.sandwich_checks));
    }
    let zs: Vec<f64> = tr.samples.iter().map(|s| s.z_delta).collect();
    match z_delta_envelope(&ts, &zs) {
        Ok(e) => {
            m.scalar("z_delta_a", e.a, d);
            m.scalar("z_delta_b", e.b, d);
            m.check("z_delta_retreats", e.b > 0.0, format!("b = {} from {} finite samples", fmt(e.b, 4), e.finite_samples));
        }
        Err(e) => {
            m.check("z_delta_retreats", false, e.to_string());
        }
    }
    Ok(())
}

/// Same window, half the axial spacing.
pub fn refined_grid(grid: &GridConfig) -> GridConfig {
    GridConfig { n_z: 2 * (grid.n_z - 1) + 1, ..grid.clone() }
}

fn scenario_gap(config: &ExperimentConfig, out: &Path, m: &mut RunManifest) -> Result<()> {
    let d = precision();
    let (grid, model) = config.build()?;
    let cp = plateau(config, &grid, &model)?;
    let ws = primary_wave(config, &grid, &model, &cp)?;
    write_wave(m, out, "wave.txt", &ws)?;
    let g = spectral_gap(&ws, model.as_ref())?;
    m.scalar("c_dag", ws.c_dag, d);
    m.scalar("lambda0", g.lambda0, d);
    m.scalar("lambda0_scale", g.scale, d);
    m.scalar("alignment", g.alignment, d);
    m.scalar("K", g.k, d);
    m.scalar("K_rayleigh", g.k_rayleigh, d);
    m.scalar("K_residual", g.k_residual, d);
    m.scalar("constraint_residual", g.constraint_residual, d);
    m.scalar("zero_mode_residual", g.zero_mode_residual, d);
    m.check("lambda0_vanishes", g.lambda0.abs() <= 1e-6 * g.scale, format!("|lambda0| = {}", fmt(g.lambda0.abs(), 3)));
    m.check("zero_mode_alignment", g.alignment >= 0.999, format!("cosine {}", fmt(g.alignment, 10)));
    m.check("gap_positive", g.k > 0.0, format!("K = {}", fmt(g.k, 6)));
    m.check("constraint_satisfied", g.constraint_residual <= 1e-10, fmt(g.constraint_residual, 3));
    m.check("zero_mode_residual_small", g.zero_mode_residual <= 1e-6, fmt(g.zero_mode_residual, 3));
    if config.refine_check {
        let fine_cfg = ExperimentConfig { grid: refined_grid(&config.grid), ..config.clone() };
        let fine_grid = build_grid(&fine_cfg.grid)?;
        let cpf = plateau(&fine_cfg, &fine_grid, &model)?;
        let wf = primary_wave(&fine_cfg, &fine_grid, &model, &cpf)?;
        let gf = spectral_gap(&wf, model.as_ref())?;
        let rel = (g.k - gf.k).abs() / gf.k.abs();
        m.scalar("K_refined", gf.k, d);
        m.scalar("K_refinement_change", rel, d);
        m.check("gap_stable_under_refinement", rel <= 0.05, format!("relative change {}", fmt(rel, 3)));
    }
    Ok(())
}

fn scenario_secondary(config: &ExperimentConfig, out: &Path, m: &mut RunManifest) -> Result<()> {
    let d = precision();
    let (grid, model) = config.build()?;
    let cp0 = plateau(config, &grid, &model)?;
    let ws = primary_wave(config, &grid, &model, &cp0)?;
    write_wave(m, out, "wave.txt", &ws)?;
    m.scalar("c_dag", ws.c_dag, d);
    let v_seed = CrossSectionField::from_values(&grid, ws.v_limit.values().to_vec())?;
    let cp = find_critical_point(model.as_ref(), &grid, &v_seed)?;
    m.scalar("plateau_sup", cp.v.sup_norm(), d);
    m.scalar("plateau_hessian_floor", cp.hessian_floor, d);
    match solve_secondary_speed(model.clone(), &grid, &cp, config.c_seed)? {
        SecondaryOutcome::NotApplicable(reason) => {
            m.text("secondary_status", "not_applicable");
            m.note(format!("secondary-speed inequality waived: {reason}"));
        }
        SecondaryOutcome::Solved { c_dag_v, wave, upper, model: shifted } => {
            m.text("secondary_status", "solved");
            m.scalar("c_dag_v", c_dag_v, d);
            m.scalar("speed_margin", ws.c_dag - c_dag_v, d);
            m.scalar("upper_plateau_sup", upper.v.sup_norm(), d);
            m.scalar("secondary_residual", wave.residual, d);
            write_wave(m, out, "secondary_wave.txt", &wave)?;
            let zero = Field::zeros(wave.grid());
            let lw = LatticeWeights::new(wave.grid(), c_dag_v, 0.0)?;
            let psi0 = energy_parts(&zero, shifted.as_ref(), &lw).phi;
            m.check("shifted_functional_vanishes_at_zero", psi0 == 0.0, format!("Psi[0] = {psi0:e}"));
            m.check("secondary_speed_below_primary", c_dag_v < ws.c_dag, format!("c_v = {} < c = {}", fmt(c_dag_v, 8), fmt(ws.c_dag, 8)));
        }
    }
    Ok(())
}

/// Random ordered pair on `grid`: a perturbed front and the same front raised
/// by a nonnegative smooth bump field.
pub fn random_ordered_pair(grid: &Arc<CylinderGrid>, model: &Model, rng: &mut ChaCha8Rng) -> (Field, Field) {
    let offset: f64 = rng.gen_range(-10.0..10.0);
    let steep: f64 = rng.gen_range(0.2..2.0);
    let amp: f64 = rng.gen_range(0.3..1.0);
    let bumps: Vec<(f64, f64, f64)> = (0..4).map(|_| (rng.gen_range(-20.0..20.0), rng.gen_range(0.5..4.0), rng.gen_range(-0.3..0.3))).collect();
    let raise: Vec<(f64, f64, f64)> = (0..3).map(|_| (rng.gen_range(-20.0..20.0), rng.gen_range(0.5..4.0), rng.gen_range(0.0..0.4))).collect();
    let clip = |y: f64, v: f64| {
        let (lo, hi) = model.bounds(y);
        v.clamp(lo, hi)
    };
    let bump = |list: &[(f64, f64, f64)], z: f64| list.iter().map(|(c, w, a)| a * (-((z - c) / w).powi(2)).exp()).sum::<f64>();
    let low = Field::from_fn(grid, |y, z| clip(y, amp * 0.5 * (1.0 - (steep * (z - offset)).tanh()) + bump(&bumps, z)));
    let high = Field::from_fn(grid, |y, z| {
        let base = amp * 0.5 * (1.0 - (steep * (z - offset)).tanh()) + bump(&bumps, z);
        clip(y, base + bump(&raise, z))
    });
    (apply_boundary(&low), apply_boundary(&high))
}

fn scenario_comparison(config: &ExperimentConfig, _out: &Path, m: &mut RunManifest) -> Result<()> {
    let d = precision();
    let (grid, model) = config.build()?;
    let stepper = Stepper::new(&grid, model.clone(), config.c_seed, config.dt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let pairs: Vec<(Field, Field)> = (0..config.initial.pairs).map(|_| random_ordered_pair(&grid, &model, &mut rng)).collect();
    let reports: Vec<_> = pairs
        .par_iter()
        .map(|(lo, hi)| crate::evolution::comparison_test(lo, hi, &stepper, config.horizon))
        .collect::<Result<Vec<_>>>()?;
    let worst = reports.iter().map(|r| r.max_violation).fold(f64::NEG_INFINITY, f64::max);
    let failed = reports.iter().filter(|r| !r.ordered).count();
    m.text("pairs", reports.len().to_string());
    m.scalar("max_violation", worst, d);
    m.check("pairs_stay_ordered", failed == 0, format!("{failed} of {} pairs violated; max excess {}", reports.len(), fmt(worst, 3)));
    Ok(())
}

fn scenario_hypotheses(config: &ExperimentConfig, _out: &Path, m: &mut RunManifest) -> Result<()> {
    let d = precision();
    let (grid, model) = config.build()?;
    let h = check_hypotheses(model.as_ref(), &grid);
    m.text("model", h.label.clone());
    m.scalar("h1_defect", h.h1_defect, d);
    m.scalar("holder_exponent", h.holder_exponent, d);
    m.scalar("holder_quotient_f", h.holder_quotient_f, d);
    m.scalar("holder_quotient_fu", h.holder_quotient_fu, d);
    let min_int = h.integrals.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    m.scalar("min_integral_f", min_int, d);
    m.check("h1_equilibria", h.h1_pass, format!("defect {}", fmt(h.h1_defect, 3)));
    m.check("holder_quotients_finite", h.holder_quotient_f.is_finite() && h.holder_quotient_fu.is_finite(), "sampled quotients finite");
    m.check("integral_positive", h.integral_positive, format!("min over y {}", fmt(min_int, 6)));
    let nu0 = eigen_nu(model.as_ref(), &grid, &CrossSectionField::constant(&grid, 0.0))?;
    m.scalar("nu0", nu0.value, d);
    let h3 = check_h3(model.clone(), &grid, config.c_seed, config.horizon)?;
    m.scalar("h3_c_trial", h3.c_trial, d);
    m.scalar("h3_best_phi", h3.best_phi, d);
    m.check("h3_dispersion", h3.dispersion_positive, format!("c^2 + 4 nu0 = {}", fmt(h3.c_trial * h3.c_trial + 4.0 * nu0.value, 6)));
    m.check("h3_nonpositive_energy_found", h3.found_nonpositive, format!("best Phi {}", fmt(h3.best_phi, 6)));
    Ok(())
}

/// Run one scenario into `out`. The manifest is written even when the run
/// fails; files written before the failure stay in place.
pub fn run_scenario(config: &ExperimentConfig, scenario: Scenario, out: &Path) -> Result<RunManifest> {
    std::fs::create_dir_all(out)?;
    let start = Instant::now();
    let mut m = RunManifest::new(scenario.to_string(), config.echo());
    let res = match scenario {
        Scenario::Wave => scenario_wave(config, out, &mut m),
        Scenario::Converge => scenario_converge(config, out, &mut m),
        Scenario::Gap => scenario_gap(config, out, &mut m),
        Scenario::SecondarySpeed => scenario_secondary(config, out, &mut m),
        Scenario::Comparison => scenario_comparison(config, out, &mut m),
        Scenario::Hypotheses => scenario_hypotheses(config, out, &mut m),
    };
    m.wall_time_s = start.elapsed().as_secs_f64();
    if let Err(e) = &res {
        m.error = Some(e.to_string());
    }
    std::fs::write(out.join("manifest.txt"), m.to_text())?;
    res.map(|_| m).map_err(|e| e.context(format!("scenario {scenario}")))
}
