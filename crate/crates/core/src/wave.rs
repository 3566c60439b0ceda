//! Traveling-wave computation: a freezing phase on the moving-frame evolution,
//! then Newton on the profile equation with a weighted phase condition.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::banded::{BandLu, BandMatrix};
use crate::error::{Error, Result};
use crate::evolution::{dt_max, Stepper};
use crate::grid::{apply_boundary, Bc, CrossSectionField, CylinderGrid, Field};
use crate::reaction::{Model, ReactionModel};
use crate::weighted::{partial_z_high, translate, LatticeWeights, MonotoneCubic, WeightedMeasure};

#[derive(Clone, Debug)]
pub struct WaveOptions {
    /// Speed-update gain, halved whenever the measured drift changes sign.
    pub kappa: f64,
    /// Time between front-speed measurements.
    pub measure_interval: f64,
    /// Freezing stops once `|dR/dt|` falls below this.
    pub phase1_tol: f64,
    pub phase1_max_time: f64,
    /// Drift accepted for the Newton hand-off when the time cap is reached.
    pub phase1_accept: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub dt: Option<f64>,
    /// Minimum distance kept between the front and either axial end.
    pub margin: f64,
}

impl Default for WaveOptions {
    fn default() -> Self {
        WaveOptions {
            kappa: 0.5,
            measure_interval: 1.0,
            phase1_tol: 1e-8,
            phase1_max_time: 400.0,
            phase1_accept: 1e-3,
            newton_tol: 1e-10,
            newton_max_iter: 40,
            dt: None,
            margin: 10.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct WaveSolution {
    pub c_dag: f64,
    pub u_bar: Field,
    /// Sup norm of the discrete profile-equation residual.
    pub residual: f64,
    /// Axial coordinate shift applied so that the half-height point sits at z = 0.
    pub normalization_shift: f64,
    pub v_limit: CrossSectionField,
    pub monotone: bool,
    pub phase1_time: f64,
    pub phase1_drift: f64,
    pub newton_iterations: usize,
}

/// Position of the rightmost crossing of half the plateau by the section sup.
pub fn front_position(u: &Field) -> Option<f64> {
    let s = u.section_sup();
    let g = u.grid();
    let top = s.iter().cloned().fold(0.0f64, f64::max);
    if top <= 0.0 {
        return None;
    }
    let half = 0.5 * top;
    let k = (0..g.n_z - 1).rev().find(|&k| s[k] >= half)?;
    if s[k + 1] >= half {
        return None;
    }
    Some(g.z(k) + (s[k] - half) / (s[k] - s[k + 1]) * g.dz)
}

/// Centered `D_z` on the unknowns consistent with the operator's boundary rows.
fn unknown_dz(grid: &CylinderGrid, x: &[f64]) -> Vec<f64> {
    let na = grid.n_active_y();
    let nz = grid.n_active_z();
    let mut out = vec![0.0; x.len()];
    for k in 1..nz {
        for i in 0..na {
            let up = if k + 1 < nz { x[(k + 1) * na + i] } else { 0.0 };
            out[k * na + i] = (up - x[(k - 1) * na + i]) / (2.0 * grid.dz);
        }
    }
    out
}

fn unknown_ys(grid: &CylinderGrid) -> Vec<f64> {
    let ys: Vec<f64> = grid.active_y().map(|j| grid.y(j)).collect();
    (0..grid.n_unknowns()).map(|i| ys[i % ys.len()]).collect()
}

/// `L_c x + f(x)` on the unknowns.
fn profile_residual(op: &BandMatrix, model: &dyn ReactionModel, ys: &[f64], x: &[f64]) -> Vec<f64> {
    let mut r = op.matvec(x);
    for ((ri, xi), y) in r.iter_mut().zip(x).zip(ys) {
        *ri += model.f(*xi, *y);
    }
    r
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solve `[A b; gᵀ 0][x; s] = [r; q]` by block elimination with refinement sweeps
/// on the full bordered system.
pub fn bordered_solve(a: &BandMatrix, lu: &BandLu, b: &[f64], g: &[f64], r: &[f64], q: f64, sweeps: usize) -> (Vec<f64>, f64) {
    let x2 = lu.solve(b);
    let gx2 = dot(g, &x2);
    let once = |r: &[f64], q: f64| -> (Vec<f64>, f64) {
        let x1 = lu.solve(r);
        let s = (dot(g, &x1) - q) / gx2;
        let x = x1.iter().zip(&x2).map(|(p, w)| p - s * w).collect();
        (x, s)
    };
    let (mut x, mut s) = once(r, q);
    for _ in 0..sweeps {
        let ax = a.matvec(&x);
        let rr: Vec<f64> = r.iter().zip(&ax).zip(b).map(|((ri, ai), bi)| ri - ai - bi * s).collect();
        let rq = q - dot(g, &x);
        let (dx, ds) = once(&rr, rq);
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
        s += ds;
    }
    (x, s)
}

/// Linearization `L_c + f_u(ū)` on the unknowns.
pub fn assemble_linearization(grid: &CylinderGrid, model: &dyn ReactionModel, c: f64, x: &[f64]) -> BandMatrix {
    let mut a = grid.assemble_operator(c);
    let ys = unknown_ys(grid);
    for (i, xi) in x.iter().enumerate() {
        a.add(i, i, model.f_u(*xi, ys[i]));
    }
    a
}

struct FreezeOutcome {
    u: Field,
    c: f64,
    time: f64,
    drift: f64,
}

fn freeze(model: &Model, seed: &Field, c_seed: f64, opts: &WaveOptions) -> Result<FreezeOutcome> {
    let grid = seed.grid().clone();
    let dt = opts.dt.unwrap_or_else(|| (0.9 * dt_max(model.as_ref(), &grid)).min(0.5));
    let steps = (opts.measure_interval / dt).ceil().max(1.0) as usize;
    let interval = steps as f64 * dt;
    let mut u = apply_boundary(seed);
    let initial_top = u.sup_norm();
    let home = front_position(&u).ok_or_else(|| Error::Wave("seed is not front-like".into()))?;
    let mut c = c_seed;
    let mut kappa = opts.kappa;
    let mut prev_drift: Option<f64> = None;
    let mut time = 0.0;
    let mut r_prev = home;
    loop {
        let stepper = Stepper::new(&grid, model.clone(), c, dt)?;
        for _ in 0..steps {
            u = stepper.advance(&u)?.0;
        }
        time += interval;
        if u.sup_norm() < 0.05 * initial_top {
            return Err(Error::Wave("freezing phase collapsed to zero (seed outside the basin)".into()));
        }
        let r = front_position(&u)
            .ok_or_else(|| Error::Wave("freezing phase collapsed to the plateau (seed outside the basin)".into()))?;
        let drift = (r - r_prev) / interval;
        if drift.abs() < opts.phase1_tol {
            return Ok(FreezeOutcome { u, c, time, drift });
        }
        if time >= opts.phase1_max_time {
            if drift.abs() <= opts.phase1_accept {
                return Ok(FreezeOutcome { u, c, time, drift });
            }
            return Err(Error::Wave(format!("freezing phase did not settle: drift {drift:e} at t = {time}")));
        }
        if let Some(p) = prev_drift {
            if p * drift < 0.0 {
                kappa *= 0.5;
            }
        }
        prev_drift = Some(drift);
        c += kappa * drift;
        if !(c > 0.0) {
            return Err(Error::Wave("freezing phase drove the speed to a non-positive value".into()));
        }
        let mut r_now = r;
        if r < grid.z_min + opts.margin || r > grid.z_max - opts.margin {
            let cells = ((home - r) / grid.dz).round() as isize;
            u = u.shift_cells(cells);
            r_now = front_position(&u).unwrap_or(home);
        }
        r_prev = r_now;
    }
}

/// Newton on `{L_c U + f(U) = 0, <U - U_ref, ∂_z U_ref>_w = 0}` for `(U, c)`.
fn newton(model: &dyn ReactionModel, u0: &Field, c0: f64, opts: &WaveOptions) -> Result<(Field, f64, f64, usize)> {
    let grid = u0.grid().clone();
    let ys = unknown_ys(&grid);
    let u_ref = u0.gather_unknowns();
    let z_ref = front_position(u0).unwrap_or(0.0);
    let w = LatticeWeights::new(&grid, c0, z_ref)?.unknown_masses(&grid);
    let q: Vec<f64> = unknown_dz(&grid, &u_ref).iter().zip(&w).map(|(d, m)| d * m).collect();
    let mut x = u_ref.clone();
    let mut c = c0;
    let phase = |x: &[f64]| -> f64 { x.iter().zip(&u_ref).zip(&q).map(|((a, b), g)| (a - b) * g).sum() };
    let mut op = grid.assemble_operator(c);
    let mut r = profile_residual(&op, model, &ys, &x);
    let q_scale = sup(&q).max(f64::MIN_POSITIVE);
    let merit = |r: &[f64], p: f64| sup(r).max(p.abs() / q_scale);
    let mut m = merit(&r, phase(&x));
    let mut iters = 0;
    while m > opts.newton_tol {
        if iters >= opts.newton_max_iter {
            return Err(Error::Wave(format!("Newton did not converge: residual {m:e}")));
        }
        iters += 1;
        let a = assemble_linearization(&grid, model, c, &x);
        let lu = a.factor()?;
        let b = unknown_dz(&grid, &x);
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let (dx, dc) = bordered_solve(&a, &lu, &b, &q, &rhs, -phase(&x), 2);
        let mut lambda = 1.0;
        loop {
            let xt: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + lambda * d).collect();
            let ct = c + lambda * dc;
            let opt = grid.assemble_operator(ct);
            let rt = profile_residual(&opt, model, &ys, &xt);
            let mt = merit(&rt, phase(&xt));
            if mt < m || lambda < 1e-3 {
                if !mt.is_finite() {
                    return Err(Error::Wave("Newton produced non-finite values".into()));
                }
                x = xt;
                c = ct;
                op = opt;
                r = rt;
                m = mt;
                break;
            }
            lambda *= 0.5;
        }
    }
    let _ = &op;
    Ok((Field::scatter_unknowns(&grid, &x), c, sup(&r), iters))
}

/// Coordinate of the half-height point of the section sup, found on its
/// monotone cubic interpolant.
pub fn half_height_point(u: &Field) -> Result<f64> {
    let s = u.section_sup();
    let g = u.grid();
    let top = s.iter().cloned().fold(0.0f64, f64::max);
    let half = 0.5 * top;
    let k = (0..g.n_z - 1)
        .rev()
        .find(|&k| s[k] >= half && s[k + 1] < half)
        .ok_or_else(|| Error::Wave("profile has no half-height crossing".into()))?;
    let p = MonotoneCubic::new(&s, g.dz);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if p.eval(k as f64 + mid).0 >= half {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(g.z(k) + 0.5 * (lo + hi) * g.dz)
}

/// Every row non-increasing in z up to a few ulps.
pub fn is_monotone(u: &Field) -> bool {
    let g = u.grid();
    (0..g.n_y).all(|j| {
        let row = u.row(j);
        row.windows(2).all(|w| w[1] - w[0] <= 4.0 * f64::EPSILON * w[0].abs().max(w[1].abs()))
    })
}

/// Selected speed and profile from a front-like seed.
pub fn solve_wave(model: Model, seed: &Field, c_seed: f64) -> Result<WaveSolution> {
    solve_wave_with(model, seed, c_seed, &WaveOptions::default())
}

pub fn solve_wave_with(model: Model, seed: &Field, c_seed: f64, opts: &WaveOptions) -> Result<WaveSolution> {
    if !(c_seed > 0.0) {
        return Err(Error::Wave("seed speed must be positive".into()));
    }
    let frozen = freeze(&model, seed, c_seed, opts)?;
    let (u, c, residual, iters) = newton(model.as_ref(), &frozen.u, frozen.c, opts)?;
    if !(c > 0.0) {
        return Err(Error::Wave(format!("Newton converged to a non-positive speed {c}")));
    }
    let shift = half_height_point(&u)?;
    let grid = Arc::new(u.grid().shifted_window(shift));
    let u_bar = u.with_grid(&grid)?;
    let v_limit = CrossSectionField::from_values(&grid, u_bar.column(0).to_vec())?;
    let monotone = is_monotone(&u_bar);
    if !monotone {
        return Err(Error::Wave("computed profile is not monotone in z".into()));
    }
    Ok(WaveSolution {
        c_dag: c,
        u_bar,
        residual,
        normalization_shift: shift,
        v_limit,
        monotone,
        phase1_time: frozen.time,
        phase1_drift: frozen.drift,
        newton_iterations: iters,
    })
}

/// Shifted-tanh front `amplitude(y) * ½ (1 - tanh(steepness (z - offset)))`.
pub fn tanh_front(grid: &Arc<CylinderGrid>, plateau: &CrossSectionField, steepness: f64, offset: f64) -> Field {
    let p = plateau.values().to_vec();
    let mut u = Field::zeros(grid);
    for k in 0..grid.n_z {
        let s = 0.5 * (1.0 - (steepness * (grid.z(k) - offset)).tanh());
        for (j, pj) in p.iter().enumerate() {
            u.set(j, k, pj * s);
        }
    }
    apply_boundary(&u)
}

impl WaveSolution {
    pub fn grid(&self) -> &Arc<CylinderGrid> {
        self.u_bar.grid()
    }

    pub fn measure(&self) -> WeightedMeasure {
        WeightedMeasure { c: self.c_dag, z_ref: 0.0 }
    }

    /// Fourth-order centered `∂_z ū`.
    pub fn u_bar_z(&self) -> Field {
        partial_z_high(&self.u_bar)
    }

    /// Residual of the discrete profile equation, recomputed.
    pub fn profile_residual(&self, model: &dyn ReactionModel) -> f64 {
        let g = self.grid();
        let op = g.assemble_operator(self.c_dag);
        sup(&profile_residual(&op, model, &unknown_ys(g), &self.u_bar.gather_unknowns()))
    }

    /// Flat text: `key = value` header, then one value per line in storage order,
    /// all at 17 significant digits.
    pub fn to_text(&self) -> String {
        let g = self.grid();
        let mut s = String::new();
        let e = |x: f64| format!("{x:.16e}");
        let _ = writeln!(s, "format = cylfront-wave-1");
        let _ = writeln!(s, "c_dag = {}", e(self.c_dag));
        let _ = writeln!(s, "residual = {}", e(self.residual));
        let _ = writeln!(s, "normalization_shift = {}", e(self.normalization_shift));
        let _ = writeln!(s, "phase1_time = {}", e(self.phase1_time));
        let _ = writeln!(s, "phase1_drift = {}", e(self.phase1_drift));
        let _ = writeln!(s, "newton_iterations = {}", self.newton_iterations);
        let _ = writeln!(s, "n_y = {}", g.n_y);
        let _ = writeln!(s, "n_z = {}", g.n_z);
        let _ = writeln!(s, "y_min = {}", e(g.y_min));
        let _ = writeln!(s, "y_max = {}", e(g.y_max));
        let _ = writeln!(s, "z_min = {}", e(g.z_min));
        let _ = writeln!(s, "z_max = {}", e(g.z_max));
        let _ = writeln!(s, "dy = {}", e(g.dy));
        let _ = writeln!(s, "dz = {}", e(g.dz));
        let _ = writeln!(s, "bc_left = {}", g.bc_left);
        let _ = writeln!(s, "bc_right = {}", g.bc_right);
        let _ = writeln!(s, "values");
        for v in self.u_bar.values() {
            let _ = writeln!(s, "{}", e(*v));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<WaveSolution> {
        let mut header = std::collections::BTreeMap::new();
        let mut lines = text.lines().enumerate();
        for (no, line) in lines.by_ref() {
            let line = line.trim();
            if line == "values" {
                break;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config { line: no + 1, msg: format!("expected `key = value`, got `{line}`") })?;
            header.insert(k.trim().to_string(), (no + 1, v.trim().to_string()));
        }
        let get = |k: &str| -> Result<&(usize, String)> {
            header.get(k).ok_or_else(|| Error::Invalid(format!("wave file lacks `{k}`")))
        };
        let num = |k: &str| -> Result<f64> {
            let (no, v) = get(k)?;
            v.parse::<f64>().map_err(|_| Error::Config { line: *no, msg: format!("bad number for `{k}`") })
        };
        let int = |k: &str| -> Result<usize> {
            let (no, v) = get(k)?;
            v.parse::<usize>().map_err(|_| Error::Config { line: *no, msg: format!("bad integer for `{k}`") })
        };
        let bc = |k: &str| -> Result<Bc> { get(k)?.1.parse() };
        let grid = Arc::new(CylinderGrid {
            n_y: int("n_y")?,
            n_z: int("n_z")?,
            y_min: num("y_min")?,
            y_max: num("y_max")?,
            z_min: num("z_min")?,
            z_max: num("z_max")?,
            bc_left: bc("bc_left")?,
            bc_right: bc("bc_right")?,
            dy: num("dy")?,
            dz: num("dz")?,
        });
        let mut values = Vec::with_capacity(grid.len());
        for (no, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            values.push(line.parse::<f64>().map_err(|_| Error::Config { line: no + 1, msg: "bad value".into() })?);
        }
        let u_bar = Field::from_values(&grid, values)?;
        let v_limit = CrossSectionField::from_values(&grid, u_bar.column(0).to_vec())?;
        Ok(WaveSolution {
            c_dag: num("c_dag")?,
            residual: num("residual")?,
            normalization_shift: num("normalization_shift")?,
            phase1_time: num("phase1_time")?,
            phase1_drift: num("phase1_drift")?,
            newton_iterations: int("newton_iterations")?,
            monotone: is_monotone(&u_bar),
            v_limit,
            u_bar,
        })
    }
}

#[derive(Clone, Debug)]
pub struct TranslationReport {
    /// `(R, ‖T_R ū - ū‖)` samples.
    pub samples: Vec<(f64, f64)>,
    /// Smallest and largest `‖T_R ū - ū‖ / |R|` over `0 < |R| ≤ 1`.
    pub c1: f64,
    pub c2: f64,
    pub monotone: bool,
    /// `‖T_R ū - ū‖ / |R|` at the smallest sampled |R|.
    pub small_r_ratio: f64,
    pub uz_norm: f64,
}

/// Distances `‖T_R ū - ū‖_{L²_c}` on an R scan; monotonicity is checked in |R|
/// separately for each sign.
pub fn translation_bounds(ws: &WaveSolution, r_values: &[f64]) -> Result<TranslationReport> {
    let m = ws.measure();
    let rows = crate::weighted::RowInterpolants::new(&ws.u_bar);
    let mut samples = Vec::with_capacity(r_values.len());
    for &r in r_values {
        let shifted = if r == 0.0 { ws.u_bar.clone() } else { rows.translate(r)?.0 };
        let diff = shifted.zip_map(&ws.u_bar, |a, b| a - b)?;
        samples.push((r, crate::weighted::weighted_norm_l2(&diff, &m)?));
    }
    let mut pos: Vec<(f64, f64)> = samples.iter().cloned().filter(|s| s.0 >= 0.0).collect();
    let mut neg: Vec<(f64, f64)> = samples.iter().cloned().filter(|s| s.0 <= 0.0).map(|(r, d)| (-r, d)).collect();
    pos.sort_by(|a, b| a.0.total_cmp(&b.0));
    neg.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mono = |v: &[(f64, f64)]| v.windows(2).all(|w| w[1].1 >= w[0].1);
    let ratios: Vec<(f64, f64)> =
        samples.iter().filter(|s| s.0 != 0.0 && s.0.abs() <= 1.0).map(|s| (s.0.abs(), s.1 / s.0.abs())).collect();
    let c1 = ratios.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let c2 = ratios.iter().map(|r| r.1).fold(0.0f64, f64::max);
    let small_r_ratio = ratios.iter().min_by(|a, b| a.0.total_cmp(&b.0)).map_or(f64::NAN, |r| r.1);
    let uz_norm = crate::weighted::weighted_norm_l2(&ws.u_bar_z(), &m)?;
    Ok(TranslationReport { samples, c1, c2, monotone: mono(&pos) && mono(&neg), small_r_ratio, uz_norm })
}

/// Convenience: `T_R ū`.
pub fn translated_profile(ws: &WaveSolution, r: f64) -> Result<Field> {
    translate(&ws.u_bar, r)
}
