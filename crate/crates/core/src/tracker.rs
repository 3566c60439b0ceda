//! Front position as the optimal translation of the wave, and the diagnostics
//! recorded along a moving-frame run.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::evolution::{DissipationAccumulator, DissipationReport, Stepper};
use crate::grid::{laplacian_advection, Field};
use crate::reaction::{eval_f, Model};
use crate::wave::WaveSolution;
use crate::weighted::{partial_z_high, weighted_norm_h2, RowInterpolants, WeightedMeasure};

#[derive(Clone, Debug, PartialEq)]
pub struct FrontState {
    pub r: f64,
    /// `‖u - T_R ū‖²` in the weighted norm.
    pub m: f64,
    pub h_p: f64,
    pub h_pp: f64,
    /// `|h'| / (‖ū_z‖ max(√m, floor))`, the floor being the rounding level of `√m`.
    pub ortho_residual: f64,
    pub iterations: usize,
}

/// Template matching against a fixed wave. Holds the row interpolants of ū
/// and the quadrature weights of the weighted norm.
#[derive(Clone, Debug)]
pub struct FrontTracker {
    ws: Arc<WaveSolution>,
    rows: RowInterpolants,
    weights: Vec<f64>,
    uz_norm: f64,
    floor: f64,
}

impl FrontTracker {
    pub fn new(ws: Arc<WaveSolution>) -> Result<Self> {
        let g = ws.grid().clone();
        let wz = ws.measure().axial_weights(&g)?;
        let mu = g.y_weights();
        let mut weights = vec![0.0; g.len()];
        for k in 0..g.n_z {
            for j in 0..g.n_y {
                weights[k * g.n_y + j] = wz[k] * mu[j];
            }
        }
        let rows = RowInterpolants::new(&ws.u_bar);
        let uz = partial_z_high(&ws.u_bar);
        let uz_norm = weighted_sum(&weights, uz.values(), uz.values()).sqrt();
        let u_norm = weighted_sum(&weights, ws.u_bar.values(), ws.u_bar.values()).sqrt();
        Ok(FrontTracker { ws, rows, weights, uz_norm, floor: (1e3 * f64::EPSILON).sqrt() * u_norm })
    }

    pub fn wave(&self) -> &Arc<WaveSolution> {
        &self.ws
    }

    pub fn uz_norm(&self) -> f64 {
        self.uz_norm
    }

    pub fn measure(&self) -> WeightedMeasure {
        self.ws.measure()
    }

    fn check(&self, u: &Field) -> Result<()> {
        u.check_same_grid(&self.ws.u_bar)
    }

    pub fn h_value(&self, u: &Field, r: f64) -> Result<f64> {
        self.check(u)?;
        let (t, _) = self.rows.translate(r)?;
        let d: Vec<f64> = u.values().iter().zip(t.values()).map(|(a, b)| a - b).collect();
        Ok(0.5 * weighted_sum(&self.weights, &d, &d))
    }

    /// `(h', h'')`, with `h'' = c h' + <u_z, T_R ū_z>`.
    pub fn h_derivatives(&self, u: &Field, r: f64) -> Result<(f64, f64)> {
        self.check(u)?;
        let uz = partial_z_high(u);
        self.derivatives_with(u, &uz, r).map(|(hp, hpp, _)| (hp, hpp))
    }

    /// Returns `(h', h'', m)` given a precomputed `u_z`.
    fn derivatives_with(&self, u: &Field, uz: &Field, r: f64) -> Result<(f64, f64, f64)> {
        let (t, tz) = self.rows.translate(r)?;
        let mut hp = 0.0;
        let mut cross = 0.0;
        let mut m = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            let d = u.values()[i] - t.values()[i];
            hp += w * d * tz.values()[i];
            cross += w * uz.values()[i] * tz.values()[i];
            m += w * d * d;
        }
        Ok((hp, self.ws.c_dag * hp + cross, m))
    }

    /// Minimize `h(u, ·)` by safeguarded Newton on `h'` inside a sign-change bracket.
    pub fn locate_front(&self, u: &Field, r_seed: f64) -> Result<FrontState> {
        self.check(u)?;
        let g = u.grid();
        let limit = 0.5 * (g.z_max - g.z_min) - 2.0 * g.dz;
        let uz = partial_z_high(u);
        let eval = |r: f64| self.derivatives_with(u, &uz, r);
        let tol = |m: f64| 1e-12 * self.uz_norm * m.max(0.0).sqrt().max(self.floor);

        let (mut hp, mut hpp, mut m) = eval(r_seed)?;
        let mut r = r_seed;
        let mut iterations = 0;
        if hp.abs() > tol(m) {
            // bracket [lo, hi] with h'(lo) < 0 < h'(hi)
            let (mut lo, mut hi) = (r, r);
            let (mut flo, mut fhi) = (hp, hp);
            let mut width = 0.25;
            while !(flo < 0.0 && fhi > 0.0) {
                if flo >= 0.0 {
                    lo = (r - width).max(-limit);
                    flo = eval(lo)?.0;
                }
                if fhi <= 0.0 {
                    hi = (r + width).min(limit);
                    fhi = eval(hi)?.0;
                }
                if width > limit {
                    break;
                }
                width *= 2.0;
            }
            if !(flo < 0.0 && fhi > 0.0) {
                return Err(Error::Tracker("no sign change of h' in the search bracket".into()));
            }
            loop {
                iterations += 1;
                if iterations > 200 {
                    return Err(Error::Tracker(format!("front location stalled at h' = {hp:e}")));
                }
                let newton = if hpp > 0.0 { r - hp / hpp } else { f64::NAN };
                let mut next = if newton.is_finite() && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
                if next == r {
                    next = 0.5 * (lo + hi);
                }
                let (a, b, c) = eval(next)?;
                let improved = a.abs() < 0.5 * hp.abs();
                r = next;
                hp = a;
                hpp = b;
                m = c;
                if hp < 0.0 {
                    lo = r;
                } else {
                    hi = r;
                }
                if hp.abs() <= tol(m) || hi - lo <= 4.0 * f64::EPSILON * (1.0 + r.abs()) {
                    break;
                }
                if !improved && hi - lo > 1e-3 {
                    r = 0.5 * (lo + hi);
                    let (a, b, c) = eval(r)?;
                    hp = a;
                    hpp = b;
                    m = c;
                    if hp < 0.0 {
                        lo = r;
                    } else {
                        hi = r;
                    }
                    if hp.abs() <= tol(m) {
                        break;
                    }
                }
            }
        }
        if !(hpp > 0.0) {
            return Err(Error::Tracker(format!("h'' = {hpp:e} is not positive (outside the convexity regime)")));
        }
        if hpp < 0.5 * self.uz_norm * self.uz_norm * (self.ws.c_dag * r).exp() {
            return Err(Error::Tracker(format!(
                "h'' = {hpp:e} below half of the template curvature (outside the convexity regime)"
            )));
        }
        let ortho_residual = hp.abs() / (self.uz_norm * m.max(0.0).sqrt().max(self.floor));
        Ok(FrontState { r, m: m.max(0.0), h_p: hp, h_pp: hpp, ortho_residual, iterations })
    }

    /// Rightmost axial coordinate where `max_y |u - T_R ū| > delta`.
    pub fn z_delta(&self, u: &Field, r: f64, delta: f64) -> Result<f64> {
        self.check(u)?;
        let (t, _) = self.rows.translate(r)?;
        Ok(z_delta_of(u, &t, delta))
    }

    /// `-<u_t, T_R ū_z> / <u_z, T_R ū_z>`, both weighted.
    pub fn drift_quotient(&self, u: &Field, ut: &Field, r: f64) -> Result<f64> {
        let (_, tz) = self.rows.translate(r)?;
        let uz = partial_z_high(u);
        let num = weighted_sum(&self.weights, ut.values(), tz.values());
        let den = weighted_sum(&self.weights, uz.values(), tz.values());
        Ok(-num / den)
    }

    /// Deviation `u - T_R ū`.
    pub fn deviation(&self, u: &Field, r: f64) -> Result<Field> {
        let (t, _) = self.rows.translate(r)?;
        u.zip_map(&t, |a, b| a - b)
    }
}

fn weighted_sum(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}

fn z_delta_of(u: &Field, t: &Field, delta: f64) -> f64 {
    let g = u.grid();
    for k in (0..g.n_z).rev() {
        let worst = u.column(k).iter().zip(t.column(k)).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
        if worst > delta {
            return g.z(k);
        }
    }
    f64::NEG_INFINITY
}

pub fn h_value(u: &Field, ws: &WaveSolution, r: f64) -> Result<f64> {
    FrontTracker::new(Arc::new(ws.clone()))?.h_value(u, r)
}

pub fn h_derivatives(u: &Field, ws: &WaveSolution, r: f64) -> Result<(f64, f64)> {
    FrontTracker::new(Arc::new(ws.clone()))?.h_derivatives(u, r)
}

pub fn locate_front(u: &Field, ws: &WaveSolution, r_seed: f64) -> Result<FrontState> {
    FrontTracker::new(Arc::new(ws.clone()))?.locate_front(u, r_seed)
}

pub fn z_delta(u: &Field, ws: &WaveSolution, r: f64, delta: f64) -> Result<f64> {
    FrontTracker::new(Arc::new(ws.clone()))?.z_delta(u, r, delta)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    pub r: f64,
    pub m: f64,
    pub phi: f64,
    /// Backward difference of R; NaN at the first sample.
    pub drdt_fd: f64,
    pub drdt_quotient: f64,
    pub h2c_norm: f64,
    pub z_delta: f64,
    pub h_pp: f64,
    pub ortho_residual: f64,
}

#[derive(Clone, Debug, Default)]
pub struct FrontTrace {
    pub samples: Vec<TraceSample>,
    pub sigma_fit: Option<f64>,
    pub r_infinity: Option<f64>,
    pub fit_window: Option<(f64, f64)>,
    pub dissipation: Option<DissipationReport>,
    /// Reason the run stopped early, if it did.
    pub aborted: Option<String>,
}

impl FrontTrace {
    pub const CSV_HEADER: &'static str = "t,R,m,phi,dRdt_fd,dRdt_quotient,h2c_norm,z_delta";

    /// CSV with the fixed column set; `digits` significant digits per value.
    pub fn to_csv(&self, digits: usize) -> String {
        let p = digits.max(1) - 1;
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for x in &self.samples {
            let row = [x.t, x.r, x.m, x.phi, x.drdt_fd, x.drdt_quotient, x.h2c_norm, x.z_delta];
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.p$e}")).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TrackOptions {
    pub delta: f64,
    /// Relative tolerance for counting an increase of Φ.
    pub phi_tol: f64,
}

impl Default for TrackOptions {
    fn default() -> Self {
        TrackOptions { delta: 0.05, phi_tol: 1e-10 }
    }
}

/// Run the moving-frame evolution from `u0` up to `horizon`, re-locating the front
/// after every step. `observer` sees `(t, u)` after each accepted step; an error
/// from it or from the tracker ends the run with the trace recorded so far.
pub fn track_with(
    u0: &Field,
    tracker: &FrontTracker,
    stepper: &Stepper,
    horizon: f64,
    opts: TrackOptions,
    mut observer: impl FnMut(f64, &Field) -> Result<()>,
) -> Result<FrontTrace> {
    let ws = tracker.wave();
    if (stepper.speed() - ws.c_dag).abs() > 0.0 {
        return Err(Error::Invalid("stepper frame speed must equal the wave speed".into()));
    }
    let model = stepper.model().clone();
    let measure = ws.measure();
    let dt = stepper.dt();
    let steps = (horizon / dt).round() as usize;
    let mut acc = DissipationAccumulator::new(u0, model.clone(), &measure, opts.phi_tol)?;
    let mut trace = FrontTrace::default();
    let mut u = u0.clone();
    let first = tracker.locate_front(&u, 0.0)?;
    let phi0 = crate::evolution::energy_parts(&u, model.as_ref(), acc.weights()).phi;
    trace.samples.push(sample(tracker, &model, &u, 0.0, &first, phi0, f64::NAN, opts.delta, &measure)?);
    let mut prev_r = first.r;
    for n in 1..=steps {
        let t = n as f64 * dt;
        let next = match stepper.advance(&u) {
            Ok((v, _)) => v,
            Err(e) => {
                trace.aborted = Some(format!("step at t = {t}: {e}"));
                break;
            }
        };
        let e = acc.push(&u, &next, dt);
        u = next;
        let state = match tracker.locate_front(&u, prev_r) {
            Ok(s) => s,
            Err(e) => {
                trace.aborted = Some(format!("tracking lost at t = {t}: {e}"));
                break;
            }
        };
        let fd = (state.r - prev_r) / dt;
        prev_r = state.r;
        trace.samples.push(sample(tracker, &model, &u, t, &state, e.phi, fd, opts.delta, &measure)?);
        if let Err(e) = observer(t, &u) {
            trace.aborted = Some(format!("observer at t = {t}: {e}"));
            break;
        }
    }
    trace.dissipation = Some(acc.report());
    Ok(trace)
}

#[allow(clippy::too_many_arguments)]
fn sample(
    tracker: &FrontTracker,
    model: &Model,
    u: &Field,
    t: f64,
    s: &FrontState,
    phi: f64,
    drdt_fd: f64,
    delta: f64,
    measure: &WeightedMeasure,
) -> Result<TraceSample> {
    let ws = tracker.wave();
    let ut = laplacian_advection(u, ws.c_dag).zip_map(&eval_f(model.as_ref(), u)?, |a, b| a + b)?;
    let ut = crate::grid::apply_boundary(&ut);
    let dev = tracker.deviation(u, s.r)?;
    Ok(TraceSample {
        t,
        r: s.r,
        m: s.m,
        phi,
        drdt_fd,
        drdt_quotient: tracker.drift_quotient(u, &ut, s.r)?,
        h2c_norm: weighted_norm_h2(&dev, measure)?,
        z_delta: z_delta_of(u, &tracker.rows.translate(s.r)?.0, delta),
        h_pp: s.h_pp,
        ortho_residual: s.ortho_residual,
    })
}

pub fn track(u0: &Field, ws: Arc<WaveSolution>, stepper: &Stepper, horizon: f64) -> Result<FrontTrace> {
    let tracker = FrontTracker::new(ws)?;
    track_with(u0, &tracker, stepper, horizon, TrackOptions::default(), |_, _| Ok(()))
}

/// Least-squares line `y = slope x + intercept` with coefficient of determination.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n: usize,
}

pub fn line_fit(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return Err(Error::Fit(format!("need at least two paired samples, got {n}")));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Fit("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    Ok(LineFit { slope, intercept, r2, n })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayFit {
    pub sigma: f64,
    pub quality: f64,
    pub window: (f64, f64),
    pub n: usize,
    /// `quality >= 0.99`.
    pub exponential: bool,
}

pub const MIN_FIT_SAMPLES: usize = 20;

/// Fit window of a decaying squared norm: from the first time it falls below a
/// tenth of its initial value to the last time it stays above `1e3 eps scale`.
pub fn decay_window(ts: &[f64], m: &[f64], scale: f64) -> Result<(usize, usize)> {
    let m0 = *m.first().ok_or_else(|| Error::Fit("empty series".into()))?;
    let floor = 1e3 * f64::EPSILON * scale;
    let lo = m.iter().position(|v| *v < 0.1 * m0).ok_or_else(|| Error::Fit("series never drops below 10% of its start".into()))?;
    let hi = (lo..m.len()).take_while(|&i| m[i] > floor).last().ok_or_else(|| Error::Fit("series at floor".into()))?;
    if hi + 1 - lo < MIN_FIT_SAMPLES {
        return Err(Error::Fit(format!("only {} samples in the fit window", hi + 1 - lo)));
    }
    let _ = ts;
    Ok((lo, hi))
}

/// `sigma = -slope/2` of `log m` against t over the declared window.
pub fn fit_decay_series(ts: &[f64], m: &[f64], window: (usize, usize)) -> Result<DecayFit> {
    let (lo, hi) = window;
    if hi + 1 - lo < MIN_FIT_SAMPLES {
        return Err(Error::Fit(format!("only {} samples in the fit window", hi + 1 - lo)));
    }
    if m[lo..=hi].iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Fit("non-positive m in the fit window".into()));
    }
    let logs: Vec<f64> = m[lo..=hi].iter().map(|v| v.ln()).collect();
    let f = line_fit(&ts[lo..=hi], &logs)?;
    Ok(DecayFit { sigma: -0.5 * f.slope, quality: f.r2, window: (ts[lo], ts[hi]), n: f.n, exponential: f.r2 >= 0.99 })
}

/// Decay fit of `m` over the automatically selected window; scale is `‖ū‖²`.
pub fn fit_decay(trace: &FrontTrace, scale: f64) -> Result<DecayFit> {
    let ts: Vec<f64> = trace.samples.iter().map(|s| s.t).collect();
    let m: Vec<f64> = trace.samples.iter().map(|s| s.m).collect();
    let w = decay_window(&ts, &m, scale)?;
    fit_decay_series(&ts, &m, w)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailFit {
    pub r_infinity: f64,
    /// Rate of `|R - R_∞|`.
    pub rate: f64,
    pub quality: f64,
    pub n: usize,
}

/// Extrapolated limit of R over a sample window: the drift decays like
/// `e^{-λt}`, so `R_∞ = R_last + Ṙ_last / λ`. Then fits `log|R - R_∞|`.
pub fn fit_r_tail(trace: &FrontTrace, window: (usize, usize)) -> Result<TailFit> {
    let (lo, hi) = window;
    let s = &trace.samples[lo..=hi];
    let pts: Vec<(f64, f64)> = s.iter().filter(|x| x.drdt_fd.abs() > 0.0 && x.drdt_fd.is_finite()).map(|x| (x.t, x.drdt_fd.abs().ln())).collect();
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(Error::Fit("too few nonzero drift samples".into()));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let f = line_fit(&xs, &ys)?;
    let lambda = -f.slope;
    if !(lambda > 0.0) {
        return Err(Error::Fit(format!("drift is not decaying (rate {lambda:e})")));
    }
    let last = s.last().unwrap();
    // the backward difference is centered half a step earlier
    let dt = last.t - s[s.len() - 2].t;
    let drift_last = last.drdt_fd * (-lambda * 0.5 * dt).exp();
    let r_inf = last.r + drift_last / lambda;
    let tail: Vec<(f64, f64)> =
        s.iter().map(|x| (x.t, (x.r - r_inf).abs())).filter(|(_, d)| *d > 1e3 * f64::EPSILON * (1.0 + r_inf.abs())).map(|(t, d)| (t, d.ln())).collect();
    if tail.len() < MIN_FIT_SAMPLES {
        return Err(Error::Fit("too few samples above the rounding floor".into()));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = tail.into_iter().unzip();
    let g = line_fit(&xs, &ys)?;
    Ok(TailFit { r_infinity: r_inf, rate: -g.slope, quality: g.r2, n: g.n })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Envelope {
    /// `z_δ(t) ≤ z0 + a - b t` on every finite sample.
    pub z0: f64,
    pub a: f64,
    pub b: f64,
    pub finite_samples: usize,
}

/// Linear upper envelope of a `z_δ` series: slope from least squares on the
/// finite samples, offset raised until every sample lies below.
pub fn z_delta_envelope(ts: &[f64], zs: &[f64]) -> Result<Envelope> {
    let pts: Vec<(f64, f64)> = ts.iter().cloned().zip(zs.iter().cloned()).filter(|(_, z)| z.is_finite()).collect();
    let z0 = pts.first().map(|p| p.1).ok_or_else(|| Error::Fit("z_delta never finite".into()))?;
    if pts.len() < 3 {
        return Err(Error::Fit(format!("only {} finite z_delta samples", pts.len())));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.iter().cloned().unzip();
    let f = line_fit(&xs, &ys)?;
    let b = -f.slope;
    let a = pts.iter().map(|(t, z)| z - z0 + b * t).fold(f64::NEG_INFINITY, f64::max);
    Ok(Envelope { z0, a, b, finite_samples: pts.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_decay_is_exact() {
        let ts: Vec<f64> = (0..100).map(|i| i as f64 * 0.1).collect();
        let m: Vec<f64> = ts.iter().map(|t| 3.0 * (-0.8 * t).exp()).collect();
        let f = fit_decay_series(&ts, &m, (0, 99)).unwrap();
        assert!((f.sigma - 0.4).abs() < 1e-12);
        assert!(f.quality > 1.0 - 1e-12);
    }

    #[test]
    fn short_window_rejected() {
        let ts: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let m = vec![1.0; 10];
        assert!(fit_decay_series(&ts, &m, (0, 9)).is_err());
    }
}
