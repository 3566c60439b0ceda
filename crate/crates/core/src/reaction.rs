//! Reaction terms f(u, y), their derivatives and the cutoff potential V.

use std::fmt::Debug;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{CrossSectionField, CylinderGrid, Field};

pub trait ReactionModel: Send + Sync + Debug {
    fn label(&self) -> String;

    fn f(&self, u: f64, y: f64) -> f64;

    fn f_u(&self, u: f64, y: f64) -> f64;

    /// `V(u, y) = -∫_0^u f(s, y) χ_[0,1](s) ds`. The default integrates numerically.
    fn potential(&self, u: f64, y: f64) -> f64 {
        let top = u.clamp(0.0, 1.0);
        -adaptive_simpson(&|s| self.f(s, y), 0.0, top, 1e-13, 40)
    }

    fn holder_exponent(&self) -> f64 {
        1.0
    }

    /// Invariant interval of the evolution at section coordinate y.
    fn bounds(&self, _y: f64) -> (f64, f64) {
        (0.0, 1.0)
    }
}

pub type Model = Arc<dyn ReactionModel>;

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let m = 0.5 * (a + b);
    (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    if a == b {
        return 0.0;
    }
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let left = simpson(f, a, m);
        let right = simpson(f, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, m, left, 0.5 * tol, depth - 1) + rec(f, m, b, right, 0.5 * tol, depth - 1)
        }
    }
    rec(f, a, b, simpson(f, a, b), tol, depth)
}

/// Dense polynomial in ascending powers.
#[derive(Clone, Debug, PartialEq)]
struct Poly(Vec<f64>);

impl Poly {
    fn from_roots(scale: f64, roots: &[f64]) -> Poly {
        let mut c = vec![scale];
        for r in roots {
            let mut next = vec![0.0; c.len() + 1];
            for (i, ci) in c.iter().enumerate() {
                next[i + 1] += ci;
                next[i] -= r * ci;
            }
            c = next;
        }
        Poly(c)
    }

    fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    fn derivative(&self) -> Poly {
        Poly(self.0.iter().enumerate().skip(1).map(|(i, c)| i as f64 * c).collect())
    }

    fn antiderivative(&self) -> Poly {
        let mut c = vec![0.0];
        c.extend(self.0.iter().enumerate().map(|(i, ci)| ci / (i + 1) as f64));
        Poly(c)
    }
}

/// `f(u) = u (1 - u)(u - a)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CubicBistable {
    pub a: f64,
}

impl CubicBistable {
    pub fn new(a: f64) -> Self {
        CubicBistable { a }
    }

    /// Closed-form front speed `(1 - 2a)/√2`.
    pub fn exact_speed(&self) -> f64 {
        (1.0 - 2.0 * self.a) / 2f64.sqrt()
    }

    /// Closed-form profile `1 / (1 + e^{ξ/√2})`.
    pub fn exact_profile(xi: f64) -> f64 {
        1.0 / (1.0 + (xi / 2f64.sqrt()).exp())
    }
}

fn cubic_f(a: f64, u: f64) -> f64 {
    u * (1.0 - u) * (u - a)
}

fn cubic_fu(a: f64, u: f64) -> f64 {
    -3.0 * u * u + 2.0 * (1.0 + a) * u - a
}

fn cubic_v(a: f64, u: f64) -> f64 {
    let s = u.clamp(0.0, 1.0);
    let s2 = s * s;
    -(-0.25 * s2 * s2 + (1.0 + a) * s2 * s / 3.0 - 0.5 * a * s2)
}

impl ReactionModel for CubicBistable {
    fn label(&self) -> String {
        format!("cubic(a={})", self.a)
    }
    fn f(&self, u: f64, _y: f64) -> f64 {
        cubic_f(self.a, u)
    }
    fn f_u(&self, u: f64, _y: f64) -> f64 {
        cubic_fu(self.a, u)
    }
    fn potential(&self, u: f64, _y: f64) -> f64 {
        cubic_v(self.a, u)
    }
}

/// Cubic with a section-dependent threshold `a(y) = a0 + a1 cos(π y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeterogeneousCubic {
    pub a0: f64,
    pub a1: f64,
}

impl HeterogeneousCubic {
    pub fn threshold(&self, y: f64) -> f64 {
        self.a0 + self.a1 * (std::f64::consts::PI * y).cos()
    }
}

impl ReactionModel for HeterogeneousCubic {
    fn label(&self) -> String {
        format!("cubic_hetero(a0={}, a1={})", self.a0, self.a1)
    }
    fn f(&self, u: f64, y: f64) -> f64 {
        cubic_f(self.threshold(y), u)
    }
    fn f_u(&self, u: f64, y: f64) -> f64 {
        cubic_fu(self.threshold(y), u)
    }
    fn potential(&self, u: f64, y: f64) -> f64 {
        cubic_v(self.threshold(y), u)
    }
}

/// Quintic with stable zeros 0, b, 1: `f(u) = -k u (u - a1)(u - b)(u - a2)(u - 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tristable {
    pub k: f64,
    pub a1: f64,
    pub b: f64,
    pub a2: f64,
    poly: Poly,
    dpoly: Poly,
    ipoly: Poly,
}

impl Tristable {
    pub fn new(k: f64, a1: f64, b: f64, a2: f64) -> Result<Self> {
        if !(k > 0.0 && 0.0 < a1 && a1 < b && b < a2 && a2 < 1.0) {
            return Err(Error::Invalid("tristable needs k > 0 and 0 < a1 < b < a2 < 1".into()));
        }
        let poly = Poly::from_roots(-k, &[0.0, a1, b, a2, 1.0]);
        let dpoly = poly.derivative();
        let ipoly = poly.antiderivative();
        Ok(Tristable { k, a1, b, a2, poly, dpoly, ipoly })
    }
}

impl ReactionModel for Tristable {
    fn label(&self) -> String {
        format!("tristable(k={}, a1={}, b={}, a2={})", self.k, self.a1, self.b, self.a2)
    }
    fn f(&self, u: f64, _y: f64) -> f64 {
        self.poly.eval(u)
    }
    fn f_u(&self, u: f64, _y: f64) -> f64 {
        self.dpoly.eval(u)
    }
    fn potential(&self, u: f64, _y: f64) -> f64 {
        -self.ipoly.eval(u.clamp(0.0, 1.0))
    }
}

/// Reaction seen by a perturbation `h = u - v` of a cross-section critical point v:
/// `g(h, y) = f(v + h, y) - f(v, y)`, with potential `V(v+h) - V(v) - V'(v) h`.
#[derive(Clone, Debug)]
pub struct ShiftedReaction {
    base: Model,
    v: Vec<f64>,
    y_min: f64,
    dy: f64,
}

impl ShiftedReaction {
    pub fn new(base: Model, v: &CrossSectionField) -> Self {
        let g = v.grid();
        ShiftedReaction { base, v: v.values().to_vec(), y_min: g.y_min, dy: g.dy }
    }

    fn v_at(&self, y: f64) -> f64 {
        if self.v.len() == 1 || self.dy == 0.0 {
            return self.v[0];
        }
        let j = ((y - self.y_min) / self.dy).round().clamp(0.0, (self.v.len() - 1) as f64) as usize;
        self.v[j]
    }
}

impl ReactionModel for ShiftedReaction {
    fn label(&self) -> String {
        format!("shifted[{}]", self.base.label())
    }
    fn f(&self, h: f64, y: f64) -> f64 {
        let v = self.v_at(y);
        self.base.f(v + h, y) - self.base.f(v, y)
    }
    fn f_u(&self, h: f64, y: f64) -> f64 {
        self.base.f_u(self.v_at(y) + h, y)
    }
    fn potential(&self, h: f64, y: f64) -> f64 {
        let v = self.v_at(y);
        let chi = if (0.0..=1.0).contains(&v) { 1.0 } else { 0.0 };
        self.base.potential(v + h, y) - self.base.potential(v, y) + chi * self.base.f(v, y) * h
    }
    fn holder_exponent(&self) -> f64 {
        self.base.holder_exponent()
    }
    fn bounds(&self, y: f64) -> (f64, f64) {
        let (_, hi) = self.base.bounds(y);
        (0.0, hi - self.v_at(y))
    }
}

/// Named model with parameters, as selected in a config file.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelSpec {
    Cubic { a: f64 },
    CubicHetero { a0: f64, a1: f64 },
    Tristable { k: f64, a1: f64, b: f64, a2: f64 },
}

impl ModelSpec {
    pub fn build(&self) -> Result<Model> {
        Ok(match self {
            ModelSpec::Cubic { a } => Arc::new(CubicBistable::new(*a)),
            ModelSpec::CubicHetero { a0, a1 } => Arc::new(HeterogeneousCubic { a0: *a0, a1: *a1 }),
            ModelSpec::Tristable { k, a1, b, a2 } => Arc::new(Tristable::new(*k, *a1, *b, *a2)?),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Cubic { .. } => "cubic",
            ModelSpec::CubicHetero { .. } => "cubic_hetero",
            ModelSpec::Tristable { .. } => "tristable",
        }
    }
}

pub fn eval_f(model: &dyn ReactionModel, u: &Field) -> Result<Field> {
    let g = u.grid();
    let mut out = Field::zeros(g);
    for k in 0..g.n_z {
        for j in 0..g.n_y {
            let v = model.f(u.get(j, k), g.y(j));
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("{} at node ({j}, {k})", model.label())));
            }
            out.set(j, k, v);
        }
    }
    Ok(out)
}

pub fn eval_v(model: &dyn ReactionModel, u: f64, y: f64) -> f64 {
    model.potential(u, y)
}

/// Section coordinates at which a model is sampled.
pub fn sample_ys(grid: &CylinderGrid) -> Vec<f64> {
    (0..grid.n_y).map(|j| grid.y(j)).collect()
}

/// `max |f_u|` over `u` in the model bounds and the section nodes.
pub fn max_abs_fu(model: &dyn ReactionModel, grid: &CylinderGrid) -> f64 {
    let mut m = 0.0f64;
    for y in sample_ys(grid) {
        let (lo, hi) = model.bounds(y);
        let n = 2000;
        for i in 0..=n {
            let u = lo + (hi - lo) * i as f64 / n as f64;
            m = m.max(model.f_u(u, y).abs());
        }
    }
    m
}

#[derive(Clone, Debug)]
pub struct HypothesisReport {
    pub label: String,
    pub h1_pass: bool,
    /// Largest of `|f(0,y)|` and `max(f(1,y), 0)` over the sample.
    pub h1_defect: f64,
    pub holder_exponent: f64,
    pub holder_quotient_f: f64,
    pub holder_quotient_fu: f64,
    /// `(y, ∫_0^1 f(u, y) du)` per sampled section point.
    pub integrals: Vec<(f64, f64)>,
    pub integral_positive: bool,
}

/// Sample f on a (u, y) lattice and report (H1), a Hölder quotient heuristic and
/// the sign of `∫_0^1 f`.
pub fn check_hypotheses(model: &dyn ReactionModel, grid: &CylinderGrid) -> HypothesisReport {
    let gamma = model.holder_exponent();
    let n = 2000;
    let du = 1.0 / n as f64;
    let mut defect = 0.0f64;
    let mut qf = 0.0f64;
    let mut qfu = 0.0f64;
    let mut integrals = Vec::new();
    for y in sample_ys(grid) {
        defect = defect.max(model.f(0.0, y).abs()).max(model.f(1.0, y).max(0.0));
        let mut prev = (model.f(0.0, y), model.f_u(0.0, y));
        let mut integral = 0.0;
        for i in 1..=n {
            let u = i as f64 * du;
            let cur = (model.f(u, y), model.f_u(u, y));
            qf = qf.max((cur.0 - prev.0).abs() / du.powf(gamma));
            qfu = qfu.max((cur.1 - prev.1).abs() / du.powf(gamma));
            let mid = model.f(u - 0.5 * du, y);
            integral += du / 6.0 * (prev.0 + 4.0 * mid + cur.0);
            prev = cur;
        }
        integrals.push((y, integral));
    }
    HypothesisReport {
        label: model.label(),
        h1_pass: defect <= 1e-14,
        h1_defect: defect,
        holder_exponent: gamma,
        holder_quotient_f: qf,
        holder_quotient_fu: qfu,
        integral_positive: integrals.iter().all(|(_, v)| *v > 0.0),
        integrals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_values() {
        let m = CubicBistable::new(0.25);
        assert_eq!(m.f(0.0, 0.0), 0.0);
        assert_eq!(m.f(1.0, 0.0), 0.0);
        assert_eq!(m.f(0.5, 0.0), 1.0 / 16.0);
        assert!((m.potential(1.0, 0.0) + 1.0 / 24.0).abs() < 1e-15);
        assert_eq!(m.potential(2.0, 0.0), m.potential(1.0, 0.0));
    }

    #[test]
    fn tristable_polynomial_matches_product() {
        let t = Tristable::new(20.0, 0.05, 0.4, 0.68).unwrap();
        for u in [0.0, 0.1, 0.33, 0.5, 0.9, 1.0] {
            let direct = -20.0 * u * (u - 0.05) * (u - 0.4) * (u - 0.68) * (u - 1.0);
            assert!((t.f(u, 0.0) - direct).abs() < 1e-13);
        }
    }

    #[test]
    fn default_potential_quadrature() {
        #[derive(Debug)]
        struct Plain;
        impl ReactionModel for Plain {
            fn label(&self) -> String {
                "plain".into()
            }
            fn f(&self, u: f64, _y: f64) -> f64 {
                cubic_f(0.25, u)
            }
            fn f_u(&self, u: f64, _y: f64) -> f64 {
                cubic_fu(0.25, u)
            }
        }
        for u in [0.0, 0.3, 0.8, 1.0, 1.7] {
            assert!((Plain.potential(u, 0.0) - cubic_v(0.25, u)).abs() < 1e-12);
        }
    }
}
