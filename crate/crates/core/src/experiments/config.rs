//! Strict `[section]` / `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::evolution::dt_max;
use crate::grid::{build_grid, CylinderGrid, GridConfig};
use crate::reaction::{Model, ModelSpec};

/// Every key with its default, as shown by `--help`.
pub const DEFAULTS_HELP: &str = "\
Config format: `[section]` headers and `key = value` lines; `#` starts a comment.
Unknown sections or keys and repeated keys are errors.

[grid]      n_y = 1 (1 selects the pure axial problem), n_z = 1701,
            y_min = 0, y_max = 1, z_min = -40, z_max = 45,
            bc_left = neumann, bc_right = neumann (neumann | dirichlet)
[model]     name = cubic (cubic | cubic_hetero | tristable)
            cubic: a = 0.25
            cubic_hetero: a0 = 0.25, a1 = 0.1
            tristable: k = 20, a1 = 0.05, b = 0.4, a2 = 0.68
[scenario]  name = (wave | converge | gap | secondary_speed | comparison | hypotheses);
            optional when the CLI verb names the scenario
[initial]   kind = tanh (tanh | plateau_noise), amplitude = 1, steepness = 0.5,
            offset = 2, noise = 0.01, alpha = 0.05, sandwich_shift = 5, pairs = 200
[run]       dt = 0.05 (must not exceed 0.5 / max|f_u|), horizon = 60, seed = 1,
            c_seed = 0.2, delta = 0.05, refine_check = true";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    Wave,
    Converge,
    Gap,
    SecondarySpeed,
    Comparison,
    Hypotheses,
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "wave" => Scenario::Wave,
            "converge" => Scenario::Converge,
            "gap" => Scenario::Gap,
            "secondary_speed" | "secondary-speed" => Scenario::SecondarySpeed,
            "comparison" | "compare" => Scenario::Comparison,
            "hypotheses" | "check-hypotheses" => Scenario::Hypotheses,
            other => return Err(Error::Invalid(format!("unknown scenario `{other}`"))),
        })
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Wave => "wave",
            Scenario::Converge => "converge",
            Scenario::Gap => "gap",
            Scenario::SecondarySpeed => "secondary_speed",
            Scenario::Comparison => "comparison",
            Scenario::Hypotheses => "hypotheses",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialKind {
    /// `amplitude v(y) ½(1 - tanh(steepness (z - offset)))`.
    Tanh,
    /// The tanh front plus seeded uniform noise of size `noise`, clipped to the bounds.
    PlateauNoise,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InitialData {
    pub kind: InitialKind,
    pub amplitude: f64,
    pub steepness: f64,
    pub offset: f64,
    pub noise: f64,
    /// Allowed deficit of the left plateau below v.
    pub alpha: f64,
    /// Shift R of the barrier pair `min(u0, T_{-R} ū)`, `max(u0, T_R ū)`; 0 disables.
    pub sandwich_shift: f64,
    pub pairs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    pub model: ModelSpec,
    pub scenario: Option<Scenario>,
    pub initial: InitialData,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub c_seed: f64,
    pub delta: f64,
    /// Repeat the gap computation at half the axial spacing.
    pub refine_check: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            grid: GridConfig::one_d(1701, -40.0, 45.0),
            model: ModelSpec::Cubic { a: 0.25 },
            scenario: None,
            initial: InitialData {
                kind: InitialKind::Tanh,
                amplitude: 1.0,
                steepness: 0.5,
                offset: 2.0,
                noise: 0.01,
                alpha: 0.05,
                sandwich_shift: 5.0,
                pairs: 200,
            },
            dt: 0.05,
            horizon: 60.0,
            seed: 1,
            c_seed: 0.2,
            delta: 0.05,
            refine_check: true,
        }
    }
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("grid", &["n_y", "n_z", "y_min", "y_max", "z_min", "z_max", "bc_left", "bc_right"]),
    ("model", &["name", "a", "a0", "a1", "k", "b", "a2"]),
    ("scenario", &["name"]),
    ("initial", &["kind", "amplitude", "steepness", "offset", "noise", "alpha", "sandwich_shift", "pairs"]),
    ("run", &["dt", "horizon", "seed", "c_seed", "delta", "refine_check"]),
];

struct Entry {
    line: usize,
    value: String,
}

struct Raw {
    entries: BTreeMap<String, Entry>,
}

impl Raw {
    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::Config { line: e.line, msg: format!("cannot parse `{}` for `{key}`", e.value) }),
        }
    }

    fn set<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.take(key)? {
            *slot = v;
        }
        Ok(())
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.entries.get(key).map(|e| e.line)
    }
}

fn tokenize(text: &str) -> Result<Raw> {
    let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
    let mut section: Option<&str> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| Error::Config { line, msg: format!("malformed section header `{content}`") })?
                .trim();
            section = Some(
                SECTIONS
                    .iter()
                    .find(|(s, _)| *s == name)
                    .map(|(s, _)| *s)
                    .ok_or_else(|| Error::Config { line, msg: format!("unknown section `[{name}]`") })?,
            );
            continue;
        }
        let (key, value) =
            content.split_once('=').ok_or_else(|| Error::Config { line, msg: format!("expected `key = value`, got `{content}`") })?;
        let (key, value) = (key.trim(), value.trim());
        let sec = section.ok_or_else(|| Error::Config { line, msg: format!("key `{key}` appears before any section header") })?;
        let allowed = SECTIONS.iter().find(|(s, _)| *s == sec).map(|(_, k)| *k).unwrap_or(&[]);
        if !allowed.contains(&key) {
            return Err(Error::Config { line, msg: format!("unknown key `{key}` in section [{sec}]") });
        }
        if value.is_empty() {
            return Err(Error::Config { line, msg: format!("empty value for `{key}`") });
        }
        let full = format!("{sec}.{key}");
        if let Some(prev) = entries.get(&full) {
            return Err(Error::Config { line, msg: format!("duplicate key `{full}` (first on line {}, again on line {line})", prev.line) });
        }
        entries.insert(full, Entry { line, value: value.to_string() });
    }
    Ok(Raw { entries })
}

fn model_from(raw: &mut Raw) -> Result<ModelSpec> {
    let name: String = raw.take("model.name")?.unwrap_or_else(|| "cubic".to_string());
    let mut spec = match name.as_str() {
        "cubic" => ModelSpec::Cubic { a: 0.25 },
        "cubic_hetero" => ModelSpec::CubicHetero { a0: 0.25, a1: 0.1 },
        "tristable" => ModelSpec::Tristable { k: 20.0, a1: 0.05, b: 0.4, a2: 0.68 },
        other => return Err(Error::Invalid(format!("unknown model `{other}`"))),
    };
    match &mut spec {
        ModelSpec::Cubic { a } => raw.set("model.a", a)?,
        ModelSpec::CubicHetero { a0, a1 } => {
            raw.set("model.a0", a0)?;
            raw.set("model.a1", a1)?;
        }
        ModelSpec::Tristable { k, a1, b, a2 } => {
            raw.set("model.k", k)?;
            raw.set("model.a1", a1)?;
            raw.set("model.b", b)?;
            raw.set("model.a2", a2)?;
        }
    }
    for key in ["model.a", "model.a0", "model.a1", "model.k", "model.b", "model.a2"] {
        if let Some(line) = raw.line(key) {
            return Err(Error::Config { line, msg: format!("key `{key}` does not apply to model `{name}`") });
        }
    }
    Ok(spec)
}

fn parse_bool(raw: &mut Raw, key: &str, slot: &mut bool) -> Result<()> {
    if let Some(line) = raw.line(key) {
        let v: String = raw.take(key)?.unwrap_or_default();
        *slot = match v.as_str() {
            "true" | "yes" | "1" => true,
            "false" | "no" | "0" => false,
            _ => return Err(Error::Config { line, msg: format!("`{key}` expects true or false") }),
        };
    }
    Ok(())
}

/// Parse and validate. Validation builds the grid and the model and checks
/// `dt` against the stability bound.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut raw = tokenize(text)?;
    let mut c = ExperimentConfig::default();
    let g = &mut c.grid;
    raw.set("grid.n_y", &mut g.n_y)?;
    raw.set("grid.n_z", &mut g.n_z)?;
    raw.set("grid.y_min", &mut g.y_min)?;
    raw.set("grid.y_max", &mut g.y_max)?;
    raw.set("grid.z_min", &mut g.z_min)?;
    raw.set("grid.z_max", &mut g.z_max)?;
    raw.set("grid.bc_left", &mut g.bc_left)?;
    raw.set("grid.bc_right", &mut g.bc_right)?;
    c.model = model_from(&mut raw)?;
    if let Some(line) = raw.line("scenario.name") {
        let s: String = raw.take("scenario.name")?.unwrap_or_default();
        c.scenario = Some(s.parse().map_err(|e: Error| Error::Config { line, msg: e.to_string() })?);
    }
    let i = &mut c.initial;
    if let Some(line) = raw.line("initial.kind") {
        let s: String = raw.take("initial.kind")?.unwrap_or_default();
        i.kind = match s.as_str() {
            "tanh" => InitialKind::Tanh,
            "plateau_noise" => InitialKind::PlateauNoise,
            other => return Err(Error::Config { line, msg: format!("unknown initial kind `{other}`") }),
        };
    }
    raw.set("initial.amplitude", &mut i.amplitude)?;
    raw.set("initial.steepness", &mut i.steepness)?;
    raw.set("initial.offset", &mut i.offset)?;
    raw.set("initial.noise", &mut i.noise)?;
    raw.set("initial.alpha", &mut i.alpha)?;
    raw.set("initial.sandwich_shift", &mut i.sandwich_shift)?;
    raw.set("initial.pairs", &mut i.pairs)?;
    let dt_line = raw.line("run.dt");
    raw.set("run.dt", &mut c.dt)?;
    raw.set("run.horizon", &mut c.horizon)?;
    raw.set("run.seed", &mut c.seed)?;
    raw.set("run.c_seed", &mut c.c_seed)?;
    raw.set("run.delta", &mut c.delta)?;
    parse_bool(&mut raw, "run.refine_check", &mut c.refine_check)?;
    debug_assert!(raw.entries.is_empty());

    if !(c.horizon > 0.0) {
        return Err(Error::Invalid(format!("horizon must be positive, got {}", c.horizon)));
    }
    if !(c.dt > 0.0) {
        return Err(Error::Invalid(format!("dt must be positive, got {}", c.dt)));
    }
    if !(c.c_seed > 0.0) || !(c.delta > 0.0) || !(c.initial.steepness > 0.0) {
        return Err(Error::Invalid("c_seed, delta and steepness must be positive".into()));
    }
    let (grid, model) = c.build()?;
    let bound = dt_max(model.as_ref(), &grid);
    if c.dt > bound {
        let msg = format!("dt = {} exceeds the stability bound dt_max = 0.5 / max|f_u| = {bound}", c.dt);
        return Err(match dt_line {
            Some(line) => Error::Config { line, msg },
            None => Error::Invalid(msg),
        });
    }
    Ok(c)
}

impl ExperimentConfig {
    pub fn build(&self) -> Result<(Arc<CylinderGrid>, Model)> {
        Ok((build_grid(&self.grid)?, self.model.build()?))
    }

    /// Scenario from the CLI verb, checked against the config's own entry.
    pub fn resolve_scenario(&self, verb: Option<Scenario>) -> Result<Scenario> {
        match (verb, self.scenario) {
            (Some(v), Some(c)) if v != c => Err(Error::Invalid(format!("verb `{v}` conflicts with config scenario `{c}`"))),
            (Some(v), _) => Ok(v),
            (None, Some(c)) => Ok(c),
            (None, None) => Err(Error::Invalid("no scenario given".into())),
        }
    }

    /// Fully populated `key = value` pairs in a stable order.
    pub fn echo(&self) -> Vec<(String, String)> {
        let g = &self.grid;
        let mut v: Vec<(String, String)> = vec![
            ("grid.n_y".into(), g.n_y.to_string()),
            ("grid.n_z".into(), g.n_z.to_string()),
            ("grid.y_min".into(), g.y_min.to_string()),
            ("grid.y_max".into(), g.y_max.to_string()),
            ("grid.z_min".into(), g.z_min.to_string()),
            ("grid.z_max".into(), g.z_max.to_string()),
            ("grid.bc_left".into(), g.bc_left.clone()),
            ("grid.bc_right".into(), g.bc_right.clone()),
            ("model.name".into(), self.model.name().into()),
        ];
        match &self.model {
            ModelSpec::Cubic { a } => v.push(("model.a".into(), a.to_string())),
            ModelSpec::CubicHetero { a0, a1 } => {
                v.push(("model.a0".into(), a0.to_string()));
                v.push(("model.a1".into(), a1.to_string()));
            }
            ModelSpec::Tristable { k, a1, b, a2 } => {
                v.push(("model.k".into(), k.to_string()));
                v.push(("model.a1".into(), a1.to_string()));
                v.push(("model.b".into(), b.to_string()));
                v.push(("model.a2".into(), a2.to_string()));
            }
        }
        if let Some(s) = self.scenario {
            v.push(("scenario.name".into(), s.to_string()));
        }
        let i = &self.initial;
        v.extend([
            ("initial.kind".into(), if i.kind == InitialKind::Tanh { "tanh" } else { "plateau_noise" }.to_string()),
            ("initial.amplitude".into(), i.amplitude.to_string()),
            ("initial.steepness".into(), i.steepness.to_string()),
            ("initial.offset".into(), i.offset.to_string()),
            ("initial.noise".into(), i.noise.to_string()),
            ("initial.alpha".into(), i.alpha.to_string()),
            ("initial.sandwich_shift".into(), i.sandwich_shift.to_string()),
            ("initial.pairs".into(), i.pairs.to_string()),
            ("run.dt".into(), self.dt.to_string()),
            ("run.horizon".into(), self.horizon.to_string()),
            ("run.seed".into(), self.seed.to_string()),
            ("run.c_seed".into(), self.c_seed.to_string()),
            ("run.delta".into(), self.delta.to_string()),
            ("run.refine_check".into(), self.refine_check.to_string()),
        ]);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_takes_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
    }

    #[test]
    fn comments_and_blank_lines() {
        let c = parse_config("# header\n\n[model]\nname = cubic # trailing\na = 0.1\n").unwrap();
        assert_eq!(c.model, ModelSpec::Cubic { a: 0.1 });
    }

    #[test]
    fn key_outside_section() {
        assert!(matches!(parse_config("a = 1\n"), Err(Error::Config { line: 1, .. })));
    }

    #[test]
    fn foreign_model_key() {
        let e = parse_config("[model]\nname = cubic\nb = 0.3\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 3, .. }), "{e}");
    }
}
