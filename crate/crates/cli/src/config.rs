//! Line-oriented run configuration.
//!
//! ```text
//! # comment
//! experiment = contraction
//! seed = 7
//!
//! [grid]
//! m = 128
//!
//! [solver]
//! lambda = 0.5
//! snapshot_times = 0.25, 0.5, 1
//! ```
//!
//! Keys inside a `[section]` are prefixed with the section name; a dotted key
//! such as `solver.lambda = 0.5` works at top level too. Values are bare
//! words, numbers or comma-separated number lists (optionally bracketed).
//! Unknown keys, repeated keys and out-of-range values are errors.
//!
//! Defaults:
//!
//! | key | default | allowed |
//! |---|---|---|
//! | `experiment` | required | `simulate`, `verify-operator`, `contraction`, `bv`, `moments`, `rates`, `kinetic-residual`, `viscosity-sweep` |
//! | `seed` | 0 | any `u64` |
//! | `output.dir` | `fraclaws-out` | path |
//! | `output.fields` | `false` | write binary snapshots / measure grids |
//! | `grid.m` | 128 | power of two, ≥ 8 |
//! | `solver.lambda` | 0.5 | (0, 1) or `off` |
//! | `solver.tau` | 0.01 | [0, ∞) |
//! | `solver.dt` | `auto` (stable step) | (0, ∞) |
//! | `solver.t_end` | 1 | [0, ∞) |
//! | `solver.flux_scheme` | `lax-friedrichs` | `engquist-osher` |
//! | `solver.regularization` | `linked` | `raw`, or a fixed scale in (0, 1] |
//! | `solver.state_bound` | 4 | (0, ∞) |
//! | `solver.snapshot_times` | `auto`: 0 and ten equal steps to `t_end` | list in [0, t_end] |
//! | `flux.kind` | `burgers` | `zero`, `linear`, `sqrt-derivative` |
//! | `flux.speed` | 1 | any, used by `linear` |
//! | `diffusion.kind` | `holder` | `none`, `constant`, `porous`, `indicator` |
//! | `diffusion.scale` | 1 | [0, ∞) |
//! | `diffusion.gamma` | 0.6 | (0, 1], used by `holder` |
//! | `diffusion.threshold` | 0.5 | (0, ∞), used by `indicator` |
//! | `noise.kind` | `multiplicative` | `none`, `additive`, `multiplicative-spatial` |
//! | `noise.amplitude` | 0.2 | [0, ∞) |
//! | `noise.truncation` | 16 | [0, 4096] |
//! | `initial.shape` | `sin` | `cos`, `bump`, `constant` |
//! | `initial.amplitude` | 1 | any |
//! | `initial.mode` | 1 | [0, m/2) |
//! | `initial.offset` | 0 | any |
//! | `initial_b.*` | `cos`, 0.5, 2, 0.3 | second datum for `contraction` |
//! | `mc.num_mc` | 128 | [2, ∞) |
//! | `moments.p` | 4 | [2, ∞) |
//! | `moments.check_doubling` | `true` | bool |
//! | `rates.kind` | `diffusion` | `initial`, `lambda`, `flux`, `noise` |
//! | `rates.eps` | 0.01, 0.02, 0.05, 0.1, 0.2 | nonnegative list |
//! | `rates.t_eval` | `t_end` | (0, t_end] |
//! | `rates.r1` | 1 | (0, ∞) |
//! | `kinetic.num_paths` | 8 | [2, ∞) |
//! | `kinetic.required_factor` | 2 | [1, ∞) |
//! | `kinetic.xi_bins` | 64 | [1, ∞) |
//! | `sweep.taus` | 0.01, 0.005, 0.0025 | nonincreasing, ≥ 0 |
//! | `operator.r` | `h` (grid spacing) | (0, π) |
//! | `operator.z_max` | 50 | (r, ∞) |
//! | `operator.tolerance` | 1e-3 | (0, ∞) |
//! | `tolerances.relative` | 0.05 | [0, ∞) |
//! | `tolerances.se_multiplier` | 3 | [0, ∞) |
//! | `tolerances.slope` | 0.15 | [0, ∞) |

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use fraclaws_core::coefficients::{DiffusionSpec, FluxSpec, NoiseSpec};
use fraclaws_core::experiments::{PerturbationKind, Tolerances};
use fraclaws_core::solver::{FluxRegularization, FluxScheme, SolverSettings};
use fraclaws_core::torus::{Field, TorusGrid};
use serde::Serialize;

/// A configuration error, with the offending line when there is one.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(line: Option<usize>, message: impl Into<String>) -> ConfigError {
    ConfigError { line, message: message.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Simulate,
    VerifyOperator,
    Contraction,
    Bv,
    Moments,
    Rates,
    KineticResidual,
    ViscositySweep,
}

impl Experiment {
    const ALL: [(&'static str, Experiment); 8] = [
        ("simulate", Experiment::Simulate),
        ("verify-operator", Experiment::VerifyOperator),
        ("contraction", Experiment::Contraction),
        ("bv", Experiment::Bv),
        ("moments", Experiment::Moments),
        ("rates", Experiment::Rates),
        ("kinetic-residual", Experiment::KineticResidual),
        ("viscosity-sweep", Experiment::ViscositySweep),
    ];

    pub fn name(self) -> &'static str {
        Self::ALL.iter().find(|(_, e)| *e == self).map(|(n, _)| *n).expect("listed")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub fields: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "scale")]
pub enum Regularization {
    Linked,
    Raw,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverSection {
    /// `None` switches the fractional term off.
    pub lambda: Option<f64>,
    pub tau: f64,
    /// `None` takes the stable step.
    pub dt: Option<f64>,
    pub t_end: f64,
    pub flux_scheme: FluxScheme,
    pub regularization: Regularization,
    pub state_bound: f64,
    /// Resolved snapshot times, always including 0 and `t_end`.
    pub snapshot_times: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FluxKind {
    Zero,
    Linear,
    Burgers,
    SqrtDerivative,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FluxSection {
    pub kind: FluxKind,
    pub speed: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiffusionKind {
    None,
    Constant,
    Holder,
    Porous,
    Indicator,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiffusionSection {
    pub kind: DiffusionKind,
    pub scale: f64,
    pub gamma: f64,
    pub threshold: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    None,
    Additive,
    Multiplicative,
    MultiplicativeSpatial,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoiseSection {
    pub kind: NoiseKind,
    pub amplitude: f64,
    pub truncation: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    Sin,
    Cos,
    /// `exp(-4 (x - π)²)`.
    Bump,
    Constant,
}

/// `offset + amplitude · shape(mode · x)`; `constant` ignores `mode`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Profile {
    pub shape: Shape,
    pub amplitude: f64,
    pub mode: usize,
    pub offset: f64,
}

impl Profile {
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.mode as f64;
        let s = match self.shape {
            Shape::Sin => (n * x).sin(),
            Shape::Cos => (n * x).cos(),
            Shape::Bump => fraclaws_core::experiments::initial_bump(x),
            Shape::Constant => 1.0,
        };
        self.offset + self.amplitude * s
    }

    pub fn field(&self, grid: TorusGrid<f64>) -> Field<f64> {
        Field::from_fn(grid, |x| self.eval(x))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McSection {
    pub num_mc: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentsSection {
    pub p: f64,
    pub check_doubling: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatesSection {
    pub kind: PerturbationKind,
    pub eps: Vec<f64>,
    pub t_eval: f64,
    pub r1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KineticSection {
    pub num_paths: usize,
    pub required_factor: f64,
    pub xi_bins: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSection {
    pub taus: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OperatorSection {
    pub r: f64,
    pub z_max: f64,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ToleranceSection {
    pub relative: f64,
    pub se_multiplier: f64,
    pub slope: f64,
}

/// Fully resolved configuration; serialized verbatim into the summary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub output: OutputSection,
    pub grid_m: usize,
    pub solver: SolverSection,
    pub flux: FluxSection,
    pub diffusion: DiffusionSection,
    pub noise: NoiseSection,
    pub initial: Profile,
    pub initial_b: Profile,
    pub mc: McSection,
    pub moments: MomentsSection,
    pub rates: RatesSection,
    pub kinetic: KineticSection,
    pub sweep: SweepSection,
    pub operator: OperatorSection,
    pub tolerances: ToleranceSection,
}

struct Entry {
    value: String,
    line: usize,
    used: bool,
}

/// Typed access to the raw entries; every lookup registers the key as known.
struct Reader {
    entries: BTreeMap<String, Entry>,
    known: Vec<&'static str>,
}

impl Reader {
    fn raw(&mut self, key: &'static str) -> Option<(String, usize)> {
        self.known.push(key);
        self.entries.get_mut(key).map(|e| {
            e.used = true;
            (e.value.clone(), e.line)
        })
    }

    fn f64_in(&mut self, key: &'static str, default: f64, allowed: &str, ok: impl Fn(f64) -> bool) -> Result<f64, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some((v, line)) => parse_number(key, &v, line, allowed, &ok),
        }
    }

    /// A number, or `None` when the value is the given keyword.
    fn f64_or(
        &mut self,
        key: &'static str,
        keyword: &str,
        default: Option<f64>,
        allowed: &str,
        ok: impl Fn(f64) -> bool,
    ) -> Result<Option<f64>, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some((v, _)) if v == keyword => Ok(None),
            Some((v, line)) => parse_number(key, &v, line, allowed, &ok).map(Some),
        }
    }

    fn usize_in(&mut self, key: &'static str, default: usize, allowed: &str, ok: impl Fn(usize) -> bool) -> Result<usize, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some((v, line)) => {
                let n: usize =
                    v.parse().map_err(|_| err(Some(line), format!("`{key}` expects a nonnegative integer, found `{v}`")))?;
                if ok(n) {
                    Ok(n)
                } else {
                    Err(err(Some(line), format!("`{key}` = {n} outside allowed range {allowed}")))
                }
            }
        }
    }

    fn bool(&mut self, key: &'static str, default: bool) -> Result<bool, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some((v, line)) => match v.as_str() {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => Err(err(Some(line), format!("`{key}` expects true or false, found `{v}`"))),
            },
        }
    }

    fn word<E: Copy>(&mut self, key: &'static str, default: E, choices: &[(&str, E)]) -> Result<E, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some((v, line)) => lookup(key, &v, line, choices),
        }
    }

    fn list(&mut self, key: &'static str, default: &[f64], allowed: &str, ok: impl Fn(f64) -> bool) -> Result<Vec<f64>, ConfigError> {
        match self.raw(key) {
            None => Ok(default.to_vec()),
            Some((v, line)) => parse_list(key, &v, line, allowed, &ok),
        }
    }

    fn string(&mut self, key: &'static str, default: &str) -> String {
        self.raw(key).map(|(v, _)| v).unwrap_or_else(|| default.to_string())
    }

    fn line_of(&self, key: &str) -> Option<usize> {
        self.entries.get(key).map(|e| e.line)
    }

    fn reject_unknown(&self) -> Result<(), ConfigError> {
        for (key, e) in &self.entries {
            if !e.used {
                let best = self
                    .known
                    .iter()
                    .map(|k| (strsim::jaro_winkler(key, k), *k))
                    .max_by(|a, b| a.0.total_cmp(&b.0));
                let hint = match best {
                    Some((score, k)) if score > 0.8 => format!("; did you mean `{k}`?"),
                    _ => String::new(),
                };
                return Err(err(Some(e.line), format!("unknown key `{key}`{hint}")));
            }
        }
        Ok(())
    }
}

fn parse_number(key: &str, v: &str, line: usize, allowed: &str, ok: &impl Fn(f64) -> bool) -> Result<f64, ConfigError> {
    let x: f64 = v.parse().map_err(|_| err(Some(line), format!("`{key}` expects a number, found `{v}`")))?;
    if x.is_finite() && ok(x) {
        Ok(x)
    } else {
        Err(err(Some(line), format!("`{key}` = {v} outside allowed range {allowed}")))
    }
}

fn parse_list(key: &str, v: &str, line: usize, allowed: &str, ok: &impl Fn(f64) -> bool) -> Result<Vec<f64>, ConfigError> {
    let inner = v.trim().trim_start_matches('[').trim_end_matches(']');
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner.split(',').map(|item| parse_number(key, item.trim(), line, allowed, ok)).collect()
}

fn lookup<E: Copy>(key: &str, v: &str, line: usize, choices: &[(&str, E)]) -> Result<E, ConfigError> {
    choices.iter().find(|(n, _)| *n == v).map(|(_, e)| *e).ok_or_else(|| {
        let names: Vec<&str> = choices.iter().map(|(n, _)| *n).collect();
        err(Some(line), format!("`{key}` = `{v}` is not one of: {}", names.join(", ")))
    })
}

fn split_lines(text: &str) -> Result<BTreeMap<String, Entry>, ConfigError> {
    let mut entries = BTreeMap::new();
    let mut section = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(Some(line), format!("unterminated section header `{content}`")))?
                .trim();
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return Err(err(Some(line), format!("invalid section name `{name}`")));
            }
            section = name.to_string();
            continue;
        }
        let (k, v) = content
            .split_once('=')
            .ok_or_else(|| err(Some(line), format!("expected `key = value`, found `{content}`")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(err(Some(line), "missing key before `=`"));
        }
        if v.is_empty() {
            return Err(err(Some(line), format!("missing value for `{k}`")));
        }
        let key = if section.is_empty() { k.to_string() } else { format!("{section}.{k}") };
        if let Some(prev) = entries.get(&key) {
            let prev: &Entry = prev;
            return Err(err(Some(line), format!("key `{key}` already set on line {}", prev.line)));
        }
        entries.insert(key, Entry { value: v.to_string(), line, used: false });
    }
    Ok(entries)
}

const SHAPES: [(&str, Shape); 4] =
    [("sin", Shape::Sin), ("cos", Shape::Cos), ("bump", Shape::Bump), ("constant", Shape::Constant)];

fn profile(r: &mut Reader, keys: [&'static str; 4], default: Profile, m: usize) -> Result<Profile, ConfigError> {
    let shape = r.word(keys[0], default.shape, &SHAPES)?;
    let amplitude = r.f64_in(keys[1], default.amplitude, "(-∞, ∞)", |_| true)?;
    let mode = r.usize_in(keys[2], default.mode, "[0, m/2)", |n| 2 * n < m)?;
    let offset = r.f64_in(keys[3], default.offset, "(-∞, ∞)", |_| true)?;
    Ok(Profile { shape, amplitude, mode, offset })
}

/// Parses and validates a configuration text.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut r = Reader { entries: split_lines(text)?, known: Vec::new() };
    let experiment = match r.raw("experiment") {
        None => return Err(err(None, "missing required key `experiment`")),
        Some((v, line)) => lookup("experiment", &v, line, &Experiment::ALL)?,
    };
    let seed = match r.raw("seed") {
        None => 0,
        Some((v, line)) => v.parse().map_err(|_| err(Some(line), format!("`seed` expects a u64, found `{v}`")))?,
    };
    let output = OutputSection { dir: PathBuf::from(r.string("output.dir", "fraclaws-out")), fields: r.bool("output.fields", false)? };
    let m = r.usize_in("grid.m", 128, "powers of two ≥ 8", |m| m >= 8 && m.is_power_of_two())?;

    let lambda = r.f64_or("solver.lambda", "off", Some(0.5), "(0, 1)", |x| x > 0.0 && x < 1.0)?;
    let tau = r.f64_in("solver.tau", 0.01, "[0, ∞)", |x| x >= 0.0)?;
    let dt = r.f64_or("solver.dt", "auto", None, "(0, ∞)", |x| x > 0.0)?;
    let t_end = r.f64_in("solver.t_end", 1.0, "[0, ∞)", |x| x >= 0.0)?;
    let flux_scheme = r.word(
        "solver.flux_scheme",
        FluxScheme::LaxFriedrichs,
        &[("lax-friedrichs", FluxScheme::LaxFriedrichs), ("engquist-osher", FluxScheme::EngquistOsher)],
    )?;
    let regularization = match r.raw("solver.regularization") {
        None => Regularization::Linked,
        Some((v, _)) if v == "linked" => Regularization::Linked,
        Some((v, _)) if v == "raw" => Regularization::Raw,
        Some((v, line)) => Regularization::Fixed(parse_number(
            "solver.regularization",
            &v,
            line,
            "`linked`, `raw` or (0, 1]",
            &|x| x > 0.0 && x <= 1.0,
        )?),
    };
    let state_bound = r.f64_in("solver.state_bound", 4.0, "(0, ∞)", |x| x > 0.0)?;
    let snapshot_line = r.line_of("solver.snapshot_times");
    let snapshot_times = match r.raw("solver.snapshot_times") {
        Some((v, _)) if v != "auto" => {
            let mut ts = r_list_times(&v, snapshot_line.unwrap_or(0), t_end)?;
            ts.push(0.0);
            ts.push(t_end);
            ts.sort_by(f64::total_cmp);
            ts.dedup();
            ts
        }
        _ => {
            let mut ts: Vec<f64> = (0..=10).map(|i| t_end * i as f64 / 10.0).collect();
            ts.dedup();
            ts
        }
    };

    let flux = FluxSection {
        kind: r.word(
            "flux.kind",
            FluxKind::Burgers,
            &[
                ("zero", FluxKind::Zero),
                ("linear", FluxKind::Linear),
                ("burgers", FluxKind::Burgers),
                ("sqrt-derivative", FluxKind::SqrtDerivative),
            ],
        )?,
        speed: r.f64_in("flux.speed", 1.0, "(-∞, ∞)", |_| true)?,
    };
    let diffusion = DiffusionSection {
        kind: r.word(
            "diffusion.kind",
            DiffusionKind::Holder,
            &[
                ("none", DiffusionKind::None),
                ("constant", DiffusionKind::Constant),
                ("holder", DiffusionKind::Holder),
                ("porous", DiffusionKind::Porous),
                ("indicator", DiffusionKind::Indicator),
            ],
        )?,
        scale: r.f64_in("diffusion.scale", 1.0, "[0, ∞)", |x| x >= 0.0)?,
        gamma: r.f64_in("diffusion.gamma", 0.6, "(0, 1]", |x| x > 0.0 && x <= 1.0)?,
        threshold: r.f64_in("diffusion.threshold", 0.5, "(0, ∞)", |x| x > 0.0)?,
    };
    let noise = NoiseSection {
        kind: r.word(
            "noise.kind",
            NoiseKind::Multiplicative,
            &[
                ("none", NoiseKind::None),
                ("additive", NoiseKind::Additive),
                ("multiplicative", NoiseKind::Multiplicative),
                ("multiplicative-spatial", NoiseKind::MultiplicativeSpatial),
            ],
        )?,
        amplitude: r.f64_in("noise.amplitude", 0.2, "[0, ∞)", |x| x >= 0.0)?,
        truncation: r.usize_in("noise.truncation", 16, "[0, 4096]", |k| k <= 4096)?,
    };
    let initial = profile(
        &mut r,
        ["initial.shape", "initial.amplitude", "initial.mode", "initial.offset"],
        Profile { shape: Shape::Sin, amplitude: 1.0, mode: 1, offset: 0.0 },
        m,
    )?;
    let initial_b = profile(
        &mut r,
        ["initial_b.shape", "initial_b.amplitude", "initial_b.mode", "initial_b.offset"],
        Profile { shape: Shape::Cos, amplitude: 0.5, mode: 2, offset: 0.3 },
        m,
    )?;
    let mc = McSection { num_mc: r.usize_in("mc.num_mc", 128, "[2, ∞)", |n| n >= 2)? };
    let moments = MomentsSection {
        p: r.f64_in("moments.p", 4.0, "[2, ∞)", |x| x >= 2.0)?,
        check_doubling: r.bool("moments.check_doubling", true)?,
    };
    let rates_kind = r.word(
        "rates.kind",
        PerturbationKind::Diffusion,
        &[
            ("initial", PerturbationKind::Initial),
            ("lambda", PerturbationKind::Lambda),
            ("flux", PerturbationKind::Flux),
            ("noise", PerturbationKind::Noise),
            ("diffusion", PerturbationKind::Diffusion),
        ],
    )?;
    let eps = r.list("rates.eps", &[0.01, 0.02, 0.05, 0.1, 0.2], "[0, ∞)", |x| x >= 0.0)?;
    let t_eval_line = r.line_of("rates.t_eval");
    let t_eval = r.f64_or("rates.t_eval", "t_end", None, "(0, t_end]", |x| x > 0.0)?.unwrap_or(t_end);
    if t_eval > t_end {
        return Err(err(t_eval_line, format!("`rates.t_eval` = {t_eval} outside allowed range (0, t_end = {t_end}]")));
    }
    let rates = RatesSection { kind: rates_kind, eps, t_eval, r1: r.f64_in("rates.r1", 1.0, "(0, ∞)", |x| x > 0.0)? };
    let kinetic = KineticSection {
        num_paths: r.usize_in("kinetic.num_paths", 8, "[2, ∞)", |n| n >= 2)?,
        required_factor: r.f64_in("kinetic.required_factor", 2.0, "[1, ∞)", |x| x >= 1.0)?,
        xi_bins: r.usize_in("kinetic.xi_bins", 64, "[1, ∞)", |n| n >= 1)?,
    };
    let taus_line = r.line_of("sweep.taus");
    let taus = r.list("sweep.taus", &[1e-2, 5e-3, 2.5e-3], "[0, ∞)", |x| x >= 0.0)?;
    if taus.windows(2).any(|w| w[1] > w[0]) {
        return Err(err(taus_line, "`sweep.taus` must be nonincreasing"));
    }
    let h = std::f64::consts::TAU / m as f64;
    let r_inner = r.f64_or("operator.r", "h", None, "(0, π)", |x| x > 0.0 && x < std::f64::consts::PI)?.unwrap_or(h);
    let z_max_line = r.line_of("operator.z_max");
    let z_max = r.f64_in("operator.z_max", 50.0, "(r, ∞)", |x| x > 0.0)?;
    if z_max <= r_inner {
        return Err(err(z_max_line, format!("`operator.z_max` = {z_max} outside allowed range (r = {r_inner}, ∞)")));
    }
    let operator =
        OperatorSection { r: r_inner, z_max, tolerance: r.f64_in("operator.tolerance", 1e-3, "(0, ∞)", |x| x > 0.0)? };
    let defaults = Tolerances::default();
    let tolerances = ToleranceSection {
        relative: r.f64_in("tolerances.relative", defaults.relative, "[0, ∞)", |x| x >= 0.0)?,
        se_multiplier: r.f64_in("tolerances.se_multiplier", defaults.se_multiplier, "[0, ∞)", |x| x >= 0.0)?,
        slope: r.f64_in("tolerances.slope", defaults.slope, "[0, ∞)", |x| x >= 0.0)?,
    };
    r.reject_unknown()?;

    Ok(RunConfig {
        experiment,
        seed,
        output,
        grid_m: m,
        solver: SolverSection { lambda, tau, dt, t_end, flux_scheme, regularization, state_bound, snapshot_times },
        flux,
        diffusion,
        noise,
        initial,
        initial_b,
        mc,
        moments,
        rates,
        kinetic,
        sweep: SweepSection { taus },
        operator,
        tolerances,
    })
}

fn r_list_times(v: &str, line: usize, t_end: f64) -> Result<Vec<f64>, ConfigError> {
    parse_list("solver.snapshot_times", v, line, "[0, t_end]", &|t| (0.0..=t_end).contains(&t))
}

impl RunConfig {
    pub fn grid(&self) -> TorusGrid<f64> {
        TorusGrid::new(self.grid_m).expect("grid size validated at parse time")
    }

    pub fn flux_spec(&self) -> FluxSpec<f64> {
        match self.flux.kind {
            FluxKind::Zero => FluxSpec::zero(),
            FluxKind::Linear => FluxSpec::linear(self.flux.speed),
            FluxKind::Burgers => FluxSpec::burgers(),
            FluxKind::SqrtDerivative => FluxSpec::sqrt_derivative(),
        }
    }

    pub fn diffusion_spec(&self) -> DiffusionSpec<f64> {
        let d = &self.diffusion;
        match d.kind {
            DiffusionKind::None => DiffusionSpec::none(),
            DiffusionKind::Constant => DiffusionSpec::constant(d.scale),
            DiffusionKind::Holder => DiffusionSpec::holder(d.scale, d.gamma),
            DiffusionKind::Porous => DiffusionSpec::porous(d.scale),
            DiffusionKind::Indicator => DiffusionSpec::indicator(d.scale, d.threshold),
        }
    }

    pub fn noise_spec(&self) -> NoiseSpec<f64> {
        let n = &self.noise;
        match n.kind {
            NoiseKind::None => NoiseSpec::none(),
            NoiseKind::Additive => NoiseSpec::additive(n.amplitude, n.truncation),
            NoiseKind::Multiplicative => NoiseSpec::multiplicative(n.amplitude, n.truncation),
            NoiseKind::MultiplicativeSpatial => {
                NoiseSpec::multiplicative_spatial(n.amplitude, n.truncation, self.solver.state_bound)
            }
        }
    }

    pub fn solver_settings(&self) -> SolverSettings<f64> {
        let s = &self.solver;
        let mut out = SolverSettings::new(self.grid(), s.t_end);
        out.lambda = s.lambda;
        out.viscosity = s.tau;
        out.dt = s.dt;
        out.flux = self.flux_spec();
        out.regularization = match s.regularization {
            Regularization::Linked => FluxRegularization::Linked,
            Regularization::Raw => FluxRegularization::Raw,
            Regularization::Fixed(v) => FluxRegularization::Fixed(v),
        };
        out.diffusion = self.diffusion_spec();
        out.noise = self.noise_spec();
        out.flux_scheme = s.flux_scheme;
        out.seed = self.seed;
        out.state_bound = s.state_bound;
        out.diagnostic_p = self.moments.p;
        out
    }

    pub fn tolerances(&self) -> Tolerances {
        Tolerances {
            relative: self.tolerances.relative,
            se_multiplier: self.tolerances.se_multiplier,
            slope: self.tolerances.slope,
        }
    }
}
