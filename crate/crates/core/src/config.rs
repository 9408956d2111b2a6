//! Run configuration read from a TOML file.
//!
//! Sections: `[model]`, `[params]`, `[sweep]`, `[spectrum]`, `[scan]`,
//! `[decay]`, `[simulate]`, `[output]`. Every key is optional; unknown keys
//! are rejected with the line they appear on.

use std::path::PathBuf;

use thiserror::Error;
use toml::{Table, Value};

use crate::dynamics::StateFamily;
use crate::modal::Model;
use crate::params::{SpectrumSpec, SystemParams, GAMMA_LIMIT};
use crate::spectral::ClassifyOptions;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: syntax error: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("line {line}: `{key}` must be {expected}")]
    TypeMismatch {
        key: String,
        line: usize,
        expected: &'static str,
    },
    #[error("line {line}: `{key}`: {message}")]
    Constraint {
        key: String,
        line: usize,
        message: String,
    },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

/// Structural coefficients before the sweep axes are applied.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseParams {
    pub rho1: f64,
    pub rho2: f64,
    pub rho3: f64,
    pub a: f64,
    /// Fixed `b`; unused when the stability number is swept or given.
    pub b: f64,
    pub c: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayConfig {
    /// Times at which `h(t)` is sampled.
    pub h_times: Vec<f64>,
    /// Grid for per-mode rate fits, before per-mode rescaling.
    pub fit_times: Vec<f64>,
    pub states: StateFamily,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateConfig {
    pub alpha: f64,
    /// Initial state in physical coordinates.
    pub state: Vec<f64>,
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub resume: bool,
    /// Worker threads; `None` uses all cores.
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: Model,
    pub base: BaseParams,
    pub gammas: Vec<f64>,
    /// `None` keeps `b` from `[params]`.
    pub chis: Option<Vec<f64>>,
    pub spectrum: SpectrumSpec,
    pub classify: ClassifyOptions,
    pub seed: u64,
    pub decay: DecayConfig,
    pub simulate: SimulateConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    /// Sweep points in `(gamma, chi)` order.
    pub fn points(&self) -> Vec<SystemParams> {
        let b = &self.base;
        let mut out = Vec::new();
        for &g in &self.gammas {
            match &self.chis {
                None => out.push(SystemParams {
                    rho1: b.rho1,
                    rho2: b.rho2,
                    rho3: b.rho3,
                    a: b.a,
                    b: b.b,
                    c: b.c,
                    delta: b.delta,
                    gamma: g,
                }),
                Some(chis) => {
                    for &chi in chis {
                        out.push(SystemParams {
                            rho1: b.rho1,
                            rho2: b.rho2,
                            rho3: b.rho3,
                            a: b.a,
                            b: b.rho2 * (b.a / b.rho1 - chi),
                            c: b.c,
                            delta: b.delta,
                            gamma: g,
                        })
                    }
                }
            }
        }
        out
    }
}

pub fn load_config(path: &std::path::Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config(&text)
}

const SCHEMA: &[(&str, &[&str])] = &[
    ("model", &["kind"]),
    ("params", &["rho1", "rho2", "rho3", "a", "b", "c", "delta", "gamma", "chi"]),
    ("sweep", &["gamma", "gamma_range", "chi", "chi_range"]),
    (
        "spectrum",
        &["kind", "ell", "n_max", "alpha0", "ratio", "count", "alpha_min", "alpha_max", "values"],
    ),
    (
        "scan",
        &[
            "margin_threshold",
            "abscissa_threshold",
            "decay_threshold",
            "margin_trend_tolerance",
            "lambda_points",
            "lambda_min",
            "eigen_frequencies",
            "times",
            "fit_window",
            "fit_decades",
            "seed",
        ],
    ),
    ("decay", &["horizon", "points", "states", "count"]),
    ("simulate", &["alpha", "state", "t_max", "points"]),
    ("output", &["dir", "resume", "workers"]),
];

/// Line (1-based) of `key` inside `[section]`, or of the section header when
/// `key` is empty. Falls back to line 1.
fn locate(text: &str, section: &str, key: &str) -> usize {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix('[') {
            current = rest.trim_end_matches(']').trim().to_string();
            if key.is_empty() && current == section {
                return i + 1;
            }
            continue;
        }
        if current == section && !key.is_empty() {
            if let Some(rest) = line.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return i + 1;
                }
            }
        }
    }
    1
}

struct Reader<'a> {
    text: &'a str,
    root: &'a Table,
}

impl<'a> Reader<'a> {
    fn line(&self, section: &str, key: &str) -> usize {
        locate(self.text, section, key)
    }

    fn mismatch(&self, section: &str, key: &str, expected: &'static str) -> ConfigError {
        ConfigError::TypeMismatch {
            key: format!("{section}.{key}"),
            line: self.line(section, key),
            expected,
        }
    }

    fn constraint(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::Constraint {
            key: format!("{section}.{key}"),
            line: self.line(section, key),
            message: message.into(),
        }
    }

    fn get(&self, section: &str, key: &str) -> Option<&'a Value> {
        self.root.get(section)?.as_table()?.get(key)
    }

    fn float(&self, section: &str, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.get(section, key) {
            None => Ok(None),
            Some(Value::Float(x)) => Ok(Some(*x)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(_) => Err(self.mismatch(section, key, "a number")),
        }
    }

    fn float_or(&self, section: &str, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.float(section, key)?.unwrap_or(default))
    }

    fn count(&self, section: &str, key: &str) -> Result<Option<usize>, ConfigError> {
        match self.get(section, key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as usize)),
            Some(_) => Err(self.mismatch(section, key, "a non-negative integer")),
        }
    }

    fn boolean(&self, section: &str, key: &str) -> Result<Option<bool>, ConfigError> {
        match self.get(section, key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(_) => Err(self.mismatch(section, key, "a boolean")),
        }
    }

    fn string(&self, section: &str, key: &str) -> Result<Option<&'a str>, ConfigError> {
        match self.get(section, key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.as_str())),
            Some(_) => Err(self.mismatch(section, key, "a string")),
        }
    }

    /// A number or an array of numbers.
    fn floats(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(v) = self.get(section, key) else {
            return Ok(None);
        };
        let one = |v: &Value| match v {
            Value::Float(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            _ => None,
        };
        let out = match v {
            Value::Array(items) => items.iter().map(one).collect::<Option<Vec<f64>>>(),
            other => one(other).map(|x| vec![x]),
        };
        out.map(Some)
            .ok_or_else(|| self.mismatch(section, key, "a number or an array of numbers"))
    }

    fn positive(&self, section: &str, key: &str, default: f64) -> Result<f64, ConfigError> {
        let v = self.float_or(section, key, default)?;
        if v.is_finite() && v > 0.0 {
            Ok(v)
        } else {
            Err(self.constraint(section, key, format!("must be > 0, got {v}")))
        }
    }

    /// `[start, stop, step]`, inclusive of `stop` up to rounding.
    fn range(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(v) = self.floats(section, key)? else {
            return Ok(None);
        };
        let [start, stop, step] = v[..] else {
            return Err(self.mismatch(section, key, "an array [start, stop, step]"));
        };
        if !(step.is_finite() && step > 0.0) || !(start.is_finite() && stop.is_finite()) || stop < start {
            return Err(self.constraint(section, key, "need finite start <= stop and step > 0"));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        if n > 100_000 {
            return Err(self.constraint(section, key, "more than 100000 points"));
        }
        Ok(Some((0..=n).map(|k| tidy(start + k as f64 * step)).collect()))
    }
}

/// Rounds to 12 significant digits so that range points print cleanly.
pub fn tidy(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float")
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax {
        line: e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
            .unwrap_or(1),
        message: e.message().trim().to_string(),
    })?;
    for (section, value) in &root {
        let Some((_, keys)) = SCHEMA.iter().find(|(s, _)| s == section) else {
            return Err(ConfigError::UnknownKey {
                key: section.clone(),
                line: locate(text, section, ""),
            });
        };
        let Some(table) = value.as_table() else {
            return Err(ConfigError::TypeMismatch {
                key: section.clone(),
                line: locate(text, section, ""),
                expected: "a table",
            });
        };
        for key in table.keys() {
            if !keys.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey {
                    key: format!("{section}.{key}"),
                    line: locate(text, section, key),
                });
            }
        }
    }
    let r = Reader { text, root: &root };

    let model = match r.string("model", "kind")?.unwrap_or("timoshenko") {
        "timoshenko" => Model::Timoshenko,
        "waveheat" | "wave-heat" | "wave_heat" => Model::WaveHeat,
        other => {
            return Err(r.constraint("model", "kind", format!("expected timoshenko or waveheat, got `{other}`")))
        }
    };

    let base = BaseParams {
        rho1: r.positive("params", "rho1", 1.0)?,
        rho2: r.positive("params", "rho2", 1.0)?,
        rho3: r.positive("params", "rho3", 1.0)?,
        a: r.positive("params", "a", 1.0)?,
        b: r.positive("params", "b", 1.0)?,
        c: r.positive("params", "c", 1.0)?,
        delta: r.positive("params", "delta", 1.0)?,
    };

    let gamma_axis = match (r.floats("sweep", "gamma")?, r.range("sweep", "gamma_range")?) {
        (Some(_), Some(_)) => {
            return Err(r.constraint("sweep", "gamma_range", "give either gamma or gamma_range"))
        }
        (Some(v), None) => Some(("gamma", v)),
        (None, Some(v)) => Some(("gamma_range", v)),
        (None, None) => None,
    };
    let (gsec, gkey, gammas) = match gamma_axis {
        Some((k, v)) => ("sweep", k, v),
        None => ("params", "gamma", vec![r.float_or("params", "gamma", 0.5)?]),
    };
    if gammas.is_empty() {
        return Err(r.constraint(gsec, gkey, "sweep axis is empty"));
    }
    for &g in &gammas {
        if !(g.is_finite() && g.abs() <= GAMMA_LIMIT) {
            return Err(r.constraint(gsec, gkey, format!("gamma = {g} out of range; need |gamma| <= {GAMMA_LIMIT}")));
        }
    }

    let chi_axis = match (r.floats("sweep", "chi")?, r.range("sweep", "chi_range")?) {
        (Some(_), Some(_)) => {
            return Err(r.constraint("sweep", "chi_range", "give either chi or chi_range"))
        }
        (Some(v), None) => Some(("sweep", "chi", v)),
        (None, Some(v)) => Some(("sweep", "chi_range", v)),
        (None, None) => r.float("params", "chi")?.map(|c| ("params", "chi", vec![c])),
    };
    if chi_axis.is_some() && r.get("params", "b").is_some() {
        return Err(r.constraint("params", "b", "b is derived from chi; give one of them"));
    }
    let chis = match chi_axis {
        None => None,
        Some((sec, key, v)) => {
            if v.is_empty() {
                return Err(r.constraint(sec, key, "sweep axis is empty"));
            }
            for &chi in &v {
                let b = base.rho2 * (base.a / base.rho1 - chi);
                if !(chi.is_finite() && b > 0.0) {
                    return Err(r.constraint(
                        sec,
                        key,
                        format!(
                            "chi = {chi}: b would be non-positive (b = rho2 (a/rho1 - chi) = {b}); need chi < {}",
                            base.a / base.rho1
                        ),
                    ));
                }
            }
            Some(v)
        }
    };

    let spectrum = parse_spectrum(&r)?;
    let (classify, seed) = parse_scan(&r)?;
    let decay = parse_decay(&r, &classify, seed)?;
    let simulate = parse_simulate(&r, model)?;

    let workers = r.count("output", "workers")?;
    if workers == Some(0) {
        return Err(r.constraint("output", "workers", "must be >= 1"));
    }
    let output = OutputConfig {
        dir: PathBuf::from(r.string("output", "dir")?.unwrap_or("out")),
        resume: r.boolean("output", "resume")?.unwrap_or(false),
        workers,
    };

    Ok(RunConfig {
        model,
        base,
        gammas,
        chis,
        spectrum,
        classify,
        seed,
        decay,
        simulate,
        output,
    })
}

fn parse_spectrum(r: &Reader) -> Result<SpectrumSpec, ConfigError> {
    let sec = "spectrum";
    let kind = r.string(sec, "kind")?.unwrap_or("loggrid");
    let need_count = |key: &str, default: usize| -> Result<usize, ConfigError> {
        let n = r.count(sec, key)?.unwrap_or(default);
        if n == 0 {
            Err(r.constraint(sec, key, "must be >= 1"))
        } else {
            Ok(n)
        }
    };
    let spec = match kind {
        "dirichlet" => SpectrumSpec::Dirichlet {
            ell: r.positive(sec, "ell", std::f64::consts::PI)?,
            n_max: need_count("n_max", 200)?,
        },
        "geometric" => SpectrumSpec::Geometric {
            alpha0: r.positive(sec, "alpha0", 1.0)?,
            ratio: r.float_or(sec, "ratio", 10.0)?,
            count: need_count("count", 9)?,
        },
        "loggrid" => SpectrumSpec::LogGrid {
            alpha_min: r.positive(sec, "alpha_min", 1.0)?,
            alpha_max: r.positive(sec, "alpha_max", 1e8)?,
            count: need_count("count", 400)?,
        },
        "list" => SpectrumSpec::ExplicitList(
            r.floats(sec, "values")?
                .ok_or_else(|| r.constraint(sec, "kind", "list spectrum needs `values`"))?,
        ),
        other => {
            return Err(r.constraint(
                sec,
                "kind",
                format!("expected dirichlet, geometric, loggrid or list, got `{other}`"),
            ))
        }
    };
    spec.values()
        .map_err(|e| r.constraint(sec, "kind", e.to_string()))?;
    Ok(spec)
}

fn parse_scan(r: &Reader) -> Result<(ClassifyOptions, u64), ConfigError> {
    let sec = "scan";
    let d = ClassifyOptions::default();
    let times = match r.floats(sec, "times")? {
        None => d.times.clone(),
        Some(t) => {
            if t.is_empty() || t.iter().any(|x| !(x.is_finite() && *x > 0.0)) || t.windows(2).any(|w| w[1] <= w[0]) {
                return Err(r.constraint(sec, "times", "need positive, strictly ascending times"));
            }
            t
        }
    };
    let fit_window = match r.floats(sec, "fit_window")? {
        None => None,
        Some(v) => match v[..] {
            [lo, hi] if lo > 0.0 && hi > lo => Some((lo, hi)),
            _ => return Err(r.constraint(sec, "fit_window", "need [lo, hi] with 0 < lo < hi")),
        },
    };
    let lambda_points = r.count(sec, "lambda_points")?.unwrap_or(d.lambda_points);
    if lambda_points < 2 {
        return Err(r.constraint(sec, "lambda_points", "must be >= 2"));
    }
    let opts = ClassifyOptions {
        margin_threshold: r.positive(sec, "margin_threshold", d.margin_threshold)?,
        abscissa_threshold: r.positive(sec, "abscissa_threshold", d.abscissa_threshold)?,
        decay_threshold: r.positive(sec, "decay_threshold", d.decay_threshold)?,
        margin_trend_tolerance: r.positive(sec, "margin_trend_tolerance", d.margin_trend_tolerance)?,
        lambda_points,
        lambda_min: r.positive(sec, "lambda_min", d.lambda_min)?,
        eigen_frequencies: r.boolean(sec, "eigen_frequencies")?.unwrap_or(d.eigen_frequencies),
        times,
        fit_window,
        fit_decades: r.positive(sec, "fit_decades", d.fit_decades)?,
    };
    let seed = match r.get(sec, "seed") {
        None => 0,
        Some(Value::Integer(i)) if *i >= 0 => *i as u64,
        Some(_) => return Err(r.mismatch(sec, "seed", "a non-negative integer")),
    };
    Ok((opts, seed))
}

fn parse_decay(r: &Reader, opts: &ClassifyOptions, seed: u64) -> Result<DecayConfig, ConfigError> {
    let sec = "decay";
    let horizon = r.positive(sec, "horizon", 200.0)?;
    let points = r.count(sec, "points")?.unwrap_or(101);
    if points < 4 {
        return Err(r.constraint(sec, "points", "must be >= 4"));
    }
    let fit_times = (0..points)
        .map(|k| horizon * k as f64 / (points - 1) as f64)
        .collect();
    let count = r.count(sec, "count")?;
    let states = match r.string(sec, "states")?.unwrap_or("worst") {
        "worst" => StateFamily::WorstCase,
        "random" => StateFamily::Random {
            count: count.unwrap_or(16).max(1),
            seed,
        },
        other => {
            return Err(r.constraint(sec, "states", format!("expected worst or random, got `{other}`")))
        }
    };
    Ok(DecayConfig {
        h_times: opts.times.clone(),
        fit_times,
        states,
    })
}

fn parse_simulate(r: &Reader, model: Model) -> Result<SimulateConfig, ConfigError> {
    let sec = "simulate";
    let dim = model.dim();
    let state = match r.floats(sec, "state")? {
        None => {
            let mut s = vec![0.0; dim];
            s[1] = 1.0;
            s
        }
        Some(s) if s.len() == dim && s.iter().all(|x| x.is_finite()) => s,
        Some(s) => {
            return Err(r.constraint(sec, "state", format!("expected {dim} finite components, got {}", s.len())))
        }
    };
    let t_max = r.positive(sec, "t_max", 50.0)?;
    let points = r.count(sec, "points")?.unwrap_or(501);
    if points < 2 {
        return Err(r.constraint(sec, "points", "must be >= 2"));
    }
    Ok(SimulateConfig {
        alpha: r.positive(sec, "alpha", 1.0)?,
        state,
        times: (0..points)
            .map(|k| t_max * k as f64 / (points - 1) as f64)
            .collect(),
    })
}
