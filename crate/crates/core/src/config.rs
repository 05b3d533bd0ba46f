//! Run configuration shared by the command-line subcommands.
//!
//! Files are plain `key = value` lines; blank lines and `#` comments are
//! ignored. Artifacts written by the tool embed their configuration as
//! `#! key = value` header lines (CSV) or a `config` object (JSON), and both
//! forms load back through [`RunConfig::from_text`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{Boundary, Variant};
use crate::error::{Error, Result};
use crate::model::{load_table_model, make_cancelation, make_ldpc_regular, CancelationModel, SystemModel, TableMap};

pub const SEED_ENV: &str = "ANALYZER_SEED";

/// Every setting a subcommand may consult, with defaults filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: String,
    pub method: String,
    pub lengths: Vec<usize>,
    pub widths: Vec<usize>,
    pub variant: Variant,
    pub boundary: Boundary,
    pub epsilon: Option<f64>,
    pub epsilon_range: Option<(f64, f64)>,
    pub epsilon_steps: usize,
    pub epsilon_tol: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub record_every: usize,
    pub start: f64,
    pub grid: usize,
    pub quad_points: usize,
    pub path_points: usize,
    pub samples: usize,
    pub mesh: usize,
    pub alpha: f64,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: "ldpc:3,6".into(),
            method: "minratio".into(),
            lengths: vec![33],
            widths: vec![3],
            variant: Variant::InsideAverage,
            boundary: Boundary::Anchored,
            epsilon: None,
            epsilon_range: None,
            epsilon_steps: 11,
            epsilon_tol: crate::threshold::DEFAULT_TOL,
            tol: crate::dynamics::DEFAULT_TOL,
            max_iter: crate::dynamics::DEFAULT_MAX_ITER,
            record_every: 1,
            start: 1.0,
            grid: crate::threshold::DEFAULT_POTENTIAL_GRID,
            quad_points: crate::potential::DEFAULT_PANELS,
            path_points: crate::potential::DEFAULT_PATH_POINTS,
            samples: crate::potential::DEFAULT_RANDOM_SAMPLES,
            mesh: crate::continuum::DEFAULT_MESH,
            alpha: 4.0,
            seed: None,
            out: PathBuf::new(),
            jobs: 0,
        }
    }
}

pub const KEYS: &[&str] = &[
    "model",
    "method",
    "L",
    "w",
    "variant",
    "boundary",
    "epsilon",
    "epsilon_range",
    "epsilon_steps",
    "epsilon_tol",
    "tol",
    "max_iter",
    "record_every",
    "start",
    "grid",
    "quad_points",
    "path_points",
    "samples",
    "mesh",
    "alpha",
    "seed",
    "out",
    "jobs",
];

fn parse_err(what: &str, reason: impl Into<String>) -> Error {
    Error::Parse {
        what: what.to_string(),
        reason: reason.into(),
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.trim().parse::<T>().map_err(|e| parse_err(key, format!("`{v}`: {e}")))
}

/// Parses `3`, `1..6` (inclusive) or `2,4,8`.
pub fn parse_usize_list(key: &str, v: &str) -> Result<Vec<usize>> {
    let v = v.trim();
    let out: Vec<usize> = if let Some((a, b)) = v.split_once("..") {
        let (a, b): (usize, usize) = (num(key, a)?, num(key, b.trim_start_matches('='))?);
        if a > b {
            return Err(parse_err(key, format!("empty range `{v}`")));
        }
        (a..=b).collect()
    } else {
        v.split(',').map(|s| num(key, s)).collect::<Result<_>>()?
    };
    if out.is_empty() {
        return Err(parse_err(key, "empty list"));
    }
    Ok(out)
}

fn format_usize_list(v: &[usize]) -> String {
    let contiguous = v.len() > 2 && v.windows(2).all(|p| p[1] == p[0] + 1);
    if contiguous {
        format!("{}..{}", v[0], v[v.len() - 1])
    } else {
        v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
    }
}

fn parse_range(key: &str, v: &str) -> Result<(f64, f64)> {
    let (a, b) = v
        .split_once("..")
        .ok_or_else(|| parse_err(key, format!("expected `lo..hi`, got `{v}`")))?;
    let (a, b) = (num::<f64>(key, a)?, num::<f64>(key, b)?);
    if !(a <= b) {
        return Err(parse_err(key, format!("lower end exceeds upper end in `{v}`")));
    }
    Ok((a, b))
}

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "model" => self.model = v.to_string(),
            "method" => self.method = v.to_string(),
            "L" => self.lengths = parse_usize_list(key, v)?,
            "w" => self.widths = parse_usize_list(key, v)?,
            "variant" => self.variant = v.parse().map_err(|e: String| parse_err(key, e))?,
            "boundary" => self.boundary = v.parse().map_err(|e: String| parse_err(key, e))?,
            "epsilon" => self.epsilon = if v == "none" { None } else { Some(num(key, v)?) },
            "epsilon_range" => {
                self.epsilon_range = if v == "none" { None } else { Some(parse_range(key, v)?) }
            }
            "epsilon_steps" => self.epsilon_steps = num(key, v)?,
            "epsilon_tol" => self.epsilon_tol = num(key, v)?,
            "tol" => self.tol = num(key, v)?,
            "max_iter" => self.max_iter = num(key, v)?,
            "record_every" => self.record_every = num(key, v)?,
            "start" => self.start = num(key, v)?,
            "grid" => self.grid = num(key, v)?,
            "quad_points" => self.quad_points = num(key, v)?,
            "path_points" => self.path_points = num(key, v)?,
            "samples" => self.samples = num(key, v)?,
            "mesh" => self.mesh = num(key, v)?,
            "alpha" => self.alpha = num(key, v)?,
            "seed" => self.seed = if v == "none" { None } else { Some(num(key, v)?) },
            "out" => self.out = PathBuf::from(v),
            "jobs" => self.jobs = num(key, v)?,
            _ => return Err(parse_err("config", format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// All keys with their textual values, in [`KEYS`] order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let opt = |o: Option<String>| o.unwrap_or_else(|| "none".into());
        KEYS.iter()
            .map(|&k| {
                let v = match k {
                    "model" => self.model.clone(),
                    "method" => self.method.clone(),
                    "L" => format_usize_list(&self.lengths),
                    "w" => format_usize_list(&self.widths),
                    "variant" => self.variant.to_string(),
                    "boundary" => self.boundary.to_string(),
                    "epsilon" => opt(self.epsilon.map(|e| e.to_string())),
                    "epsilon_range" => opt(self.epsilon_range.map(|(a, b)| format!("{a}..{b}"))),
                    "epsilon_steps" => self.epsilon_steps.to_string(),
                    "epsilon_tol" => self.epsilon_tol.to_string(),
                    "tol" => self.tol.to_string(),
                    "max_iter" => self.max_iter.to_string(),
                    "record_every" => self.record_every.to_string(),
                    "start" => self.start.to_string(),
                    "grid" => self.grid.to_string(),
                    "quad_points" => self.quad_points.to_string(),
                    "path_points" => self.path_points.to_string(),
                    "samples" => self.samples.to_string(),
                    "mesh" => self.mesh.to_string(),
                    "alpha" => self.alpha.to_string(),
                    "seed" => opt(self.seed.map(|s| s.to_string())),
                    "out" => self.out.display().to_string(),
                    "jobs" => self.jobs.to_string(),
                    _ => unreachable!("key list and match are in sync"),
                };
                (k, v)
            })
            .collect()
    }

    /// `key = value` text, one entry per line.
    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn to_map(&self) -> BTreeMap<String, String> {
        self.entries().into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// Applies `key = value` text on top of `self`. Accepts plain config
    /// files, CSV artifacts (`#!` header lines) and JSON artifacts.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let trimmed = text.trim_start();
        if trimmed.starts_with('{') {
            let doc: serde_json::Value = serde_json::from_str(trimmed)?;
            let cfg = doc
                .get("config")
                .and_then(|c| c.as_object())
                .ok_or_else(|| parse_err("config", "JSON artifact has no `config` object"))?;
            for (k, v) in cfg {
                let v = v.as_str().ok_or_else(|| parse_err(k, "expected a string value"))?;
                self.set(k, v)?;
            }
            return Ok(());
        }
        let artifact = text.lines().any(|l| l.starts_with("#!"));
        for (n, line) in text.lines().enumerate() {
            let body = if artifact {
                match line.strip_prefix("#!") {
                    Some(rest) => rest,
                    None => continue,
                }
            } else {
                line
            };
            let body = body.trim();
            if body.is_empty() || body.starts_with('#') {
                continue;
            }
            let (k, v) = body
                .split_once('=')
                .ok_or_else(|| parse_err("config", format!("line {}: expected `key = value`", n + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// The explicit seed, else `ANALYZER_SEED`, else 0.
    pub fn resolved_seed(&self) -> Result<u64> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => num(SEED_ENV, &v),
            Err(_) => Ok(0),
        }
    }

    pub fn width(&self) -> usize {
        self.widths[0]
    }

    pub fn length(&self) -> usize {
        self.lengths[0]
    }

    /// Rejects values no subcommand can use.
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be positive, got {v}")))
            }
        };
        positive("epsilon-tol", self.epsilon_tol)?;
        positive("tol", self.tol)?;
        if self.max_iter == 0 {
            return Err(Error::param("max-iter", "must be at least 1"));
        }
        if self.grid < 2 {
            return Err(Error::param("grid", "must be at least 2"));
        }
        if self.quad_points < 2 {
            return Err(Error::param("quad-points", "must be at least 2"));
        }
        if self.path_points < 1 {
            return Err(Error::param("path-points", "must be at least 1"));
        }
        if self.lengths.contains(&0) {
            return Err(Error::param("L", "must be at least 1"));
        }
        if self.widths.contains(&0) {
            return Err(Error::param("w", "must be at least 1"));
        }
        if let Some(e) = self.epsilon {
            if !e.is_finite() || e < 0.0 {
                return Err(Error::param("epsilon", format!("must be finite and nonnegative, got {e}")));
            }
        }
        if self.epsilon_range.is_some() && self.epsilon_steps < 2 {
            return Err(Error::param("epsilon-steps", "must be at least 2 with a range"));
        }
        ModelSpec::parse(&self.model)?;
        Ok(())
    }

    /// Evenly spaced values over `epsilon_range`, or the single `epsilon`.
    pub fn epsilons(&self) -> Result<Vec<f64>> {
        match self.epsilon_range {
            Some((a, b)) => {
                let n = self.epsilon_steps;
                Ok((0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect())
            }
            None => Ok(vec![self.require_epsilon()?]),
        }
    }

    /// The single `ε` the subcommand needs, or a config error naming the key.
    pub fn require_epsilon(&self) -> Result<f64> {
        self.epsilon.ok_or_else(|| Error::param("epsilon", "required by this command"))
    }
}

/// Built-in `g` maps for the cancelation recursion.
pub const CANCEL_MAPS: &[&str] = &["one", "exp-neg", "inverse", "sigmoid"];

/// Parsed `--model` value.
///
/// * `ldpc:l,r` regular LDPC ensemble on the erasure channel
/// * `table:F,G` sampled `f` and `g` tables
/// * `cancel:G,σ²` cancelation recursion with a built-in `g` (see
///   [`CANCEL_MAPS`]) or a table path
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Ldpc { l: u32, r: u32 },
    Table { f: PathBuf, g: PathBuf },
    Cancel { g: String, sigma2: f64 },
}

/// A model ready for the analyses.
#[derive(Debug, Clone)]
pub enum LoadedModel {
    System(SystemModel),
    Cancelation(CancelationModel),
}

impl LoadedModel {
    /// The recursion as a [`SystemModel`]; for cancelation models this is
    /// the generic map with the load as `ε`.
    pub fn system(&self) -> &SystemModel {
        match self {
            LoadedModel::System(m) => m,
            LoadedModel::Cancelation(c) => c.system(),
        }
    }
}

impl ModelSpec {
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = |reason: String| parse_err("model", reason);
        let (kind, rest) = spec
            .split_once(':')
            .ok_or_else(|| bad(format!("expected `kind:params`, got `{spec}`")))?;
        let (a, b) = rest
            .split_once(',')
            .ok_or_else(|| bad(format!("`{kind}` takes two comma-separated parameters")))?;
        match kind {
            "ldpc" => Ok(ModelSpec::Ldpc { l: num("model", a)?, r: num("model", b)? }),
            "table" => Ok(ModelSpec::Table { f: a.trim().into(), g: b.trim().into() }),
            "cancel" => Ok(ModelSpec::Cancel { g: a.trim().to_string(), sigma2: num("model", b)? }),
            _ => Err(bad(format!("unknown model kind `{kind}`"))),
        }
    }

    pub fn load(&self) -> Result<LoadedModel> {
        match self {
            ModelSpec::Ldpc { l, r } => Ok(LoadedModel::System(make_ldpc_regular(*l, *r)?)),
            ModelSpec::Table { f, g } => Ok(LoadedModel::System(load_table_model(f, g)?)),
            ModelSpec::Cancel { g, sigma2 } => {
                let m = match g.as_str() {
                    "one" => make_cancelation(|_| 1.0, *sigma2, 1.0)?.with_g_prime(|_| 0.0)?,
                    "exp-neg" => make_cancelation(|x: f64| (-x).exp(), *sigma2, 1.0)?
                        .with_g_prime(|x: f64| -(-x).exp())?,
                    "inverse" => make_cancelation(|x: f64| 1.0 / (1.0 + x), *sigma2, 1.0)?
                        .with_g_prime(|x: f64| -1.0 / ((1.0 + x) * (1.0 + x)))?,
                    "sigmoid" => {
                        let s = |x: f64| 1.0 / (1.0 + (-20.0 * (x - 0.5)).exp());
                        make_cancelation(s, *sigma2, 1.0)?.with_g_prime(move |x| 20.0 * s(x) * (1.0 - s(x)))?
                    }
                    path => {
                        let table = TableMap::from_path(path)?;
                        let hi = table.range().hi;
                        let d = table.clone();
                        let m = make_cancelation(move |x| table.eval(x), *sigma2, 1.0)?
                            .with_g_prime(move |x| d.derivative(x))?;
                        m.with_x_max(hi)
                    }
                };
                Ok(LoadedModel::Cancelation(m))
            }
        }
    }
}
