//! Single and spatially coupled recursions.
//!
//! Positions are indexed `0..L`. With [`Boundary::Anchored`] every position
//! outside that range holds the known value 0; with [`Boundary::Circular`]
//! indices wrap modulo `L`. A chain written `{−L, …, 0}` or `{−L, …, L}`
//! maps onto this range by shifting the left end to 0.

use std::io::Write;
use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SystemModel;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

/// Where the window average sits relative to the node map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// `x_i ← f(g(y_i); ε)` with `y_i` the double window average of `x`.
    InsideAverage,
    /// `x_i ← (1/w) Σ_k f((1/w) Σ_j g(x_{i+j−k}); ε)`.
    OutsideAverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    Anchored,
    Circular,
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "inside" | "inside-average" => Ok(Variant::InsideAverage),
            "outside" | "outside-average" => Ok(Variant::OutsideAverage),
            _ => Err(format!("unknown variant `{s}` (expected inside|outside)")),
        }
    }
}

impl std::str::FromStr for Boundary {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "anchored" => Ok(Boundary::Anchored),
            "circular" => Ok(Boundary::Circular),
            _ => Err(format!("unknown boundary `{s}` (expected anchored|circular)")),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::InsideAverage => "inside",
            Variant::OutsideAverage => "outside",
        })
    }
}

impl std::fmt::Display for Boundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Boundary::Anchored => "anchored",
            Boundary::Circular => "circular",
        })
    }
}

/// Chain length, coupling width and boundary handling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoupledConfig {
    pub length: usize,
    pub width: usize,
    pub variant: Variant,
    pub boundary: Boundary,
}

impl CoupledConfig {
    /// Anchored, inside-average chain of `length` copies with window `width`.
    pub fn new(length: usize, width: usize) -> Result<Self> {
        if length == 0 {
            return Err(Error::param("L", "must be at least 1"));
        }
        if width == 0 {
            return Err(Error::param("w", "must be at least 1"));
        }
        Ok(CoupledConfig {
            length,
            width,
            variant: Variant::InsideAverage,
            boundary: Boundary::Anchored,
        })
    }

    /// The uncoupled system as a chain of one.
    pub fn single() -> Self {
        CoupledConfig {
            length: 1,
            width: 1,
            variant: Variant::InsideAverage,
            boundary: Boundary::Circular,
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    /// `L ≥ 2w + 1`, the regime in which the fixed-point results apply.
    pub fn in_guaranteed_regime(&self) -> bool {
        self.length > 2 * self.width
    }

    /// Warning text when the chain is shorter than `2w + 1`.
    pub fn regime_warning(&self) -> Option<String> {
        (!self.in_guaranteed_regime()).then(|| {
            format!(
                "L = {} is below 2w+1 = {}; fixed-point guarantees do not apply",
                self.length,
                2 * self.width + 1
            )
        })
    }

    fn index(&self, i: isize) -> Option<usize> {
        let l = self.length as isize;
        match self.boundary {
            Boundary::Anchored => (0..l).contains(&i).then_some(i as usize),
            Boundary::Circular => Some(i.rem_euclid(l) as usize),
        }
    }

    fn at(&self, x: &[f64], i: isize) -> f64 {
        self.index(i).map_or(0.0, |k| x[k])
    }
}

/// State of a chain, one value per position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn filled(len: usize, value: f64) -> Self {
        StateVector(vec![value; len])
    }

    pub fn ones(len: usize) -> Self {
        Self::filled(len, 1.0)
    }

    pub fn zeros(len: usize) -> Self {
        Self::filled(len, 0.0)
    }

    pub fn max_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_diff(&self, other: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(other)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for StateVector {
    type Target = Vec<f64>;
    fn deref(&self) -> &Vec<f64> {
        &self.0
    }
}

impl DerefMut for StateVector {
    fn deref_mut(&mut self) -> &mut Vec<f64> {
        &mut self.0
    }
}

impl From<Vec<f64>> for StateVector {
    fn from(v: Vec<f64>) -> Self {
        StateVector(v)
    }
}

/// Stopping and recording controls for a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub max_iter: usize,
    /// Stop once the max-norm step falls below this; also the threshold on
    /// the state norm that counts as "converged to zero".
    pub tol: f64,
    /// Keep every n-th state; 0 keeps only the first and last.
    pub record_every: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
            record_every: 1,
        }
    }
}

impl RunOptions {
    pub fn new(max_iter: usize, tol: f64) -> Self {
        RunOptions {
            max_iter,
            tol,
            ..Default::default()
        }
    }

    /// Records nothing but the endpoints.
    pub fn quiet(mut self) -> Self {
        self.record_every = 0;
        self
    }
}

/// Recorded iterates of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Recorded states with their iteration index; always starts at 0 and
    /// ends with the final state.
    pub states: Vec<(usize, StateVector)>,
    pub epsilon: f64,
    pub converged_to_zero: bool,
    pub iterations: usize,
    pub final_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub epsilon: f64,
    #[serde(rename = "L")]
    pub length: usize,
    #[serde(rename = "w")]
    pub width: usize,
    pub variant: Variant,
    pub boundary: Boundary,
    pub converged_to_zero: bool,
    pub iterations: usize,
    pub final_residual: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> &StateVector {
        &self.states.last().expect("trajectory has at least one state").1
    }

    pub fn summary(&self, cfg: &CoupledConfig) -> TrajectorySummary {
        TrajectorySummary {
            epsilon: self.epsilon,
            length: cfg.length,
            width: cfg.width,
            variant: cfg.variant,
            boundary: cfg.boundary,
            converged_to_zero: self.converged_to_zero,
            iterations: self.iterations,
            final_residual: self.final_residual,
        }
    }

    /// Long-format CSV: `iteration,i,value`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iteration,i,value")?;
        for (it, state) in &self.states {
            for (i, v) in state.iter().enumerate() {
                writeln!(out, "{it},{i},{v:e}")?;
            }
        }
        Ok(())
    }
}

/// Double window average `y_i = (1/w²) Σ_k Σ_j x_{i+j−k}`.
pub fn coupled_average(cfg: &CoupledConfig, x: &[f64]) -> Vec<f64> {
    let w = cfg.width as isize;
    let norm = (cfg.width * cfg.width) as f64;
    (0..cfg.length as isize)
        .map(|i| {
            let mut s = 0.0;
            for m in -(w - 1)..w {
                s += (w - m.abs()) as f64 * cfg.at(x, i + m);
            }
            s / norm
        })
        .collect()
}

fn check_len(cfg: &CoupledConfig, x: &[f64]) -> Result<()> {
    if x.len() != cfg.length {
        return Err(Error::Shape {
            expected: cfg.length,
            got: x.len(),
        });
    }
    Ok(())
}

fn step_into(
    model: &SystemModel,
    cfg: &CoupledConfig,
    x: &[f64],
    epsilon: f64,
    out: &mut [f64],
) -> Result<()> {
    match cfg.variant {
        Variant::InsideAverage => {
            if cfg.width == 1 {
                for (o, &xi) in out.iter_mut().zip(x) {
                    *o = model.evaluate(xi, epsilon)?;
                }
            } else {
                for (o, y) in out.iter_mut().zip(coupled_average(cfg, x)) {
                    *o = model.evaluate(y, epsilon)?;
                }
            }
        }
        Variant::OutsideAverage => {
            let w = cfg.width as isize;
            let l = cfg.length as isize;
            let wf = cfg.width as f64;
            let g_anchor = model.g(0.0);
            let gx = |p: isize| cfg.index(p).map_or(g_anchor, |k| model.g(x[k]));
            // inner[m + w - 1] = f((1/w) Σ_j g(x_{m+j}); ε) for m in -(w-1)..l
            let mut inner = Vec::with_capacity((l + w - 1) as usize);
            for m in -(w - 1)..l {
                let u = (0..w).map(|j| gx(m + j)).sum::<f64>() / wf;
                inner.push(model.node_clamped(u, epsilon)?);
            }
            for (i, o) in out.iter_mut().enumerate() {
                let i = i as isize;
                let s: f64 = (0..w).map(|k| inner[(i - k + w - 1) as usize]).sum();
                *o = model.domain().clamp(s / wf);
            }
        }
    }
    Ok(())
}

/// One step of the coupled recursion.
pub fn coupled_step(
    model: &SystemModel,
    cfg: &CoupledConfig,
    x: &StateVector,
    epsilon: f64,
) -> Result<StateVector> {
    check_len(cfg, x)?;
    let mut out = vec![0.0; cfg.length];
    step_into(model, cfg, x, epsilon, &mut out)?;
    Ok(StateVector(out))
}

/// Iterates the coupled recursion from `x0`.
pub fn run_coupled(
    model: &SystemModel,
    cfg: &CoupledConfig,
    x0: &StateVector,
    epsilon: f64,
    opts: &RunOptions,
) -> Result<Trajectory> {
    check_len(cfg, x0)?;
    if !(opts.tol > 0.0) {
        return Err(Error::param("tol", "must be positive"));
    }
    let mut states = vec![(0, x0.clone())];
    let mut cur = x0.0.clone();
    let mut next = vec![0.0; cfg.length];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        step_into(model, cfg, &cur, epsilon, &mut next)?;
        residual = cur
            .iter()
            .zip(&next)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()));
        std::mem::swap(&mut cur, &mut next);
        iterations += 1;
        if opts.record_every > 0 && iterations % opts.record_every == 0 {
            states.push((iterations, StateVector(cur.clone())));
        }
        if residual < opts.tol {
            break;
        }
    }
    if states.last().map(|s| s.0) != Some(iterations) {
        states.push((iterations, StateVector(cur.clone())));
    }
    let norm = cur.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(Trajectory {
        states,
        epsilon,
        converged_to_zero: norm < opts.tol,
        iterations,
        final_residual: residual,
    })
}

/// Iterates the scalar recursion `x ← f(g(x); ε)` from `x0`.
pub fn iterate_single(
    model: &SystemModel,
    x0: f64,
    epsilon: f64,
    max_iter: usize,
    tol: f64,
) -> Result<Trajectory> {
    let opts = RunOptions {
        max_iter,
        tol,
        record_every: 1,
    };
    run_coupled(
        model,
        &CoupledConfig::single(),
        &StateVector(vec![x0]),
        epsilon,
        &opts,
    )
}

/// Whether the scalar recursion driven from `x0` dies out, without keeping
/// the trajectory.
pub fn single_converges_to_zero(
    model: &SystemModel,
    x0: f64,
    epsilon: f64,
    opts: &RunOptions,
) -> Result<(bool, f64)> {
    let mut x = x0;
    let mut step = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let next = model.evaluate(x, epsilon)?;
        step = (next - x).abs();
        x = next;
        if step < opts.tol {
            break;
        }
    }
    let _ = step;
    Ok((x.abs() < opts.tol, x))
}

/// Limit of [`run_coupled`] from the all-ones state.
///
/// Fails with [`Error::NonConvergence`] (carrying the last state) if the step
/// has not dropped below `tol` within [`DEFAULT_MAX_ITER`] iterations.
pub fn find_fixed_point(
    model: &SystemModel,
    cfg: &CoupledConfig,
    epsilon: f64,
    tol: f64,
) -> Result<StateVector> {
    find_fixed_point_with(model, cfg, epsilon, &RunOptions::new(DEFAULT_MAX_ITER, tol))
}

pub fn find_fixed_point_with(
    model: &SystemModel,
    cfg: &CoupledConfig,
    epsilon: f64,
    opts: &RunOptions,
) -> Result<StateVector> {
    let start = StateVector::filled(cfg.length, model.domain().hi.min(1.0));
    let traj = run_coupled(model, cfg, &start, epsilon, &opts.quiet())?;
    let last = traj.final_state().clone();
    if traj.final_residual >= opts.tol {
        return Err(Error::NonConvergence {
            iterations: traj.iterations,
            residual: traj.final_residual,
            last: last.0,
        });
    }
    let residual = fixed_point_residual(model, cfg, &last, epsilon)?;
    if residual > 10.0 * opts.tol {
        return Err(Error::NonConvergence {
            iterations: traj.iterations,
            residual,
            last: last.0,
        });
    }
    Ok(last)
}

/// Max-norm of `x − F(x)`.
pub fn fixed_point_residual(
    model: &SystemModel,
    cfg: &CoupledConfig,
    x: &StateVector,
    epsilon: f64,
) -> Result<f64> {
    let fx = coupled_step(model, cfg, x, epsilon)?;
    Ok(x.max_diff(&fx))
}
