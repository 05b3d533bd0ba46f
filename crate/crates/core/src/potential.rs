//! Scalar potential `U(x; ε) = ∫₀ˣ g′(z)[z − f(g(z); ε)] dz` and the vector
//! candidate `V_B(x) = ∫ [B(s)(s − F(s))]ᵀ ds` for coupled maps.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{coupled_step, run_coupled, CoupledConfig, RunOptions, StateVector};
use crate::error::{Error, Result};
use crate::model::{EpsilonMode, SystemModel};
use crate::quadrature::simpson;

pub const DEFAULT_PANELS: usize = 2048;
pub const DEFAULT_PATH_POINTS: usize = 256;
pub const DEFAULT_RANDOM_SAMPLES: usize = 10_000;

/// Relative margin by which `V` must drop in one step to count as a decrease.
pub const DECREASE_MARGIN: f64 = 1e-12;

/// `U(x; ε)` by composite Simpson with `quad_points` panels.
pub fn potential_1d(model: &SystemModel, x: f64, epsilon: f64, quad_points: usize) -> Result<f64> {
    if quad_points < 2 {
        return Err(Error::param("quad_points", "must be at least 2"));
    }
    let d = model.domain();
    if !d.contains(x) {
        return Err(Error::param("x", format!("{x} lies outside [{}, {}]", d.lo, d.hi)));
    }
    Ok(simpson(|z| integrand(model, z, epsilon), d.lo, x, quad_points))
}

fn integrand(model: &SystemModel, z: f64, epsilon: f64) -> f64 {
    model.g_prime(z) * (z - model.node(model.g(z), epsilon))
}

/// Parts `(P(x), Q(x))` of `U(x; ε) = P(x) − ε Q(x)` for a multiplicative
/// model, from the model's closed form when it has one.
pub fn potential_parts(model: &SystemModel, x: f64, quad_points: usize) -> Result<(f64, f64)> {
    if model.epsilon_mode() != EpsilonMode::Multiplicative {
        return Err(Error::InvalidModel(format!(
            "`{}` is not multiplicative in ε",
            model.name()
        )));
    }
    if let Some(split) = model.potential_split() {
        return Ok(((split.p)(x), (split.q)(x)));
    }
    if quad_points < 2 {
        return Err(Error::param("quad_points", "must be at least 2"));
    }
    let lo = model.domain().lo;
    let p = simpson(|z| model.g_prime(z) * z, lo, x, quad_points);
    let q = simpson(
        |z| model.g_prime(z) * model.node_unscaled(model.g(z)).unwrap_or(0.0),
        lo,
        x,
        quad_points,
    );
    Ok((p, q))
}

/// Closed form of the regular `(l, r)` potential:
/// `1/r − (1−x)^r/r − x(1−x)^{r−1} − (ε/l)[1 − (1−x)^{r−1}]^l`.
pub fn closed_form_ldpc(l: u32, r: u32, x: f64, epsilon: f64) -> f64 {
    let (lf, rf) = (l as f64, r as f64);
    let y = 1.0 - x;
    let yr1 = y.powi(r as i32 - 1);
    1.0 / rf - y * yr1 / rf - x * yr1 - epsilon / lf * (1.0 - yr1).powi(l as i32)
}

/// Sampled `U(·; ε)` on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialProfile {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub epsilon: f64,
    pub min_value: f64,
    pub argmin: f64,
}

impl PotentialProfile {
    /// Samples `U` at `grid_size` points, integrating cell by cell so the
    /// total panel count stays near `panels`.
    pub fn sample(
        model: &SystemModel,
        epsilon: f64,
        grid_size: usize,
        panels: usize,
    ) -> Result<Self> {
        if grid_size < 2 {
            return Err(Error::param("grid", "must be at least 2"));
        }
        if panels < 2 {
            return Err(Error::param("quad_points", "must be at least 2"));
        }
        let grid = model.domain().grid(grid_size);
        let per_cell = (panels / (grid_size - 1)).max(2);
        let mut values = Vec::with_capacity(grid_size);
        let mut acc = 0.0;
        values.push(0.0);
        for pair in grid.windows(2) {
            acc += simpson(|z| integrand(model, z, epsilon), pair[0], pair[1], per_cell);
            values.push(acc);
        }
        Ok(Self::from_values(grid, values, epsilon))
    }

    pub fn from_values(grid: Vec<f64>, values: Vec<f64>, epsilon: f64) -> Self {
        let k = crate::search::argmin(&values).unwrap_or(0);
        PotentialProfile {
            min_value: values[k],
            argmin: grid[k],
            grid,
            values,
            epsilon,
        }
    }

    /// CSV with columns `x,U`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,U")?;
        for (x, u) in self.grid.iter().zip(&self.values) {
            writeln!(out, "{x},{u:e}")?;
        }
        Ok(())
    }
}

/// Positive diagonal matrix fields `B(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixField {
    /// `diag(g′(x_i))`.
    DiagonalGPrime,
    /// `D · diag(g′(x_i))` for a fixed positive diagonal `D`.
    ScaledDiagonal(Vec<f64>),
    Identity,
}

impl MatrixField {
    /// Diagonal of `B(x)`. Zero entries are accepted only where `x_i` sits
    /// on the domain boundary.
    pub fn diagonal(&self, model: &SystemModel, x: &[f64]) -> Result<Vec<f64>> {
        let diag: Vec<f64> = match self {
            MatrixField::Identity => vec![1.0; x.len()],
            MatrixField::DiagonalGPrime => x.iter().map(|&v| model.g_prime(v)).collect(),
            MatrixField::ScaledDiagonal(d) => {
                if d.len() != x.len() {
                    return Err(Error::Shape {
                        expected: x.len(),
                        got: d.len(),
                    });
                }
                d.iter().zip(x).map(|(s, &v)| s * model.g_prime(v)).collect()
            }
        };
        let dom = model.domain();
        for (i, (&b, &v)) in diag.iter().zip(x).enumerate() {
            let edge = v <= dom.lo || v >= dom.hi;
            if b.is_nan() || b < 0.0 || (b == 0.0 && !edge) {
                return Err(Error::InvalidModel(format!(
                    "B is not positive definite: entry {i} is {b} at x_{i} = {v}"
                )));
            }
        }
        Ok(diag)
    }

    fn validate(&self, cfg: &CoupledConfig) -> Result<()> {
        if let MatrixField::ScaledDiagonal(d) = self {
            if d.len() != cfg.length {
                return Err(Error::Shape {
                    expected: cfg.length,
                    got: d.len(),
                });
            }
            if d.iter().any(|&s| !(s > 0.0)) {
                return Err(Error::InvalidModel("scaling diagonal must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Gradient field `h(x) = B(x)(x − F(x))`.
pub fn gradient_field(
    model: &SystemModel,
    cfg: &CoupledConfig,
    b: &MatrixField,
    x: &StateVector,
    epsilon: f64,
) -> Result<Vec<f64>> {
    let fx = coupled_step(model, cfg, x, epsilon)?;
    let diag = b.diagonal(model, x)?;
    Ok(diag
        .iter()
        .zip(x.iter().zip(fx.iter()))
        .map(|(bi, (xi, fi))| bi * (xi - fi))
        .collect())
}

fn segment_integral(
    model: &SystemModel,
    cfg: &CoupledConfig,
    b: &MatrixField,
    from: &[f64],
    to: &[f64],
    epsilon: f64,
    panels: usize,
) -> Result<f64> {
    let dir: Vec<f64> = to.iter().zip(from).map(|(t, f)| t - f).collect();
    if dir.iter().all(|&d| d == 0.0) {
        return Ok(0.0);
    }
    let mut err = None;
    let value = simpson(
        |t| {
            let s = StateVector(from.iter().zip(&dir).map(|(f, d)| f + t * d).collect());
            match gradient_field(model, cfg, b, &s, epsilon) {
                Ok(h) => h.iter().zip(&dir).map(|(hi, di)| hi * di).sum(),
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            }
        },
        0.0,
        1.0,
        panels,
    );
    match err {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

/// `V_B(x)` along the straight segment from the origin.
pub fn lyapunov_vb(
    model: &SystemModel,
    cfg: &CoupledConfig,
    b: &MatrixField,
    x: &StateVector,
    epsilon: f64,
    path_points: usize,
) -> Result<f64> {
    lyapunov_vb_polyline(model, cfg, b, std::slice::from_ref(x), epsilon, path_points)
}

/// `V_B` along the polyline `0 → vertices[0] → … → vertices[last]`.
pub fn lyapunov_vb_polyline(
    model: &SystemModel,
    cfg: &CoupledConfig,
    b: &MatrixField,
    vertices: &[StateVector],
    epsilon: f64,
    path_points: usize,
) -> Result<f64> {
    if path_points < 2 {
        return Err(Error::param("path_points", "must be at least 2"));
    }
    b.validate(cfg)?;
    let mut from = vec![model.domain().lo; cfg.length];
    let mut total = 0.0;
    for v in vertices {
        if v.len() != cfg.length {
            return Err(Error::Shape {
                expected: cfg.length,
                got: v.len(),
            });
        }
        total += segment_integral(model, cfg, b, &from, v, epsilon, path_points)?;
        from.clone_from(&v.0);
    }
    Ok(total)
}

/// Axis-aligned two-segment path to `x`: first the leading half of the
/// coordinates, then the rest. For a single coordinate the bend point is
/// `x/2`, which keeps the path straight.
pub fn two_segment_path(x: &StateVector) -> Vec<StateVector> {
    let k = x.len().div_ceil(2);
    let bend: Vec<f64> = if x.len() == 1 {
        vec![x[0] / 2.0]
    } else {
        x.iter().enumerate().map(|(i, &v)| if i < k { v } else { 0.0 }).collect()
    };
    vec![StateVector(bend), x.clone()]
}

/// Largest asymmetry of the Jacobian of `h = B(x − F(x))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub max_asymmetry: f64,
    /// Index pair attaining the maximum.
    pub worst: (usize, usize),
    /// Largest Jacobian entry in absolute value, for scale.
    pub jacobian_scale: f64,
}

/// Step for the finite-difference Jacobian.
pub const JACOBIAN_STEP: f64 = 1e-6;

/// Finite-difference Jacobian of the gradient field at `x`.
pub fn gradient_jacobian(
    model: &SystemModel,
    cfg: &CoupledConfig,
    b: &MatrixField,
    x: &StateVector,
    epsilon: f64,
) -> Result<Vec<Vec<f64>>> {
    let n = cfg.length;
    if x.len() != n {
        return Err(Error::Shape {
            expected: n,
            got: x.len(),
        });
    }
    let dom = model.domain();
    let h = JACOBIAN_STEP;
    // jac[i][j] = ∂h_i/∂x_j
    let mut jac = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[j] = (x[j] + h).min(dom.hi);
        minus[j] = (x[j] - h).max(dom.lo);
        let span = plus[j] - minus[j];
        if span <= 0.0 {
            continue;
        }
        let hp = gradient_field(model, cfg, b, &plus, epsilon)?;
        let hm = gradient_field(model, cfg, b, &minus, epsilon)?;
        for i in 0..n {
            jac[i][j] = (hp[i] - hm[i]) / span;
        }
    }
    Ok(jac)
}

pub fn check_gradient_symmetry(
    model: &SystemModel,
    cfg: &CoupledConfig,
    b: &MatrixField,
    x: &StateVector,
    epsilon: f64,
) -> Result<SymmetryReport> {
    let jac = gradient_jacobian(model, cfg, b, x, epsilon)?;
    let mut report = SymmetryReport {
        max_asymmetry: 0.0,
        worst: (0, 0),
        jacobian_scale: 0.0,
    };
    for (i, row) in jac.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            report.jacobian_scale = report.jacobian_scale.max(v.abs());
            let a = (v - jac[j][i]).abs();
            if a > report.max_asymmetry {
                report.max_asymmetry = a;
                report.worst = (i, j);
            }
        }
    }
    Ok(report)
}

/// Sampling controls for [`check_lyapunov_conditions`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovOptions {
    /// Random states drawn when `L > 3`.
    pub random_samples: usize,
    pub seed: u64,
    pub path_points: usize,
    /// Iteration cap for the trajectory whose states are added to the sample.
    pub trajectory_iters: usize,
}

impl Default for LyapunovOptions {
    fn default() -> Self {
        LyapunovOptions {
            random_samples: DEFAULT_RANDOM_SAMPLES,
            seed: 0,
            path_points: DEFAULT_PATH_POINTS,
            trajectory_iters: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub point: Vec<f64>,
    pub value: f64,
}

/// Outcome of [`check_lyapunov_conditions`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub epsilon: f64,
    pub origin_value: f64,
    pub samples: usize,
    pub positivity_ok: bool,
    pub decrease_ok: bool,
    pub positivity_violations: usize,
    pub decrease_violations: usize,
    /// Sample with the smallest `V`.
    pub worst_positivity: Option<Violation>,
    /// Sample with the largest `V(F(x)) − V(x)`.
    pub worst_decrease: Option<Violation>,
}

fn sample_states(
    model: &SystemModel,
    cfg: &CoupledConfig,
    epsilon: f64,
    grid_size: usize,
    opts: &LyapunovOptions,
) -> Result<Vec<StateVector>> {
    let n = cfg.length;
    let dom = model.domain();
    let mut states = Vec::new();
    if n <= 3 {
        let axis = dom.grid(grid_size);
        let total = grid_size.pow(n as u32);
        for mut code in 0..total {
            let mut s = Vec::with_capacity(n);
            for _ in 0..n {
                s.push(axis[code % grid_size]);
                code /= grid_size;
            }
            states.push(StateVector(s));
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for _ in 0..opts.random_samples {
            states.push(StateVector(
                (0..n).map(|_| rng.gen_range(dom.lo..=dom.hi)).collect(),
            ));
        }
    }
    let start = StateVector::filled(n, dom.hi.min(1.0));
    let run = RunOptions {
        max_iter: opts.trajectory_iters,
        tol: crate::dynamics::DEFAULT_TOL,
        record_every: 1,
    };
    let traj = run_coupled(model, cfg, &start, epsilon, &run)?;
    states.extend(traj.states.into_iter().map(|(_, s)| s));
    states.retain(|s| s.iter().any(|&v| v != dom.lo));
    Ok(states)
}

/// Checks `V(0) = 0`, `V > 0` away from the origin and `V(F(x)) < V(x)` on
/// sampled states, with `V = V_B` along straight paths.
///
/// States come from a uniform grid of `grid_size` points per axis when
/// `L ≤ 3`, otherwise from seeded uniform random draws; the trajectory from
/// the all-ones state is always added.
pub fn check_lyapunov_conditions(
    model: &SystemModel,
    cfg: &CoupledConfig,
    b: &MatrixField,
    epsilon: f64,
    grid_size: usize,
    opts: &LyapunovOptions,
) -> Result<LyapunovReport> {
    if grid_size < 2 {
        return Err(Error::param("grid", "must be at least 2 per dimension"));
    }
    b.validate(cfg)?;
    let origin = StateVector::filled(cfg.length, model.domain().lo);
    let origin_value = lyapunov_vb(model, cfg, b, &origin, epsilon, opts.path_points)?;
    let states = sample_states(model, cfg, epsilon, grid_size, opts)?;

    let evaluated: Vec<(f64, f64)> = states
        .par_iter()
        .map(|x| -> Result<(f64, f64)> {
            let v = lyapunov_vb(model, cfg, b, x, epsilon, opts.path_points)?;
            let fx = coupled_step(model, cfg, x, epsilon)?;
            let vf = lyapunov_vb(model, cfg, b, &fx, epsilon, opts.path_points)?;
            Ok((v, vf - v))
        })
        .collect::<Result<_>>()?;

    let mut report = LyapunovReport {
        epsilon,
        origin_value,
        samples: states.len(),
        positivity_ok: true,
        decrease_ok: true,
        positivity_violations: 0,
        decrease_violations: 0,
        worst_positivity: None,
        worst_decrease: None,
    };
    let mut min_v = f64::INFINITY;
    let mut max_dv = f64::NEG_INFINITY;
    for (x, &(v, dv)) in states.iter().zip(&evaluated) {
        if v <= 0.0 {
            report.positivity_violations += 1;
        }
        if dv > -DECREASE_MARGIN * v.abs() {
            report.decrease_violations += 1;
        }
        if v < min_v {
            min_v = v;
            report.worst_positivity = Some(Violation {
                point: x.0.clone(),
                value: v,
            });
        }
        if dv > max_dv {
            max_dv = dv;
            report.worst_decrease = Some(Violation {
                point: x.0.clone(),
                value: dv,
            });
        }
    }
    report.positivity_ok = report.positivity_violations == 0 && origin_value == 0.0;
    report.decrease_ok = report.decrease_violations == 0;
    Ok(report)
}
