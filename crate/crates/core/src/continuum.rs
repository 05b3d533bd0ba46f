//! Continuum limit of the coupled chain.
//!
//! Position `i` of a chain of width `w` sits at `x = i/w`, and a chain
//! `{−L, …, L}` becomes the interval `[−α, α]` with `α = L/w`. The window
//! average turns into the triangular kernel `(1 − |s|)` on `[−1, 1]`, and the
//! fixed-point equation reads `v(x) = ∫ (1 − |s|) F(v(x + s)) ds` with
//! `F = f(g(·); ε)`. Here `v` is the continuum counterpart of the averaged
//! state `y = D·x` of the inside-average chain.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dynamics::{coupled_average, find_fixed_point_with, CoupledConfig, RunOptions, StateVector};
use crate::error::{Error, Result};
use crate::model::SystemModel;
use crate::quadrature::simpson;

pub const MIN_MESH: usize = 16;
pub const DEFAULT_MESH: usize = 64;
pub const DEFAULT_MAX_SWEEPS: usize = 1_000_000;

/// `a(m) = w − |m|` for `m = −(w−1), …, w−1`.
pub fn triangular_weights(w: usize) -> Vec<usize> {
    let wi = w as isize;
    (-(wi - 1)..wi).map(|m| (wi - m.abs()) as usize).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelGap {
    pub discrete: f64,
    pub integral: f64,
    pub gap: f64,
    /// `gap ≤ 1/w`.
    pub within_bound: bool,
}

/// Compares the discrete window average at `i` with the kernel integral of
/// the piecewise-linear interpolant of `x`.
///
/// The integral reaches one position past the window on each side; at the
/// ends of the admissible range that position is filled by linear
/// extrapolation.
pub fn kernel_average_error(x: &StateVector, i: usize, w: usize) -> Result<KernelGap> {
    let len = x.len();
    if w == 0 {
        return Err(Error::param("w", "must be at least 1"));
    }
    if i + 1 < w || i + w > len {
        return Err(Error::Range {
            index: i,
            lo: w.saturating_sub(1),
            hi: len.saturating_sub(w),
        });
    }
    let at = |k: isize| -> f64 {
        let n = len as isize;
        if k < 0 {
            if n >= 2 { 2.0 * x[0] - x[1] } else { x[0] }
        } else if k >= n {
            if n >= 2 { 2.0 * x[len - 1] - x[len - 2] } else { x[len - 1] }
        } else {
            x[k as usize]
        }
    };
    let (ii, wi) = (i as isize, w as isize);
    let norm = (w * w) as f64;
    let discrete: f64 = (-(wi - 1)..wi)
        .map(|m| (wi - m.abs()) as f64 * at(ii + m))
        .sum::<f64>()
        / norm;
    // On each unit cell the integrand is quadratic, so two Simpson panels are exact.
    let mut integral = 0.0;
    for m in -wi..wi {
        let (a, b) = (at(ii + m), at(ii + m + 1));
        integral += simpson(
            |r| (wi as f64 - r.abs()) * (a + (b - a) * (r - m as f64)),
            m as f64,
            (m + 1) as f64,
            2,
        );
    }
    integral /= norm;
    let gap = (discrete - integral).abs();
    Ok(KernelGap {
        discrete,
        integral,
        gap,
        within_bound: gap <= 1.0 / w as f64,
    })
}

/// Sampled continuum profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuumProfile {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub mesh_step: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub iterations: usize,
    pub residual: f64,
}

impl ContinuumProfile {
    /// CSV with columns `x,v`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,v")?;
        for (x, v) in self.grid.iter().zip(&self.values) {
            writeln!(out, "{x},{v:e}")?;
        }
        Ok(())
    }

    /// Linear interpolation of the profile at `x`.
    pub fn at(&self, x: f64) -> f64 {
        let t = (x - self.grid[0]) / self.mesh_step;
        let last = self.values.len() - 1;
        if t <= 0.0 {
            return self.values[0];
        }
        let k = (t.floor() as usize).min(last);
        if k >= last {
            return self.values[last];
        }
        let frac = t - k as f64;
        self.values[k] * (1.0 - frac) + self.values[k + 1] * frac
    }
}

/// Mesh on `[−α, α]` with `mesh` points per unit length and the trapezoid
/// weights of the triangular kernel.
#[derive(Debug, Clone)]
pub struct ContinuumGrid {
    alpha: f64,
    mesh: usize,
    anchored: bool,
    /// Number of mesh points.
    n: usize,
}

impl ContinuumGrid {
    /// `anchored` truncates the kernel at `±α`; otherwise the interval is
    /// periodic (the interior equation with no boundary in reach).
    pub fn new(alpha: f64, mesh: usize, anchored: bool) -> Result<Self> {
        if !(alpha > 1.0) || !alpha.is_finite() {
            return Err(Error::param("alpha", format!("must exceed 1, got {alpha}")));
        }
        if mesh < MIN_MESH {
            return Err(Error::param("mesh", format!("need at least {MIN_MESH} points per unit length, got {mesh}")));
        }
        let cells = 2.0 * alpha * mesh as f64;
        if (cells - cells.round()).abs() > 1e-9 {
            return Err(Error::param("alpha", format!("2·alpha·mesh must be an integer, got {cells}")));
        }
        let cells = cells.round() as usize;
        Ok(ContinuumGrid {
            alpha,
            mesh,
            anchored,
            n: if anchored { cells + 1 } else { cells },
        })
    }

    pub fn step(&self) -> f64 {
        1.0 / self.mesh as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|k| -self.alpha + k as f64 * self.step()).collect()
    }

    fn weight(&self, j: isize) -> f64 {
        let m = self.mesh as f64;
        (1.0 - j.unsigned_abs() as f64 / m) / m
    }

    /// Kernel mass seen by point `k`, i.e. the update of `F ≡ 1`.
    pub fn kernel_mass(&self, k: usize) -> f64 {
        self.apply(&vec![1.0; self.n], k)
    }

    fn apply(&self, fv: &[f64], k: usize) -> f64 {
        let m = self.mesh as isize;
        let n = self.n as isize;
        let k = k as isize;
        let mut acc = 0.0;
        for j in -m..=m {
            let p = k + j;
            let val = if self.anchored {
                if p < 0 || p >= n {
                    continue;
                }
                // Trapezoid end weights on the truncated interval.
                if p == 0 || p == n - 1 { 0.5 * fv[p as usize] } else { fv[p as usize] }
            } else {
                fv[p.rem_euclid(n) as usize]
            };
            acc += self.weight(j) * val;
        }
        acc
    }

    /// One Jacobi sweep `v ← ∫(1−|s|) F(v(x+s)) ds`.
    pub fn sweep(&self, model: &SystemModel, v: &[f64], epsilon: f64) -> Result<Vec<f64>> {
        if v.len() != self.n {
            return Err(Error::Shape { expected: self.n, got: v.len() });
        }
        let fv: Vec<f64> = v.iter().map(|&x| model.evaluate(x, epsilon)).collect::<Result<_>>()?;
        let dom = model.domain();
        Ok((0..self.n).map(|k| dom.clamp(self.apply(&fv, k))).collect())
    }

    /// Picard iteration from `v ≡ 1` until the sup-norm step drops below
    /// `tol`.
    pub fn solve(&self, model: &SystemModel, epsilon: f64, tol: f64, max_sweeps: usize) -> Result<ContinuumProfile> {
        if !(tol > 0.0) {
            return Err(Error::param("tol", "must be positive"));
        }
        let mut v = vec![model.domain().hi.min(1.0); self.n];
        let mut residual = f64::INFINITY;
        let mut iterations = 0;
        while iterations < max_sweeps {
            let next = self.sweep(model, &v, epsilon)?;
            residual = v.iter().zip(&next).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            v = next;
            iterations += 1;
            if residual < tol {
                break;
            }
        }
        if residual >= tol {
            return Err(Error::NonConvergence { iterations, residual, last: v });
        }
        Ok(ContinuumProfile {
            grid: self.points(),
            values: v,
            mesh_step: self.step(),
            alpha: self.alpha,
            epsilon,
            iterations,
            residual,
        })
    }
}

/// Fixed point of the interior equation, with the interval closed up
/// periodically so no boundary is in reach.
pub fn solve_interior_fixed_point(
    model: &SystemModel,
    alpha: f64,
    epsilon: f64,
    mesh: usize,
    tol: f64,
) -> Result<ContinuumProfile> {
    ContinuumGrid::new(alpha, mesh, false)?.solve(model, epsilon, tol, DEFAULT_MAX_SWEEPS)
}

/// Fixed point with the kernel truncated at `x = −α` (lower limit
/// `−(α + x)`) and, by mirror symmetry, at `x = α`.
pub fn solve_boundary_fixed_point(
    model: &SystemModel,
    alpha: f64,
    epsilon: f64,
    mesh: usize,
    tol: f64,
) -> Result<ContinuumProfile> {
    ContinuumGrid::new(alpha, mesh, true)?.solve(model, epsilon, tol, DEFAULT_MAX_SWEEPS)
}

/// Continuum profile against the averaged discrete fixed point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub alpha: f64,
    pub w: usize,
    /// Chain `{−L, …, L}` with `L = α·w`, stored as `2L + 1` positions.
    #[serde(rename = "L")]
    pub half_length: usize,
    pub epsilon: f64,
    pub mesh: usize,
    /// Sup-norm gap over all chain positions.
    pub sup_gap: f64,
    /// Sup-norm gap over positions at least one unit from both ends.
    pub interior_gap: f64,
    pub bound: f64,
    pub within_bound: bool,
}

/// Solves the anchored continuum equation and the anchored inside-average
/// chain of half-length `α·w`, and compares `v(i/w)` with `y_i`.
pub fn compare_with_discrete(
    model: &SystemModel,
    alpha: f64,
    w: usize,
    epsilon: f64,
    mesh: usize,
    tol: f64,
) -> Result<ComparisonReport> {
    let half = alpha * w as f64;
    if (half - half.round()).abs() > 1e-9 {
        return Err(Error::param("alpha", format!("alpha·w = {half} is not an integer")));
    }
    let half = half.round() as usize;
    let profile = solve_boundary_fixed_point(model, alpha, epsilon, mesh, tol)?;
    let cfg = CoupledConfig::new(2 * half + 1, w)?;
    let x = find_fixed_point_with(model, &cfg, epsilon, &RunOptions::new(crate::dynamics::DEFAULT_MAX_ITER, tol))?;
    let y = coupled_average(&cfg, &x);
    let mut sup_gap = 0.0f64;
    let mut interior_gap = 0.0f64;
    for (k, yk) in y.iter().enumerate() {
        let pos = -alpha + k as f64 / w as f64;
        let gap = (profile.at(pos) - yk).abs();
        sup_gap = sup_gap.max(gap);
        if pos.abs() <= alpha - 1.0 {
            interior_gap = interior_gap.max(gap);
        }
    }
    let bound = 2.0 / w as f64;
    Ok(ComparisonReport {
        alpha,
        w,
        half_length: half,
        epsilon,
        mesh,
        sup_gap,
        interior_gap,
        bound,
        within_bound: sup_gap <= bound,
    })
}
