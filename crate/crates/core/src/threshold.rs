//! Single-system, potential, coupled and cancelation-load thresholds.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    run_coupled, single_converges_to_zero, Boundary, CoupledConfig, RunOptions, StateVector,
    Variant,
};
use crate::error::{Error, Result};
use crate::model::{CancelationModel, EpsilonMode, SystemModel};
use crate::potential::{potential_parts, PotentialProfile, DEFAULT_PANELS};
use crate::search::{argmin, bisect_predicate, bisect_root, golden_section};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const MINRATIO_GRID: usize = 10_000;
pub const DEFAULT_POTENTIAL_GRID: usize = 4096;
/// Slack in the `min U ≥ 0` predicate.
pub const POTENTIAL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// `min x / f(g(x))`.
    #[serde(rename = "minratio")]
    MinRatio,
    /// Bisection on convergence of the scalar recursion.
    #[serde(rename = "de")]
    SingleDe,
    /// Largest ε with `min U(·; ε) ≥ 0`.
    #[serde(rename = "potential")]
    PotentialNonneg,
    /// Bisection on convergence of the anchored chain.
    CoupledDe,
    /// Stationary points of the cancelation load ratio.
    StationaryScan,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::MinRatio => "minratio",
            Method::SingleDe => "de",
            Method::PotentialNonneg => "potential",
            Method::CoupledDe => "coupled-de",
            Method::StationaryScan => "stationary-scan",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Witness {
    Point(f64),
    State(Vec<f64>),
}

impl Witness {
    pub fn point(&self) -> Option<f64> {
        match self {
            Witness::Point(x) => Some(*x),
            Witness::State(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub value: f64,
    pub bracket: (f64, f64),
    pub method: Method,
    pub evaluations: usize,
    pub witness: Option<Witness>,
    /// Residual of the method's defining identity at the witness, when it
    /// has one.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub residual: Option<f64>,
    /// Notes such as `boundary` (no interior stationary point) or
    /// `circular` (coupled threshold short-circuited to the single one).
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub flags: Vec<String>,
    /// Predicate samples `(ε, holds)` probed by a bisection, in order.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub trace: Vec<(f64, bool)>,
}

impl ThresholdResult {
    fn new(value: f64, bracket: (f64, f64), method: Method, evaluations: usize) -> Self {
        ThresholdResult {
            value,
            bracket,
            method,
            evaluations,
            witness: None,
            residual: None,
            flags: Vec::new(),
            trace: Vec::new(),
        }
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }

    /// `method=<m> threshold=<lo>..<hi>`.
    pub fn summary_line(&self) -> String {
        format!(
            "method={} threshold={:.10}..{:.10}",
            self.method, self.bracket.0, self.bracket.1
        )
    }

    /// Whether every probed true lies below every probed false.
    pub fn trace_is_monotone(&self) -> bool {
        let max_true = self
            .trace
            .iter()
            .filter(|s| s.1)
            .map(|s| s.0)
            .fold(f64::NEG_INFINITY, f64::max);
        let min_false = self
            .trace
            .iter()
            .filter(|s| !s.1)
            .map(|s| s.0)
            .fold(f64::INFINITY, f64::min);
        max_true < min_false
    }
}

fn require_multiplicative(model: &SystemModel) -> Result<()> {
    if model.epsilon_mode() != EpsilonMode::Multiplicative {
        return Err(Error::InvalidModel(format!(
            "`{}` is not multiplicative in ε",
            model.name()
        )));
    }
    Ok(())
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::param("epsilon-tol", format!("must be positive, got {tol}")));
    }
    Ok(())
}

/// Grid scan of `phi` over `grid_size` interior points of `(lo, hi]` followed
/// by golden-section refinement around the best sample.
fn minimize_on_grid(
    phi: &(dyn Fn(f64) -> f64 + Sync),
    lo: f64,
    hi: f64,
    grid_size: usize,
) -> Option<(f64, f64)> {
    let h = (hi - lo) / grid_size as f64;
    let xs: Vec<f64> = (1..=grid_size).map(|k| lo + k as f64 * h).collect();
    let vals: Vec<f64> = xs.par_iter().map(|&x| phi(x)).collect();
    let k = argmin(&vals)?;
    let a = (xs[k] - h).max(lo);
    let b = (xs[k] + h).min(hi);
    let (x, v) = golden_section(phi, a, b, 1e-13 * (1.0 + xs[k].abs()));
    Some(if v <= vals[k] { (x, v) } else { (xs[k], vals[k]) })
}

/// `ε₀ = min x / f(g(x))` with its minimizer.
///
/// The minimizer is polished by bisection on `h(x) − x h′(x)` (with
/// `h = f∘g`) when that changes sign next to the grid minimum; the reported
/// residual is `|h(x₀) − x₀ h′(x₀)|`.
pub fn single_threshold_minratio(model: &SystemModel) -> Result<ThresholdResult> {
    require_multiplicative(model)?;
    let dom = model.domain();
    let h = |x: f64| model.node_unscaled(model.g(x)).unwrap_or(0.0);
    let ratio = |x: f64| {
        let v = h(x);
        if v > 0.0 {
            x / v
        } else {
            f64::INFINITY
        }
    };
    let (mut x0, _) = minimize_on_grid(&ratio, dom.lo, dom.hi, MINRATIO_GRID)
        .ok_or_else(|| Error::Degenerate(format!("f∘g vanishes on the interior of the domain for `{}`", model.name())))?;

    let stationarity = |x: f64| h(x) - x * model.composite_prime(x, 1.0);
    let step = dom.width() / MINRATIO_GRID as f64;
    let (a, b) = ((x0 - step).max(dom.lo), (x0 + step).min(dom.hi));
    if a > dom.lo && stationarity(a).signum() != stationarity(b).signum() {
        let polished = bisect_root(stationarity, a, b);
        if ratio(polished) <= ratio(x0) * (1.0 + 1e-12) {
            x0 = polished;
        }
    }
    let value = ratio(x0);
    let mut out = ThresholdResult::new(value, (value, value), Method::MinRatio, MINRATIO_GRID);
    out.witness = Some(Witness::Point(x0));
    out.residual = Some(stationarity(x0).abs());
    Ok(out)
}

/// Bisects `ε` on whether the scalar recursion started at the top of the
/// domain dies out.
pub fn single_threshold_de(model: &SystemModel, tol: f64) -> Result<ThresholdResult> {
    single_threshold_de_with(model, tol, &RunOptions::default())
}

pub fn single_threshold_de_with(
    model: &SystemModel,
    tol: f64,
    run: &RunOptions,
) -> Result<ThresholdResult> {
    check_tol(tol)?;
    let start = model.domain().hi.min(1.0);
    let pred = |eps: f64| -> Result<bool> {
        Ok(single_converges_to_zero(model, start, eps, run)?.0)
    };
    let mut out = bisect_fallible(pred, 0.0, 1.0, tol, Method::SingleDe)?;
    if !out.has_flag("saturated") {
        let (_, x) = single_converges_to_zero(model, start, out.bracket.1, run)?;
        out.witness = Some(Witness::Point(x));
    }
    Ok(out)
}

/// Bisection over `[lo, hi]` on a fallible monotone predicate. If the
/// predicate still holds at `hi` the result is `hi` with flag `saturated`.
fn bisect_fallible<P>(mut pred: P, lo: f64, hi: f64, tol: f64, method: Method) -> Result<ThresholdResult>
where
    P: FnMut(f64) -> Result<bool>,
{
    let mut trace = Vec::new();
    let at_lo = pred(lo)?;
    trace.push((lo, at_lo));
    if !at_lo {
        return Err(Error::Degenerate(format!(
            "threshold predicate fails at ε = {lo}; the model does not vanish there"
        )));
    }
    let at_hi = pred(hi)?;
    trace.push((hi, at_hi));
    if at_hi {
        let mut out = ThresholdResult::new(hi, (hi, hi), method, 2);
        out.flags.push("saturated".into());
        out.trace = trace;
        return Ok(out);
    }
    let mut err = None;
    let bracket = bisect_predicate(
        |eps| {
            if err.is_some() {
                return false;
            }
            match pred(eps) {
                Ok(v) => {
                    trace.push((eps, v));
                    v
                }
                Err(e) => {
                    err = Some(e);
                    false
                }
            }
        },
        lo,
        hi,
        tol,
    );
    if let Some(e) = err {
        return Err(e);
    }
    let mut out = ThresholdResult::new(
        0.5 * (bracket.lo + bracket.hi),
        (bracket.lo, bracket.hi),
        method,
        bracket.evaluations + 2,
    );
    out.trace = trace;
    Ok(out)
}

/// Largest `ε ∈ (0, 1]` with `min_x U(x; ε) ≥ 0`.
///
/// For multiplicative models `U = P − εQ`, so the threshold is
/// `min_{x: Q(x) > 0} P(x)/Q(x)` clipped to 1; this avoids the predicate
/// slack swamping the tiny potential dips of high-degree models. Generic
/// models use [`potential_threshold_bisection`].
pub fn potential_threshold(model: &SystemModel, grid_size: usize, tol: f64) -> Result<ThresholdResult> {
    check_tol(tol)?;
    if grid_size < 2 {
        return Err(Error::param("grid", "must be at least 2"));
    }
    if model.epsilon_mode() == EpsilonMode::Generic {
        return potential_threshold_bisection(model, grid_size, tol);
    }
    let dom = model.domain();
    let ratio = |x: f64| match potential_parts(model, x, DEFAULT_PANELS) {
        Ok((p, q)) if q > 0.0 => p / q,
        _ => f64::INFINITY,
    };
    let (x, v) = minimize_on_grid(&ratio, dom.lo, dom.hi, grid_size)
        .ok_or_else(|| Error::Degenerate(format!("potential of `{}` has no ε-dependence", model.name())))?;
    let mut out = if v >= 1.0 {
        let mut r = ThresholdResult::new(1.0, (1.0, 1.0), Method::PotentialNonneg, grid_size);
        r.flags.push("saturated".into());
        r
    } else {
        ThresholdResult::new(v, (v - 0.5 * tol, (v + 0.5 * tol).min(1.0)), Method::PotentialNonneg, grid_size)
    };
    out.witness = Some(Witness::Point(x));
    let (p, q) = potential_parts(model, x, DEFAULT_PANELS)?;
    out.residual = Some(p - out.value * q);
    Ok(out)
}

/// Bisection on `min_x U(x; ε) ≥ −1e−12` with the minimum taken over a
/// `grid_size` profile and polished by golden section.
pub fn potential_threshold_bisection(
    model: &SystemModel,
    grid_size: usize,
    tol: f64,
) -> Result<ThresholdResult> {
    check_tol(tol)?;
    let min_u = |eps: f64| -> Result<(f64, f64)> {
        let prof = PotentialProfile::sample(model, eps, grid_size, DEFAULT_PANELS.max(2 * grid_size))?;
        let k = prof.grid.iter().position(|&g| g == prof.argmin).unwrap_or(0);
        if k == 0 || k + 1 == prof.grid.len() {
            return Ok((prof.argmin, prof.min_value));
        }
        let (a, b) = (prof.grid[k - 1], prof.grid[k + 1]);
        let base = prof.values[k - 1];
        let (x, du) = golden_section(
            |x| crate::quadrature::simpson(|z| model.g_prime(z) * (z - model.node(model.g(z), eps)), a, x, 64),
            a,
            b,
            1e-12,
        );
        Ok(if base + du < prof.min_value { (x, base + du) } else { (prof.argmin, prof.min_value) })
    };
    let mut out = bisect_fallible(
        |eps| Ok(min_u(eps)?.1 >= -POTENTIAL_SLACK),
        0.0,
        1.0,
        tol,
        Method::PotentialNonneg,
    )?;
    let (x, u) = min_u(out.value)?;
    out.witness = Some(Witness::Point(x));
    out.residual = Some(u);
    Ok(out)
}

/// Bisects `ε` on whether the chain started at all-ones converges to zero.
pub fn coupled_threshold_de(model: &SystemModel, cfg: &CoupledConfig, tol: f64) -> Result<ThresholdResult> {
    coupled_threshold_de_with(model, cfg, tol, &RunOptions::default())
}

pub fn coupled_threshold_de_with(
    model: &SystemModel,
    cfg: &CoupledConfig,
    tol: f64,
    run: &RunOptions,
) -> Result<ThresholdResult> {
    check_tol(tol)?;
    if cfg.boundary == Boundary::Circular {
        // A circular chain from a uniform start stays uniform.
        let mut out = single_threshold_de_with(model, tol, run)?;
        out.method = Method::CoupledDe;
        out.flags.push("circular".into());
        return Ok(out);
    }
    let start = StateVector::filled(cfg.length, model.domain().hi.min(1.0));
    let quiet = run.quiet();
    let pred = |eps: f64| -> Result<bool> {
        Ok(run_coupled(model, cfg, &start, eps, &quiet)?.converged_to_zero)
    };
    let mut out = bisect_fallible(pred, 0.0, 1.0, tol, Method::CoupledDe)?;
    if !out.has_flag("saturated") {
        let t = run_coupled(model, cfg, &start, out.bracket.1, &quiet)?;
        out.witness = Some(Witness::State(t.final_state().0.clone()));
    }
    Ok(out)
}

/// Load threshold of `x ↦ α g(x) + σ²`.
///
/// Scans `g(x) − (x − σ²) g′(x)` on `(σ², x_max)` for sign changes and
/// returns the smallest load ratio `(x − σ²)/g(x)` over the local minima of
/// the ratio. Without an interior minimum the result is the ratio at
/// `x_max` flagged `boundary`. The residual is the larger defect of
/// `α₀ g(x₀) + σ² = x₀` and `α₀ g′(x₀) = 1`.
pub fn cancelation_threshold(model: &CancelationModel) -> Result<ThresholdResult> {
    const SCAN: usize = 10_000;
    let (lo, hi) = (model.sigma2, model.x_max);
    if !(hi > lo) {
        return Err(Error::param("x_max", format!("must exceed sigma2 = {lo}")));
    }
    let s = |x: f64| model.stationarity(x);
    let h = (hi - lo) / SCAN as f64;
    let xs: Vec<f64> = (1..SCAN).map(|k| lo + k as f64 * h).collect();
    let mut minima = Vec::new();
    for pair in xs.windows(2) {
        let (sa, sb) = (s(pair[0]), s(pair[1]));
        if !sa.is_finite() || !sb.is_finite() {
            return Err(Error::NumericDomain { x: pair[0], epsilon: model.alpha });
        }
        // The ratio's derivative is s/g², so a local minimum is a − to + change.
        if sa < 0.0 && sb >= 0.0 {
            minima.push(bisect_root(s, pair[0], pair[1]));
        }
    }
    let best = minima
        .iter()
        .copied()
        .min_by(|a, b| model.load_ratio(*a).total_cmp(&model.load_ratio(*b)));
    let mut out = match best {
        Some(x0) => {
            let a0 = model.load_ratio(x0);
            let mut r = ThresholdResult::new(a0, (a0, a0), Method::StationaryScan, SCAN);
            r.witness = Some(Witness::Point(x0));
            let fixed = (a0 * model.g(x0) + model.sigma2 - x0).abs();
            let tangent = (a0 * model.g_prime(x0) - 1.0).abs();
            r.residual = Some(fixed.max(tangent));
            r
        }
        None => {
            let a0 = model.load_ratio(hi);
            let mut r = ThresholdResult::new(a0, (a0, a0), Method::StationaryScan, SCAN);
            r.witness = Some(Witness::Point(hi));
            r.flags.push("boundary".into());
            r
        }
    };
    out.trace.clear();
    Ok(out)
}

/// One row of a threshold sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "L")]
    pub length: usize,
    #[serde(rename = "w")]
    pub width: usize,
    pub variant: Variant,
    pub method: Method,
    pub threshold_lo: f64,
    pub threshold_hi: f64,
    pub evaluations: usize,
}

/// Coupled DE thresholds for each configuration, computed on a pool of
/// `jobs` workers (0 picks the default pool size). Rows come back in input
/// order.
pub fn sweep_coupled(
    model: &SystemModel,
    configs: &[CoupledConfig],
    tol: f64,
    jobs: usize,
) -> Result<Vec<SweepRow>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::param("jobs", e.to_string()))?;
    pool.install(|| {
        configs
            .par_iter()
            .map(|cfg| {
                let r = coupled_threshold_de(model, cfg, tol)?;
                Ok(SweepRow {
                    length: cfg.length,
                    width: cfg.width,
                    variant: cfg.variant,
                    method: r.method,
                    threshold_lo: r.bracket.0,
                    threshold_hi: r.bracket.1,
                    evaluations: r.evaluations,
                })
            })
            .collect()
    })
}

/// CSV with columns `L,w,variant,method,threshold_lo,threshold_hi,evaluations`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "L,w,variant,method,threshold_lo,threshold_hi,evaluations")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.length, r.width, r.variant, r.method, r.threshold_lo, r.threshold_hi, r.evaluations
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_ldpc_regular;

    fn ldpc() -> SystemModel {
        make_ldpc_regular(3, 6).unwrap()
    }

    #[test]
    fn minratio_36() {
        let r = single_threshold_minratio(&ldpc()).unwrap();
        assert!((r.value - 0.4294398).abs() < 1e-6);
        let x0 = r.witness.unwrap().point().unwrap();
        assert!((x0 - 0.26057).abs() < 5e-5);
        let y = 1.0 - x0;
        assert!((y.powi(5) + 10.0 * x0 * y.powi(4) - 1.0).abs() < 1e-8);
        assert!(r.residual.unwrap() < 1e-6);
    }

    #[test]
    fn minratio_identity_map() {
        let m = SystemModel::multiplicative("id", |x| x).build().unwrap();
        let r = single_threshold_minratio(&m).unwrap();
        assert!((r.value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn minratio_degenerate() {
        let m = SystemModel::multiplicative("zero", |_| 0.0).build().unwrap();
        assert!(matches!(single_threshold_minratio(&m), Err(Error::Degenerate(_))));
    }

    #[test]
    fn de_agrees_with_minratio() {
        let m = ldpc();
        let de = single_threshold_de(&m, 1e-6).unwrap();
        let mr = single_threshold_minratio(&m).unwrap();
        assert!(de.bracket.1 - de.bracket.0 <= 1e-6);
        assert!((de.value - mr.value).abs() <= 2e-6);
        assert!(de.trace_is_monotone());
        assert_eq!(de.trace[0], (0.0, true));
        assert_eq!(de.trace[1], (1.0, false));
    }

    #[test]
    fn zero_tolerance_rejected() {
        assert!(matches!(
            potential_threshold(&ldpc(), 100, 0.0),
            Err(Error::Parameter { name: "epsilon-tol", .. })
        ));
    }

    #[test]
    fn potential_threshold_between_single_and_capacity() {
        let m = ldpc();
        let coarse = potential_threshold(&m, 1000, 1e-6).unwrap();
        let fine = potential_threshold(&m, 10_000, 1e-6).unwrap();
        assert!(coarse.value > 0.4294398 && coarse.value < 0.5);
        assert!((coarse.value - fine.value).abs() < 1e-4);
        // Independent check: U at the threshold touches zero at the witness.
        let x = fine.witness.unwrap().point().unwrap();
        assert!(crate::potential::closed_form_ldpc(3, 6, x, fine.value).abs() < 1e-12);
    }

    #[test]
    fn potential_bisection_agrees_with_ratio() {
        let m = ldpc();
        let a = potential_threshold(&m, 2000, 1e-7).unwrap();
        let b = potential_threshold_bisection(&m, 2000, 1e-7).unwrap();
        assert!((a.value - b.value).abs() < 1e-6, "{} vs {}", a.value, b.value);
        assert!(b.trace_is_monotone());
    }

    #[test]
    fn coupled_above_single() {
        let cfg = CoupledConfig::new(33, 3).unwrap();
        let r = coupled_threshold_de(&ldpc(), &cfg, 1e-4).unwrap();
        assert!(r.value > 0.4294398);
        assert!(r.trace_is_monotone());
        assert!(matches!(r.witness, Some(Witness::State(ref s)) if s.len() == 33));
    }

    #[test]
    fn circular_short_circuits() {
        let cfg = CoupledConfig::new(9, 3).unwrap().with_boundary(Boundary::Circular);
        let r = coupled_threshold_de(&ldpc(), &cfg, 1e-6).unwrap();
        assert!(r.has_flag("circular"));
        assert!((r.value - 0.4294398).abs() < 2e-6);
    }

    #[test]
    fn cancelation_constant_and_square() {
        let c = crate::model::make_cancelation(|_| 1.0, 0.1, 0.5).unwrap();
        let r = cancelation_threshold(&c).unwrap();
        assert!(r.has_flag("boundary"));
        let c = crate::model::make_cancelation(|x| x * x, 0.0, 0.5).unwrap();
        assert!(cancelation_threshold(&c).unwrap().has_flag("boundary"));
    }

    #[test]
    fn cancelation_sigmoid_matches_de() {
        let g = |x: f64| 1.0 / (1.0 + (-20.0 * (x - 0.5)).exp());
        let c = crate::model::make_cancelation(g, 0.05, 0.0).unwrap();
        let r = cancelation_threshold(&c).unwrap();
        assert!(!r.has_flag("boundary"));
        assert!(r.residual.unwrap() < 1e-8);
        let x0 = r.witness.unwrap().point().unwrap();
        let b = bisect_predicate(|a| c.iterate(c.x_max, a, 1_000_000, 1e-13).0 < x0, 0.0, 2.0, 1e-9);
        assert!((r.value - 0.5 * (b.lo + b.hi)).abs() < 1e-6, "{} vs {:?}", r.value, b);
    }

    #[test]
    fn sweep_rows_in_order() {
        let m = ldpc();
        let cfgs: Vec<_> = (1..=3).map(|w| CoupledConfig::new(11 * w, w).unwrap()).collect();
        let rows = sweep_coupled(&m, &cfgs, 1e-3, 2).unwrap();
        assert_eq!(rows.iter().map(|r| r.width).collect::<Vec<_>>(), vec![1, 2, 3]);
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("L,w,variant,method,threshold_lo,threshold_hi,evaluations\n11,1,inside,coupled-de,"));
    }

    #[test]
    fn summary_line_format() {
        let r = ThresholdResult::new(0.5, (0.25, 0.75), Method::MinRatio, 1);
        assert_eq!(r.summary_line(), "method=minratio threshold=0.2500000000..0.7500000000");
    }
}
