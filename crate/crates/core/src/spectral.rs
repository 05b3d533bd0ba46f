//! Coupling matrices, linearizations around fixed points and spectral radii
//! of nonnegative matrices.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    coupled_average, find_fixed_point, Boundary, CoupledConfig, StateVector, Variant,
};
use crate::error::{Error, Result};
use crate::model::{EpsilonMode, SystemModel};
use crate::search::bisect_root;

pub const MAX_POWER_ITER: usize = 100_000;
/// Iterations without progress before the power iteration restarts.
const STALL_WINDOW: usize = 2_000;

/// Row-sparse square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseMatrix {
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = rows.len();
        for row in &rows {
            if let Some(&(j, _)) = row.iter().find(|(j, _)| *j >= n) {
                return Err(Error::Range { index: j, lo: 0, hi: n.saturating_sub(1) });
            }
        }
        Ok(SparseMatrix { n, rows })
    }

    pub fn from_dense(dense: &[Vec<f64>]) -> Result<Self> {
        let n = dense.len();
        let mut rows = Vec::with_capacity(n);
        for r in dense {
            if r.len() != n {
                return Err(Error::Shape { expected: n, got: r.len() });
            }
            rows.push(r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| (j, *v)).collect());
        }
        Ok(SparseMatrix { n, rows })
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix { n, rows: (0..n).map(|i| vec![(i, 1.0)]).collect() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i].iter().filter(|(k, _)| *k == j).fold(0.0, |s, (_, v)| s + v)
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|(_, v)| v).sum()).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j)).collect()).collect()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.rows.iter().flatten().all(|(_, v)| *v >= 0.0)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| self.rows[i].iter().all(|&(j, v)| (v - self.get(j, i)).abs() <= tol))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|&(j, v)| v * x[j]).sum()).collect()
    }

    /// `diag(d) · self`.
    pub fn scale_rows(&self, d: &[f64]) -> Result<Self> {
        if d.len() != self.n {
            return Err(Error::Shape { expected: self.n, got: d.len() });
        }
        Ok(SparseMatrix {
            n: self.n,
            rows: self
                .rows
                .iter()
                .zip(d)
                .map(|(r, s)| r.iter().map(|&(j, v)| (j, s * v)).collect())
                .collect(),
        })
    }

    /// Dense CSV for `n ≤ 64`, otherwise `i,j,value` triplets.
    pub fn write_dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        if self.n <= 64 {
            for row in self.to_dense() {
                let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                writeln!(out, "{}", cells.join(","))?;
            }
        } else {
            writeln!(out, "i,j,value")?;
            for (i, r) in self.rows.iter().enumerate() {
                let mut r = r.clone();
                r.sort_by_key(|e| e.0);
                for (j, v) in r {
                    writeln!(out, "{i},{j},{v}")?;
                }
            }
        }
        Ok(())
    }
}

fn coupling_rows(len: usize, w: usize, circular: bool) -> Vec<Vec<(usize, f64)>> {
    let (l, wi) = (len as isize, w as isize);
    let norm = (w * w) as f64;
    (0..l)
        .map(|i| {
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(2 * w - 1);
            for m in -(wi - 1)..wi {
                let j = i + m;
                let j = if circular {
                    j.rem_euclid(l) as usize
                } else if (0..l).contains(&j) {
                    j as usize
                } else {
                    continue;
                };
                let v = (wi - m.abs()) as f64 / norm;
                match row.iter_mut().find(|e| e.0 == j) {
                    Some(e) => e.1 += v,
                    None => row.push((j, v)),
                }
            }
            row.sort_by_key(|e| e.0);
            row
        })
        .collect()
}

/// `D_ij = (w − |i−j|)/w²` inside the band, with rows truncated at the ends
/// of the chain.
pub fn build_d(len: usize, w: usize) -> Result<SparseMatrix> {
    check_dims(len, w)?;
    Ok(SparseMatrix { n: len, rows: coupling_rows(len, w, false) })
}

/// The same band with indices taken modulo `L`; every row sums to 1.
pub fn build_d_circular(len: usize, w: usize) -> Result<SparseMatrix> {
    check_dims(len, w)?;
    Ok(SparseMatrix { n: len, rows: coupling_rows(len, w, true) })
}

pub fn build_coupling(len: usize, w: usize, boundary: Boundary) -> Result<SparseMatrix> {
    match boundary {
        Boundary::Anchored => build_d(len, w),
        Boundary::Circular => build_d_circular(len, w),
    }
}

fn check_dims(len: usize, w: usize) -> Result<()> {
    if len == 0 {
        return Err(Error::param("L", "must be at least 1"));
    }
    if w == 0 {
        return Err(Error::param("w", "must be at least 1"));
    }
    Ok(())
}

/// Leading eigenpair of a nonnegative matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub rho: f64,
    /// Leading vector normalized to unit max-norm.
    pub vector: Vec<f64>,
    /// Collatz–Wielandt bounds; meaningful when the vector is positive.
    pub lower: f64,
    pub upper: f64,
    pub iterations: usize,
    pub restarts: usize,
}

fn normalize(v: &mut [f64]) -> f64 {
    let m = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if m > 0.0 {
        v.iter_mut().for_each(|x| *x /= m);
    }
    m
}

fn cw_bounds(v: &[f64], mv: &[f64]) -> Option<(f64, f64)> {
    if v.iter().any(|&x| x <= 0.0) {
        return None;
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (a, b) in v.iter().zip(mv) {
        let r = b / a;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    Some((lo, hi))
}

/// Spectral radius by power iteration from the all-ones vector.
///
/// Stops once the Collatz–Wielandt bounds of a positive iterate are within
/// `tol`, or once both the eigen-residual and the change between successive
/// estimates drop below `tol`. A stall triggers a restart from a randomly
/// perturbed vector with a unit diagonal shift, which separates eigenvalues
/// of equal modulus.
pub fn spectral_radius(m: &SparseMatrix, tol: f64) -> Result<SpectralEstimate> {
    if !(tol > 0.0) {
        return Err(Error::param("tol", "must be positive"));
    }
    if !m.is_nonnegative() {
        return Err(Error::InvalidModel("matrix has negative entries".into()));
    }
    let n = m.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v = vec![1.0; n];
    let mut shift = 0.0;
    let mut prev = f64::NAN;
    let mut best_gap = f64::INFINITY;
    let mut since_progress = 0;
    let mut restarts = 0;
    for it in 1..=MAX_POWER_ITER {
        let mut mv = m.mul_vec(&v);
        if shift != 0.0 {
            mv.iter_mut().zip(&v).for_each(|(a, b)| *a += shift * b);
        }
        // v has unit max-norm, so the max-norm of Mv estimates ρ + shift.
        let est = mv.iter().fold(0.0f64, |a, x| a.max(x.abs())) - shift;
        if est == 0.0 {
            return Ok(SpectralEstimate { rho: 0.0, vector: v, lower: 0.0, upper: 0.0, iterations: it, restarts });
        }
        let bounds = cw_bounds(&v, &mv)
            .map(|(a, b)| (a - shift, b - shift))
            .filter(|(lo, hi)| hi - lo <= tol);
        // Eigen-residual of the current iterate; reducible matrices can keep
        // the Collatz–Wielandt bounds apart forever.
        let resid = mv
            .iter()
            .zip(&v)
            .fold(0.0f64, |a, (x, y)| a.max((x - (est + shift) * y).abs()));
        let gap = match bounds {
            Some((lo, hi)) => hi - lo,
            None => resid.max((est - prev).abs()),
        };
        if gap <= tol {
            let (lower, upper) = bounds.unwrap_or((est, est));
            let rho = if bounds.is_some() { 0.5 * (lower + upper) } else { est };
            let mut vector = mv;
            normalize(&mut vector);
            return Ok(SpectralEstimate { rho, vector, lower, upper, iterations: it, restarts });
        }
        if gap < 0.5 * best_gap {
            best_gap = gap;
            since_progress = 0;
        } else {
            since_progress += 1;
        }
        prev = est;
        v = mv;
        normalize(&mut v);
        if since_progress >= STALL_WINDOW {
            restarts += 1;
            shift = 1.0_f64.max(est);
            v.iter_mut().for_each(|x| *x = x.abs() + 1e-3 * rng.gen::<f64>());
            normalize(&mut v);
            since_progress = 0;
            best_gap = f64::INFINITY;
            prev = f64::NAN;
        }
    }
    Err(Error::NonConvergence { iterations: MAX_POWER_ITER, residual: best_gap, last: v })
}

/// Linearization of the inside-average map at a state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearizationReport {
    pub epsilon: f64,
    pub fixed_point: Vec<f64>,
    /// Window averages `y_i`.
    pub y: Vec<f64>,
    /// Row coefficients `a_i = f′(g(y_i))·g′(y_i)`; the Jacobian is
    /// `A = ε·diag(a)·D` (for generic models `ε` is already inside `a`).
    pub a: Vec<f64>,
    pub rho_a: f64,
    pub has_unstable_eigenvalue: bool,
    pub leading_vector: Vec<f64>,
    /// The fixed point is the origin.
    pub stable_at_origin: bool,
}

fn row_scale(model: &SystemModel, epsilon: f64) -> f64 {
    match model.epsilon_mode() {
        EpsilonMode::Multiplicative => epsilon,
        EpsilonMode::Generic => 1.0,
    }
}

fn row_coefficient(model: &SystemModel, y: f64, epsilon: f64) -> f64 {
    let e = match model.epsilon_mode() {
        EpsilonMode::Multiplicative => 1.0,
        EpsilonMode::Generic => epsilon,
    };
    model.node_prime(model.g(y), e) * model.g_prime(y)
}

/// `A = ε·diag(a)·D` at the state `x`.
pub fn jacobian_at(
    model: &SystemModel,
    cfg: &CoupledConfig,
    x: &StateVector,
    epsilon: f64,
) -> Result<(SparseMatrix, Vec<f64>, Vec<f64>)> {
    if cfg.variant != Variant::InsideAverage {
        return Err(Error::param("variant", "the linearization is defined for the inside-average map"));
    }
    if x.len() != cfg.length {
        return Err(Error::Shape { expected: cfg.length, got: x.len() });
    }
    let d = build_coupling(cfg.length, cfg.width, cfg.boundary)?;
    let y = coupled_average(cfg, x);
    let a: Vec<f64> = y.iter().map(|&yi| row_coefficient(model, yi, epsilon)).collect();
    let s = row_scale(model, epsilon);
    let scaled: Vec<f64> = a.iter().map(|ai| s * ai).collect();
    Ok((d.scale_rows(&scaled)?, y, a))
}

/// Linearizes at a given state and reports `ρ(A)`.
pub fn linearize_at(
    model: &SystemModel,
    cfg: &CoupledConfig,
    x: &StateVector,
    epsilon: f64,
    tol: f64,
) -> Result<LinearizationReport> {
    let (a_mat, y, a) = jacobian_at(model, cfg, x, epsilon)?;
    let est = spectral_radius(&a_mat, tol)?;
    Ok(LinearizationReport {
        epsilon,
        fixed_point: x.0.clone(),
        y,
        a,
        rho_a: est.rho,
        has_unstable_eigenvalue: est.rho > 1.0,
        leading_vector: est.vector,
        stable_at_origin: x.iter().all(|&v| v == 0.0),
    })
}

/// Finds the fixed point reached from all-ones and linearizes there.
pub fn instability_test(model: &SystemModel, cfg: &CoupledConfig, epsilon: f64) -> Result<LinearizationReport> {
    let tol = crate::dynamics::DEFAULT_TOL;
    let fp = find_fixed_point(model, cfg, epsilon, tol)?;
    let x = if fp.max_norm() < tol { StateVector::zeros(cfg.length) } else { fp };
    linearize_at(model, cfg, &x, epsilon, 1e-12)
}

/// Nonzero roots of `x = f(g(x); ε)` in the domain, by sign-change scan and
/// bisection, in increasing order.
pub fn scalar_fixed_points(model: &SystemModel, epsilon: f64) -> Result<Vec<f64>> {
    const SCAN: usize = 20_000;
    let dom = model.domain();
    let phi = |x: f64| model.node(model.g(x), epsilon) - x;
    let xs = dom.grid(SCAN + 1);
    let mut roots = Vec::new();
    for pair in xs.windows(2).skip(1) {
        let (a, b) = (phi(pair[0]), phi(pair[1]));
        if a.is_nan() || b.is_nan() {
            return Err(Error::NumericDomain { x: pair[0], epsilon });
        }
        if a == 0.0 {
            roots.push(pair[0]);
        } else if a.signum() != b.signum() && b != 0.0 {
            roots.push(bisect_root(phi, pair[0], pair[1]));
        }
    }
    if phi(dom.hi) == 0.0 {
        roots.push(dom.hi);
    }
    Ok(roots)
}

/// A uniform state at `value`, the candidate of interior-uniform type.
pub fn uniform_candidate(cfg: &CoupledConfig, value: f64) -> StateVector {
    StateVector::filled(cfg.length, value)
}

/// Smallest `w` in `widths` for which the uniform candidate built from
/// `root` has `ρ(A) > 1`, with `L = len_of(w)`.
pub fn smallest_unstable_width(
    model: &SystemModel,
    epsilon: f64,
    root: f64,
    widths: impl IntoIterator<Item = usize>,
    len_of: impl Fn(usize) -> usize,
) -> Result<Option<usize>> {
    for w in widths {
        let cfg = CoupledConfig::new(len_of(w), w)?;
        let rep = linearize_at(model, &cfg, &uniform_candidate(&cfg, root), epsilon, 1e-12)?;
        if rep.has_unstable_eigenvalue {
            return Ok(Some(w));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoLemmaRow {
    pub w: usize,
    #[serde(rename = "L")]
    pub length: usize,
    pub rho: f64,
    /// Smallest entry of the leading vector.
    pub leading_min: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoLemmaReport {
    pub boundary: Boundary,
    pub tol: f64,
    pub rows: Vec<RhoLemmaRow>,
    pub all_pass: bool,
}

/// Checks `|ρ(D) − 1| ≤ tol` for `L = 2w+1` and `L = 4w+3`.
pub fn verify_rho_lemma(widths: &[usize], tol: f64, boundary: Boundary) -> Result<RhoLemmaReport> {
    let mut rows = Vec::new();
    for &w in widths {
        for len in [2 * w + 1, 4 * w + 3] {
            let d = build_coupling(len, w, boundary)?;
            let est = spectral_radius(&d, tol.min(1e-12))?;
            rows.push(RhoLemmaRow {
                w,
                length: len,
                rho: est.rho,
                leading_min: est.vector.iter().copied().fold(f64::INFINITY, f64::min),
                pass: (est.rho - 1.0).abs() <= tol,
            });
        }
    }
    let all_pass = rows.iter().all(|r| r.pass);
    Ok(RhoLemmaReport { boundary, tol, rows, all_pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_ldpc_regular;
    use proptest::prelude::*;

    #[test]
    fn width_one_is_identity() {
        let d = build_d(6, 1).unwrap();
        assert_eq!(d, SparseMatrix::identity(6));
    }

    #[test]
    fn interior_row_w2() {
        let d = build_d(5, 2).unwrap().to_dense();
        assert_eq!(d[2], vec![0.0, 0.25, 0.5, 0.25, 0.0]);
    }

    #[test]
    fn row_sums() {
        let d = build_d(7, 3).unwrap();
        let s = d.row_sums();
        for (i, v) in s.iter().enumerate() {
            if (2..=4).contains(&i) {
                assert!((v - 1.0).abs() < 1e-15);
            } else {
                assert!(*v < 1.0);
            }
        }
        assert!(d.is_symmetric(0.0));
        assert!(build_d_circular(7, 3).unwrap().row_sums().iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn bandwidth() {
        let d = build_d(12, 4).unwrap();
        for i in 0..12usize {
            for j in 0..12 {
                let band = i.abs_diff(j) < 4;
                assert_eq!(d.get(i, j) > 0.0, band, "({i},{j})");
            }
        }
    }

    #[test]
    fn identity_radius() {
        let e = spectral_radius(&SparseMatrix::identity(5), 1e-12).unwrap();
        assert!((e.rho - 1.0).abs() < 1e-15);
    }

    #[test]
    fn permutation_needs_shift() {
        // Eigenvalues ±1: the plain iteration oscillates from a non-uniform start.
        let m = SparseMatrix::from_dense(&[vec![0.0, 2.0], vec![0.5, 0.0]]).unwrap();
        let e = spectral_radius(&m, 1e-10).unwrap();
        assert!((e.rho - 1.0).abs() < 1e-9, "{e:?}");
    }

    #[test]
    fn known_nonsymmetric_radius() {
        // [[1,2],[3,4]] has Perron root (5 + √33)/2.
        let m = SparseMatrix::from_dense(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let e = spectral_radius(&m, 1e-12).unwrap();
        assert!((e.rho - (5.0 + 33f64.sqrt()) / 2.0).abs() < 1e-11);
        assert!(e.lower <= e.rho && e.rho <= e.upper);
    }

    #[test]
    fn reducible_diagonal_radius() {
        let m = SparseMatrix::from_dense(&[vec![0.3, 0.0, 0.0], vec![0.0, 0.9, 0.0], vec![0.0, 0.0, 0.5]]).unwrap();
        let est = spectral_radius(&m, 1e-12).unwrap();
        assert!((est.rho - 0.9).abs() < 1e-10, "{est:?}");
    }

    #[test]
    fn negative_entries_rejected() {
        let m = SparseMatrix::from_dense(&[vec![1.0, -1.0], vec![0.0, 1.0]]).unwrap();
        assert!(spectral_radius(&m, 1e-9).is_err());
    }

    #[test]
    fn circular_radius_bound_holds() {
        let r = verify_rho_lemma(&[1, 2, 3, 4, 5, 6], 1e-10, Boundary::Circular).unwrap();
        assert!(r.all_pass, "{r:?}");
        assert!(r.rows.iter().all(|row| row.leading_min > 0.0));
    }

    #[test]
    fn truncated_radius_below_one() {
        let r = verify_rho_lemma(&[1, 2, 4], 1e-10, Boundary::Anchored).unwrap();
        assert!(r.rows[0].pass && r.rows[1].pass);
        for row in &r.rows[2..] {
            assert!(row.rho < 1.0 - 1e-3, "{row:?}");
            assert!(row.leading_min > 0.0);
        }
    }

    #[test]
    fn width_one_linearization() {
        let m = make_ldpc_regular(3, 6).unwrap();
        let cfg = CoupledConfig::new(5, 1).unwrap();
        let eps = 0.45;
        let x0 = *scalar_fixed_points(&m, eps).unwrap().last().unwrap();
        let rep = linearize_at(&m, &cfg, &uniform_candidate(&cfg, x0), eps, 1e-13).unwrap();
        let expect = m.composite_prime(x0, eps);
        assert!((rep.rho_a - expect).abs() < 1e-12);
    }

    #[test]
    fn below_threshold_stable_at_origin() {
        let m = make_ldpc_regular(3, 6).unwrap();
        let cfg = CoupledConfig::new(21, 3).unwrap();
        let rep = instability_test(&m, &cfg, 0.42).unwrap();
        assert!(rep.stable_at_origin);
        assert!(!rep.has_unstable_eigenvalue);
    }

    #[test]
    fn unstable_root_candidate_is_saddle() {
        let m = make_ldpc_regular(3, 6).unwrap();
        let eps = 0.4294398 + 0.02;
        let roots = scalar_fixed_points(&m, eps).unwrap();
        assert_eq!(roots.len(), 2);
        let cfg = CoupledConfig::new(51, 5).unwrap();
        let rep = linearize_at(&m, &cfg, &uniform_candidate(&cfg, roots[0]), eps, 1e-12).unwrap();
        assert!(rep.has_unstable_eigenvalue, "{}", rep.rho_a);
        assert!(rep.leading_vector.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn dump_formats() {
        let mut buf = Vec::new();
        build_d(3, 2).unwrap().write_dump(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0.5,0.25,0\n0.25,0.5,0.25\n0,0.25,0.5\n");
        let mut buf = Vec::new();
        build_d(65, 1).unwrap().write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("i,j,value\n0,0,1\n"));
        assert_eq!(text.lines().count(), 66);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn rows_scale_and_diagonal(
            a in proptest::collection::vec(0.0f64..3.0, 9),
            eps in 0.05f64..1.0,
            c in 1.01f64..3.0,
        ) {
            let d = build_d(9, 3).unwrap();
            let scaled: Vec<f64> = a.iter().map(|v| eps * v).collect();
            let am = d.scale_rows(&scaled).unwrap();
            for i in 0..9 {
                for j in 0..9 {
                    prop_assert_eq!(am.get(i, j), eps * a[i] * d.get(i, j));
                }
                prop_assert!((am.get(i, i) - eps * a[i] / 3.0).abs() < 1e-15);
            }
            let r1 = spectral_radius(&am, 1e-13).unwrap().rho;
            let big: Vec<f64> = scaled.iter().map(|v| c * v).collect();
            let r2 = spectral_radius(&d.scale_rows(&big).unwrap(), 1e-13).unwrap().rho;
            prop_assert!((r2 - c * r1).abs() <= 1e-10 * (1.0 + r2));
        }

        #[test]
        fn perron_vector_positive(w in 2usize..7, extra in 0usize..10) {
            let len = 2 * w + 1 + extra;
            let e = spectral_radius(&build_d(len, w).unwrap(), 1e-12).unwrap();
            prop_assert!(e.vector.iter().all(|&v| v > 0.0));
        }
    }
}
