//! End-to-end acceptance checks. Each test prints one PASS/FAIL line and
//! asserts both the outcome and its runtime budget. A global lock keeps the
//! timings free of interference from the other checks.

use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scthresh::continuum::{compare_with_discrete, kernel_average_error};
use scthresh::dynamics::{run_coupled, single_converges_to_zero, CoupledConfig, RunOptions, Variant};
use scthresh::model::make_ldpc_regular;
use scthresh::potential::{
    check_gradient_symmetry, check_lyapunov_conditions, closed_form_ldpc, lyapunov_vb, lyapunov_vb_polyline,
    two_segment_path, LyapunovOptions, MatrixField,
};
use scthresh::quadrature::simpson;
use scthresh::spectral::{build_coupling, spectral_radius, SparseMatrix};
use scthresh::threshold::{potential_threshold, single_threshold_de, single_threshold_minratio, DEFAULT_POTENTIAL_GRID};
use scthresh::{Boundary, StateVector, SystemModel};

static LOCK: Mutex<()> = Mutex::new(());

fn ldpc() -> SystemModel {
    make_ldpc_regular(3, 6).unwrap()
}

/// Runs `body` under the lock, prints the verdict line and asserts it.
fn criterion(id: u32, name: &str, limit: Duration, body: impl FnOnce() -> (bool, String)) {
    let _guard = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let (ok, detail) = body();
    let elapsed = start.elapsed();
    let in_time = elapsed < limit;
    let verdict = if ok && in_time { "PASS" } else { "FAIL" };
    println!(
        "criterion {id} {name}: {verdict} ({detail}; {:.2}s of {:.0}s)",
        elapsed.as_secs_f64(),
        limit.as_secs_f64()
    );
    assert!(ok, "criterion {id} {name}: {detail}");
    assert!(in_time, "criterion {id} {name}: took {elapsed:?}, limit {limit:?}");
}

#[test]
fn criterion_01_single_threshold() {
    criterion(1, "single-system threshold", Duration::from_secs(1), || {
        let dir = tempfile::tempdir().unwrap();
        let out = Command::new(env!("CARGO_BIN_EXE_scthresh"))
            .current_dir(dir.path())
            .args(["threshold", "--model", "ldpc:3,6", "--method", "minratio"])
            .output()
            .unwrap();
        if !out.status.success() {
            return (false, format!("exit {:?}", out.status.code()));
        }
        let text = std::fs::read_to_string(dir.path().join("threshold.json")).unwrap();
        let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        let value = doc["result"]["value"].as_f64().unwrap();
        let x0 = doc["result"]["witness"].as_f64().unwrap();
        let root = (1.0 - x0).powi(5) + 10.0 * x0 * (1.0 - x0).powi(4) - 1.0;
        let ok = (value - 0.4294398).abs() <= 1e-6 && (x0 - 0.26057).abs() <= 5e-5 && root.abs() <= 1e-8;
        (ok, format!("eps0={value:.10} x0={x0:.8} root residual={root:.1e}"))
    });
}

#[test]
fn criterion_02_method_agreement() {
    criterion(2, "method cross-agreement", Duration::from_secs(10), || {
        let mut ok = true;
        let mut parts = Vec::new();
        for (l, r) in [(3, 6), (4, 8), (5, 10)] {
            let m = make_ldpc_regular(l, r).unwrap();
            let a = single_threshold_minratio(&m).unwrap().value;
            let b = single_threshold_de(&m, 1e-6).unwrap().value;
            ok &= (a - b).abs() <= 2e-6;
            parts.push(format!("({l},{r}) {a:.7}/{b:.7}"));
        }
        (ok, parts.join(" "))
    });
}

/// `|ρ(D) − 1|` and `|ρ(εaD) − ε max a|` over the width range.
#[test]
fn criterion_03_coupling_radius() {
    criterion(3, "coupling matrix spectral radius", Duration::from_secs(5), || {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut d_worst = 0.0f64;
        let mut truncated_worst = 0.0f64;
        let mut a_worst = 0.0f64;
        let mut a_failures = 0;
        let mut a_total = 0;
        for w in 1..=6 {
            for len in [2 * w + 1, 4 * w + 3] {
                let d = build_coupling(len, w, Boundary::Circular).unwrap();
                d_worst = d_worst.max((spectral_radius(&d, 1e-13).unwrap().rho - 1.0).abs());
                let t = build_coupling(len, w, Boundary::Anchored).unwrap();
                truncated_worst = truncated_worst.max((spectral_radius(&t, 1e-13).unwrap().rho - 1.0).abs());
                for _ in 0..20 {
                    let a: Vec<f64> = (0..len).map(|_| rng.gen_range(0.1..2.0)).collect();
                    let amax = a.iter().copied().fold(0.0, f64::max);
                    for eps in [0.3, 0.7] {
                        let scaled: Vec<f64> = a.iter().map(|v| eps * v).collect();
                        let m: SparseMatrix = d.scale_rows(&scaled).unwrap();
                        let gap = (spectral_radius(&m, 1e-13).unwrap().rho - eps * amax).abs();
                        a_worst = a_worst.max(gap);
                        a_total += 1;
                        if gap > 1e-8 {
                            a_failures += 1;
                        }
                    }
                }
            }
        }
        let ok = d_worst <= 1e-10 && a_failures == 0;
        (
            ok,
            format!(
                "circular |rho(D)-1| max {d_worst:.1e}, truncated {truncated_worst:.1e}; \
                 rho(A)=eps*max a off by >1e-8 in {a_failures}/{a_total} profiles (max {a_worst:.3})"
            ),
        )
    });
}

#[test]
fn criterion_04_closed_form() {
    criterion(4, "closed-form potential", Duration::from_secs(1), || {
        let m = ldpc();
        let mut worst = 0.0f64;
        for eps in [0.3, 0.4294398, 0.5] {
            let integrand = |z: f64| m.g_prime(z) * (z - m.evaluate(z, eps).unwrap());
            let mut acc = 0.0;
            for k in 0..=1000 {
                let x = k as f64 / 1000.0;
                if k > 0 {
                    acc += simpson(integrand, (k - 1) as f64 / 1000.0, x, 8);
                }
                worst = worst.max((closed_form_ldpc(3, 6, x, eps) - acc).abs());
            }
        }
        (worst <= 1e-8, format!("max gap {worst:.1e}"))
    });
}

#[test]
fn criterion_05_coupling_gain() {
    criterion(5, "coupling gain", Duration::from_secs(30), || {
        let m = ldpc();
        let cfg = CoupledConfig::new(33, 3).unwrap();
        let t = run_coupled(&m, &cfg, &StateVector::ones(33), 0.45, &RunOptions::new(100_000, 1e-10).quiet()).unwrap();
        let (single_zero, x) = single_converges_to_zero(&m, 1.0, 0.45, &RunOptions::new(1_000_000, 1e-12)).unwrap();
        let ok = t.converged_to_zero && t.iterations <= 100_000 && !single_zero && x > 0.1;
        (
            ok,
            format!("coupled reached 0 after {} iterations; single stuck at {x:.6}", t.iterations),
        )
    });
}

#[test]
fn criterion_06_large_degree_trend() {
    criterion(6, "potential threshold trend in r", Duration::from_secs(60), || {
        let mut gaps = Vec::new();
        let mut scaled_mins = Vec::new();
        for r in [10u32, 20, 40, 80] {
            let l = r / 2;
            let m = make_ldpc_regular(l, r).unwrap();
            let t = potential_threshold(&m, DEFAULT_POTENTIAL_GRID, 1e-9).unwrap();
            gaps.push((t.value - 0.5).abs());
            let n = 200_000;
            let min_u = (0..=n)
                .map(|k| closed_form_ldpc(l, r, k as f64 / n as f64, 0.5))
                .fold(f64::INFINITY, f64::min);
            scaled_mins.push(r as f64 * min_u);
        }
        let decreasing = gaps.windows(2).all(|p| p[1] < p[0]);
        // Smallest c with min U ≥ −c/r at every r.
        let c = scaled_mins.iter().map(|v| -v).fold(0.0, f64::max);
        let bounded = scaled_mins.iter().all(|&s| s >= -c);
        let ok = decreasing && c > 0.0 && bounded;
        (
            ok,
            format!(
                "|eps*-1/2| = {:.2e} {:.2e} {:.2e} {:.2e}; r*min U = {:.2e} {:.2e} {:.2e} {:.2e}; c = {c:.2e}",
                gaps[0], gaps[1], gaps[2], gaps[3], scaled_mins[0], scaled_mins[1], scaled_mins[2], scaled_mins[3]
            ),
        )
    });
}

#[test]
fn criterion_07_variant_ordering() {
    criterion(7, "variant ordering", Duration::from_secs(5), || {
        let m = ldpc();
        let base = CoupledConfig::new(21, 3).unwrap();
        let opts = RunOptions::default();
        let start = StateVector::ones(21);
        let inside = run_coupled(&m, &base.with_variant(Variant::InsideAverage), &start, 0.46, &opts).unwrap();
        let outside = run_coupled(&m, &base.with_variant(Variant::OutsideAverage), &start, 0.46, &opts).unwrap();
        let mut first = None;
        let mut violations = 0;
        for ((it, a), (_, b)) in inside.states.iter().zip(outside.states.iter()) {
            for i in 0..21 {
                if a[i] > b[i] {
                    violations += 1;
                    first.get_or_insert((*it, i, a[i], b[i]));
                }
            }
        }
        let detail = match first {
            None => format!("{} iterations compared", inside.states.len().min(outside.states.len())),
            Some((it, i, a, b)) => {
                format!("{violations} violations, first at iteration {it} position {i}: inside {a:.6} > outside {b:.6}")
            }
        };
        (violations == 0, detail)
    });
}

#[test]
fn criterion_08_continuum() {
    criterion(8, "continuum consistency", Duration::from_secs(60), || {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut kernel_ok = true;
        let mut worst = [0.0f64; 3];
        for (k, w) in [2usize, 4, 8].into_iter().enumerate() {
            for _ in 0..1000 {
                let x = StateVector((0..64).map(|_| rng.gen::<f64>()).collect());
                let i = rng.gen_range(w - 1..=64 - w);
                let g = kernel_average_error(&x, i, w).unwrap();
                kernel_ok &= g.within_bound;
                worst[k] = worst[k].max(g.gap * w as f64);
            }
        }
        let m = ldpc();
        let r4 = compare_with_discrete(&m, 4.0, 4, 0.5, 64, 1e-11).unwrap();
        let r8 = compare_with_discrete(&m, 4.0, 8, 0.5, 64, 1e-11).unwrap();
        let ok = kernel_ok && r8.sup_gap < r4.sup_gap;
        (
            ok,
            format!(
                "max w*gap {:.3} {:.3} {:.3}; sup gap w=4 {:.4} w=8 {:.4}",
                worst[0], worst[1], worst[2], r4.sup_gap, r8.sup_gap
            ),
        )
    });
}

#[test]
fn criterion_09_lyapunov_conditions() {
    criterion(9, "Lyapunov conditions", Duration::from_secs(5), || {
        let m = ldpc();
        let cfg = CoupledConfig::single();
        let b = MatrixField::DiagonalGPrime;
        let opts = LyapunovOptions::default();
        let below = check_lyapunov_conditions(&m, &cfg, &b, 0.40, 2001, &opts).unwrap();
        let above = check_lyapunov_conditions(&m, &cfg, &b, 0.45, 2001, &opts).unwrap();
        let located = above.positivity_violations > 0 && above.worst_positivity.as_ref().is_some_and(|v| v.value <= 0.0);
        let ok = below.positivity_ok && below.decrease_ok && located;
        let worst = above.worst_positivity.as_ref().map(|v| (v.point[0], v.value)).unwrap_or((f64::NAN, f64::NAN));
        (
            ok,
            format!(
                "eps=0.40 positivity {} decrease {}; eps=0.45 positivity violations {} (min V {:.3e} at x={:.4}), \
                 decrease violations {}",
                below.positivity_ok,
                below.decrease_ok,
                above.positivity_violations,
                worst.1,
                worst.0,
                above.decrease_violations
            ),
        )
    });
}

#[test]
fn criterion_10_path_independence() {
    criterion(10, "path independence", Duration::from_secs(5), || {
        let m = ldpc();
        let b = MatrixField::DiagonalGPrime;
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (mut symmetric, mut asymmetric, mut worst) = (0, 0, 0.0f64);
        for variant in [Variant::OutsideAverage, Variant::InsideAverage] {
            for (len, w) in [(1, 1), (5, 1), (7, 2), (9, 3)] {
                let cfg = CoupledConfig::new(len, w).unwrap().with_variant(variant);
                for _ in 0..4 {
                    let x = StateVector((0..len).map(|_| rng.gen_range(0.05..1.0)).collect());
                    let eps = rng.gen_range(0.3..0.6);
                    let sym = check_gradient_symmetry(&m, &cfg, &b, &x, eps).unwrap();
                    if sym.max_asymmetry > 1e-6 {
                        asymmetric += 1;
                        continue;
                    }
                    symmetric += 1;
                    let straight = lyapunov_vb(&m, &cfg, &b, &x, eps, 256).unwrap();
                    let bent = lyapunov_vb_polyline(&m, &cfg, &b, &two_segment_path(&x), eps, 256).unwrap();
                    worst = worst.max((straight - bent).abs());
                }
            }
        }
        let ok = symmetric > 0 && worst <= 1e-6;
        (
            ok,
            format!("{symmetric} symmetric cases, max path gap {worst:.1e}; {asymmetric} asymmetric cases skipped"),
        )
    });
}
