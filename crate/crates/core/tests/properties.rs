use proptest::prelude::*;

use scthresh::dynamics::{find_fixed_point, CoupledConfig, Variant};
use scthresh::model::make_ldpc_regular;
use scthresh::potential::closed_form_ldpc;
use scthresh::spectral::{build_d, jacobian_at, scalar_fixed_points, spectral_radius};
use scthresh::threshold::{
    coupled_threshold_de, potential_threshold, single_threshold_de, single_threshold_minratio, sweep_coupled,
    DEFAULT_POTENTIAL_GRID,
};
use scthresh::{StateVector, SystemModel};

fn ldpc() -> SystemModel {
    make_ldpc_regular(3, 6).unwrap()
}

#[test]
fn single_below_coupled() {
    let m = ldpc();
    let single = single_threshold_minratio(&m).unwrap();
    let coupled = coupled_threshold_de(&m, &CoupledConfig::new(21, 3).unwrap(), 1e-6).unwrap();
    assert!(single.value <= coupled.bracket.0, "{} vs {:?}", single.value, coupled.bracket);
}

#[test]
fn potential_threshold_below_outside_coupled() {
    let m = ldpc();
    let pot = potential_threshold(&m, DEFAULT_POTENTIAL_GRID, 1e-7).unwrap();
    let cfg = CoupledConfig::new(21, 3).unwrap().with_variant(Variant::OutsideAverage);
    let coupled = coupled_threshold_de(&m, &cfg, 1e-7).unwrap();
    assert!(pot.bracket.0 <= coupled.bracket.1, "{:?} vs {:?}", pot.bracket, coupled.bracket);
    assert!(coupled.trace_is_monotone());
}

#[test]
fn coupled_threshold_nondecreasing_in_width() {
    let m = ldpc();
    let configs: Vec<CoupledConfig> = (1..=5).map(|w| CoupledConfig::new(11 * w, w).unwrap()).collect();
    let rows = sweep_coupled(&m, &configs, 1e-6, 0).unwrap();
    for pair in rows.windows(2) {
        assert!(
            pair[1].threshold_hi >= pair[0].threshold_lo,
            "w={} {}..{} then w={} {}..{}",
            pair[0].width,
            pair[0].threshold_lo,
            pair[0].threshold_hi,
            pair[1].width,
            pair[1].threshold_lo,
            pair[1].threshold_hi
        );
    }
}

#[test]
fn bisection_traces_are_monotone() {
    for (l, r) in [(3, 6), (4, 8), (5, 10)] {
        let m = make_ldpc_regular(l, r).unwrap();
        let de = single_threshold_de(&m, 1e-6).unwrap();
        assert!(de.trace_is_monotone(), "({l},{r})");
        let ratio = single_threshold_minratio(&m).unwrap();
        assert!((de.value - ratio.value).abs() <= 2e-6, "({l},{r})");
    }
}

#[test]
fn fixed_points_are_stationary() {
    let m = ldpc();
    for eps in [0.44, 0.47, 0.5] {
        let roots = scalar_fixed_points(&m, eps).unwrap();
        assert_eq!(roots.len(), 2, "ε={eps}: {roots:?}");
        for x in roots {
            let fx = m.evaluate(x, eps).unwrap();
            assert!((x - fx).abs() <= 1e-10);
            // dU/dx = g′(x)·(x − f(g(x))) vanishes there.
            assert!((m.g_prime(x) * (x - fx)).abs() <= 1e-10);
        }
    }
}

#[test]
fn coupled_fixed_point_has_rho_at_most_one() {
    let m = ldpc();
    let cfg = CoupledConfig::new(21, 3).unwrap();
    let x = find_fixed_point(&m, &cfg, 0.49, 1e-12).unwrap();
    let (a, _, _) = jacobian_at(&m, &cfg, &x, 0.49).unwrap();
    let rho = spectral_radius(&a, 1e-12).unwrap().rho;
    assert!(rho <= 1.0 + 1e-6, "{rho}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closed_form_matches_quadrature(x in 0.0f64..1.0, eps in 0.0f64..1.0, k in 0usize..3) {
        let (l, r) = [(3, 6), (4, 8), (5, 10)][k];
        let m = make_ldpc_regular(l, r).unwrap();
        let quad = scthresh::quadrature::simpson(
            |z| m.g_prime(z) * (z - m.evaluate(z, eps).unwrap()),
            0.0,
            x,
            4096,
        );
        prop_assert!((closed_form_ldpc(l, r, x, eps) - quad).abs() <= 1e-8);
    }

    #[test]
    fn jacobian_rows_and_diagonal(
        len in 7usize..30,
        w in 1usize..4,
        eps in 0.05f64..1.0,
        seed in proptest::collection::vec(0.0f64..1.0, 30),
    ) {
        prop_assume!(len > 2 * w);
        let m = ldpc();
        let cfg = CoupledConfig::new(len, w).unwrap();
        let x = StateVector(seed[..len].to_vec());
        let (a, _, coeffs) = jacobian_at(&m, &cfg, &x, eps).unwrap();
        let d = build_d(len, w).unwrap();
        for i in 0..len {
            for j in 0..len {
                prop_assert_eq!(a.get(i, j), eps * coeffs[i] * d.get(i, j));
            }
            prop_assert!((a.get(i, i) - eps * coeffs[i] / w as f64).abs() <= 1e-15);
        }
    }

    #[test]
    fn rho_scales_linearly(len in 7usize..25, w in 1usize..4, c in 1.0f64..3.0) {
        prop_assume!(len > 2 * w);
        let m = ldpc();
        let cfg = CoupledConfig::new(len, w).unwrap();
        let x = StateVector::filled(len, 0.4);
        let (a1, _, _) = jacobian_at(&m, &cfg, &x, 0.3).unwrap();
        let (a2, _, _) = jacobian_at(&m, &cfg, &x, 0.3 * c).unwrap();
        let r1 = spectral_radius(&a1, 1e-13).unwrap().rho;
        let r2 = spectral_radius(&a2, 1e-13).unwrap().rho;
        prop_assert!((r2 - c * r1).abs() <= 1e-9 * r2.max(1.0));
    }

    #[test]
    fn perron_vector_positive(w in 2usize..7, extra in 0usize..20) {
        let d = build_d(2 * w + 1 + extra, w).unwrap();
        let est = spectral_radius(&d, 1e-12).unwrap();
        prop_assert!(est.vector.iter().all(|&v| v > 0.0));
    }
}
