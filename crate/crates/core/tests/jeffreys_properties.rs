use ewens_core::jeffreys::{a_integral, JeffreysPrior};
use ewens_core::quadrature::QuadratureConfig;

#[test]
fn prior_has_no_first_moment() {
    // β·π(β) decays like β^{-1/2}, so ∫_0^B β π dβ grows like √B without
    // bound. Reference ratios come from an independent adaptive quadrature.
    for &(n, ratio_1e6_1e3, ratio_1e8_1e6) in &[(2usize, 33.18853, 10.01415), (20, 37.44529, 10.04939), (500, 72.79735, 10.25268)] {
        let p = JeffreysPrior::new(n).unwrap();
        let f = |b: f64| p.log_partial_first_moment(b).unwrap();
        let (f3, f6, f8) = (f(1e3), f(1e6), f(1e8));
        assert!(((f6 - f3).exp() / ratio_1e6_1e3 - 1.0).abs() < 1e-4, "n={n}: {}", (f6 - f3).exp());
        assert!(((f8 - f6).exp() / ratio_1e8_1e6 - 1.0).abs() < 1e-4, "n={n}: {}", (f8 - f6).exp());
    }
}

#[test]
fn prior_mean_of_k_matches_its_distribution() {
    for n in [2usize, 10, 50, 100] {
        let p = JeffreysPrior::new(n).unwrap();
        let pmf = p.prior_k_pmf().unwrap();
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        let mean: f64 = pmf.iter().enumerate().map(|(i, q)| (i + 1) as f64 * q).sum();
        assert!((mean - p.prior_k_mean().unwrap()).abs() < 1e-6, "n={n}");
    }
}

#[test]
fn two_item_prior_splits_evenly() {
    // Pr(K=1|2) = ∫ 1/(β+1) π dβ and Pr(K=2|2) = ∫ β/(β+1) π dβ; the
    // substitution β → 1/β maps one onto the other.
    let pmf = JeffreysPrior::new(2).unwrap().prior_k_pmf().unwrap();
    assert!((pmf[0] - 0.5).abs() < 1e-9 && (pmf[1] - 0.5).abs() < 1e-9);
}

#[test]
fn discovery_probability_is_stable_in_n() {
    let means: Vec<(usize, f64)> = [2usize, 5, 10, 25, 50, 100, 200, 400]
        .iter()
        .map(|&n| (n, JeffreysPrior::new(n).unwrap().discovery_moments().unwrap().0))
        .collect();
    for &(n, m) in &means {
        if n >= 10 {
            assert!((0.37..=0.41).contains(&m), "n={n}: {m}");
        } else {
            // Very small samples sit a little lower.
            assert!((0.35..=0.41).contains(&m), "n={n}: {m}");
        }
    }
}

#[test]
fn a_integrals_scale_to_large_samples() {
    let quad = QuadratureConfig::default();
    let la = a_integral(2586, 2586, 1825, &quad).unwrap();
    assert!(la.is_finite() && la < 0.0);
    assert!(a_integral(10, 10, 0, &quad).is_err());
}
