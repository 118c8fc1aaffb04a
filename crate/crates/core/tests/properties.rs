use ewens_core::jeffreys::{
    log_density_derivative, log_density_second_derivative, log_density_unnorm, normalizing_bound,
    normalizing_constant,
};
use ewens_core::med::{crp_predictive, log_pmf_sizes, log_prob_k, Partition};
use ewens_core::quadrature::QuadratureConfig;
use ewens_core::special::{log_add_exp, log_sum_exp, stirling_log_row};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stirling_recurrence_holds(n in 1usize..300, frac in 0.0f64..1.0) {
        let row = stirling_log_row(n).unwrap();
        let next = stirling_log_row(n + 1).unwrap();
        let k = 1 + ((n as f64) * frac) as usize;
        let k = k.min(n + 1);
        // |s(n+1,k)| = n |s(n,k)| + |s(n,k−1)|
        let rhs = log_add_exp((n as f64).ln() + row.log_abs(k), row.log_abs(k - 1));
        let lhs = next.log_abs(k);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn cluster_count_pmf_is_normalized(n in 1usize..400, log_beta in -7.0f64..7.0) {
        let beta = log_beta.exp();
        let logs: Vec<f64> = (1..=n).map(|k| log_prob_k(n, k, beta).unwrap()).collect();
        prop_assert!(log_sum_exp(&logs).abs() < 1e-9);
    }

    #[test]
    fn predictive_is_a_distribution(sizes in prop::collection::vec(1usize..20, 1..12), log_beta in -5.0f64..5.0) {
        let p = Partition::new(sizes).unwrap();
        let pred = crp_predictive(&p, log_beta.exp()).unwrap();
        prop_assert_eq!(pred.len(), p.k() + 1);
        prop_assert!(pred.iter().all(|&x| x > 0.0));
        prop_assert!((pred.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn labelled_pmf_ignores_label_names(labels in prop::collection::vec(0usize..6, 1..30), shift in 1usize..50, log_beta in -3.0f64..3.0) {
        let renamed: Vec<usize> = labels.iter().map(|l| (l * 7 + shift) % 97).collect();
        let a = Partition::from_labels(&labels).unwrap();
        let b = Partition::from_labels(&renamed).unwrap();
        prop_assert_eq!(&a, &b);
        let beta = log_beta.exp();
        prop_assert_eq!(log_pmf_sizes(&a, beta).unwrap(), log_pmf_sizes(&b, beta).unwrap());
    }

    #[test]
    fn jeffreys_is_decreasing_and_log_convex(n in 2usize..2000, log_beta in -13.0f64..13.0) {
        let beta = log_beta.exp();
        prop_assert!(log_density_derivative(beta, n).unwrap() < 0.0);
        prop_assert!(log_density_second_derivative(beta, n).unwrap() > 0.0);
        // Closed-form derivative against a central difference in β.
        let h = 1e-5 * beta;
        let fd = (log_density_unnorm(beta + h, n).unwrap() - log_density_unnorm(beta - h, n).unwrap()) / (2.0 * h);
        let d = log_density_derivative(beta, n).unwrap();
        prop_assert!((fd - d).abs() <= 1e-5 * d.abs(), "{} vs {}", fd, d);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn normalizing_constant_respects_bound(n in 2usize..600) {
        let c = normalizing_constant(n, &QuadratureConfig::default()).unwrap();
        prop_assert!(c > 0.0 && c <= normalizing_bound(n) * (1.0 + 1e-10), "C({}) = {}", n, c);
    }
}
