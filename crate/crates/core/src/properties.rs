//! Property tests over the public API.

use approx::assert_relative_eq;
use crate::analysis::{estimate_t2, lower_bound_holds, two_layer_lower_bound, univariate_construct, w1_to_gaussian};
use crate::gegenbauer::{ln_geg_dim, GegenbauerBasis};
use crate::kernel::ClosedFormKernel;
use crate::sampling::{sample_sphere, Seed};
use crate::stats::inversions;
use crate::Activation;
use nalgebra::DVector;
use proptest::prelude::*;
use statrs::function::gamma::ln_gamma;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sphere_samples_have_requested_norm(d in 2usize..40, n in 1usize..50, radius in 0.1f64..10.0, seed in any::<u64>()) {
        let x = sample_sphere(d, radius, n, Seed::new(seed)).unwrap();
        for row in x.row_iter() {
            prop_assert!((row.norm() - radius).abs() < 1e-12 * radius);
        }
    }

    #[test]
    fn t2_is_linear_in_the_values(seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
        let (d, n) = (6, 200);
        let x = sample_sphere(d, (d as f64).sqrt(), n, Seed::new(seed)).unwrap();
        let f = DVector::from_fn(n, |i, _| x[(i, 0)] * x[(i, 1)]);
        let g = DVector::from_fn(n, |i, _| x[(i, 2)].powi(3));
        let lhs = estimate_t2(&x, &(&f * alpha + &g * beta)).unwrap().t2;
        let rhs = estimate_t2(&x, &f).unwrap().t2 * alpha + estimate_t2(&x, &g).unwrap().t2 * beta;
        prop_assert!((lhs - &rhs).norm() <= 1e-10 * (1.0 + rhs.norm()));
    }

    #[test]
    fn t2_is_traceless_and_symmetric(seed in any::<u64>()) {
        let x = sample_sphere(5, 5f64.sqrt(), 100, Seed::new(seed)).unwrap();
        let f = DVector::from_fn(100, |i, _| x[(i, 0)].exp());
        let t2 = estimate_t2(&x, &f).unwrap().t2;
        prop_assert!(t2.trace().abs() < 1e-12);
        prop_assert!((&t2 - t2.transpose()).norm() < 1e-12);
    }

    #[test]
    fn w1_ignores_sample_order(mut v in prop::collection::vec(-5.0f64..5.0, 2..200), rot in 0usize..200) {
        let a = w1_to_gaussian(&v).unwrap();
        let k = rot % v.len();
        v.rotate_left(k);
        v.reverse();
        prop_assert_eq!(a, w1_to_gaussian(&v).unwrap());
    }

    #[test]
    fn w1_of_a_shift_is_at_least_the_mean_gap(shift in -3.0f64..3.0) {
        let base: Vec<f64> = (0..400).map(|i| crate::analysis::normal_quantile((i as f64 + 0.5) / 400.0)).collect();
        let moved: Vec<f64> = base.iter().map(|x| x + shift).collect();
        prop_assert!((w1_to_gaussian(&moved).unwrap() - shift.abs()).abs() < 1e-12);
    }

    #[test]
    fn lower_bound_is_pure_and_self_consistent(
        half_d in 2usize..600,
        log_m in 0.0f64..8.0,
        log_b in 0.0f64..3.0,
        alpha in 0.1f64..3.0,
    ) {
        let d = 2 * half_d;
        let (m, b) = (10f64.powf(log_m), 10f64.powf(log_b));
        let first = two_layer_lower_bound(d, m, b, alpha, 1.0).unwrap();
        let second = two_layer_lower_bound(d, m, b, alpha, 1.0).unwrap();
        prop_assert_eq!(first.as_ref().map(|c| c.k_star), second.as_ref().map(|c| c.k_star));
        if let Some(c) = first {
            prop_assert!(8 * c.k_star < d);
            prop_assert!(lower_bound_holds(d, m, b, alpha, c.k_star));
            prop_assert!(c.k_star >= c.k_min);
            assert_relative_eq!(c.epsilon, 1.0 / (512.0 * (c.k_star * c.k_star) as f64), max_relative = 1e-15);
            // Shrinking the width cannot shrink the set of certified degrees.
            let smaller = two_layer_lower_bound(d, (m / 10.0).max(1.0), b, alpha, 1.0).unwrap().unwrap();
            prop_assert!(smaller.k_star >= c.k_star);
        }
    }

    #[test]
    fn harmonic_dimension_matches_gamma_form(n in 3usize..500, k in 1usize..200) {
        let nf = n as f64;
        let kf = k as f64;
        let want = (2.0 * kf + nf - 2.0).ln() + ln_gamma(kf + nf - 2.0) - ln_gamma(kf + 1.0) - ln_gamma(nf - 1.0);
        assert_relative_eq!(ln_geg_dim(nf, k), want, max_relative = 1e-12, epsilon = 1e-12);
    }

    #[test]
    fn construction_weights_vanish_off_support(b in prop_oneof![-50.0f64..-1e-9, 2.0f64 + 1e-9..50.0], sign in any::<bool>()) {
        let c = univariate_construct(|x| x * x, |x| 2.0 * x, |_| 2.0).unwrap();
        let a = if sign { 1.0 } else { -1.0 };
        prop_assert_eq!(c.v(a, b), 0.0);
    }

    #[test]
    fn relu_kernel_profile_is_bounded_and_increasing(t in -1.0f64..1.0, dt in 1e-4f64..0.5) {
        let k = kernel16();
        let (lo, hi) = (k.profile(t).unwrap(), k.profile((t + dt).min(1.0)).unwrap());
        prop_assert!(lo >= -1e-12 && hi <= 0.5 + 1e-12);
        prop_assert!(hi >= lo - 1e-12);
    }

    #[test]
    fn gegenbauer_is_bounded_by_one(d in 3usize..60, t in -1.0f64..1.0) {
        let basis = GegenbauerBasis::new(d, 12).unwrap();
        for k in 0..=12 {
            prop_assert!(basis.eval(k, t).unwrap().abs() <= 1.0 + 1e-12);
        }
    }
}

fn kernel16() -> &'static ClosedFormKernel {
    static K: std::sync::OnceLock<ClosedFormKernel> = std::sync::OnceLock::new();
    K.get_or_init(|| ClosedFormKernel::new(16, &Activation::Relu).unwrap())
}

#[test]
fn kernel_is_symmetric_in_its_arguments() {
    let k = kernel16();
    let x = sample_sphere(16, 4.0, 20, Seed::new(3)).unwrap();
    for i in 0..20 {
        for j in 0..20 {
            let a: Vec<f64> = x.row(i).iter().copied().collect();
            let b: Vec<f64> = x.row(j).iter().copied().collect();
            assert_eq!(k.eval(&a, &b).unwrap(), k.eval(&b, &a).unwrap());
        }
    }
}

#[test]
fn inversions_count_adjacent_reversals() {
    assert_eq!(inversions(&[1.0, 2.0, 3.0], true), 0);
    assert_eq!(inversions(&[1.0, 3.0, 2.0, 4.0], true), 1);
    assert_eq!(inversions(&[3.0, 2.0, 1.0], true), 2);
    assert_eq!(inversions(&[3.0, 2.0, 1.0], false), 0);
}
