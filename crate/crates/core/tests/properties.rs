use num_complex::Complex64;
use proptest::prelude::*;
use serde_json::json;
use ssklab::experiments::{ks_distance, ExperimentConfig};
use ssklab::freeconv::FreeConvolution;
use ssklab::linalg::symmetric_eigen;
use ssklab::measure::{BaseMeasure, JacobiMeasure, MeasureSpec};
use ssklab::quad::gauss_legendre;
use ssklab::saddle::{r_derivative, saddle_gamma, steepest_curve, weibull_cdf};

fn spectrum() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, 1..40).prop_map(|mut v| {
        v.sort_by(|a, b| b.total_cmp(a));
        v
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ks_is_a_probability_gap(xs in prop::collection::vec(-2.0f64..2.0, 1..200)) {
        let d = ks_distance(&xs, |x| ((x + 1.0) / 2.0).clamp(0.0, 1.0));
        prop_assert!((0.0..=1.0).contains(&d));
        // never below the half-jump of a single point
        prop_assert!(d >= 0.5 / xs.len() as f64 - 1e-15);
    }

    #[test]
    fn saddle_solves_its_equation(eigs in spectrum(), beta in 0.05f64..5.0) {
        let n = eigs.len() as f64;
        let g = saddle_gamma(&eigs, beta).unwrap();
        prop_assert!(g > eigs[0] + 1.0 / (3.0 * beta * n) - 1e-12);
        let rp = r_derivative(&eigs, beta, 1, g).unwrap();
        prop_assert!(rp.abs() < 1e-10, "R'(gamma) = {}", rp);
        prop_assert!(r_derivative(&eigs, beta, 2, g).unwrap() > 0.0);
    }

    #[test]
    fn steepest_curve_is_left_of_the_saddle_and_even(eigs in spectrum(), beta in 0.2f64..3.0, frac in 0.01f64..0.99) {
        let y = frac * std::f64::consts::PI / (2.0 * beta);
        let g = saddle_gamma(&eigs, beta).unwrap();
        let h = steepest_curve(&eigs, beta, y).unwrap();
        prop_assert!(h < g);
        prop_assert_eq!(h, steepest_curve(&eigs, beta, -y).unwrap());
    }

    #[test]
    fn weibull_is_monotone(c in 0.1f64..100.0, b in 0.0f64..15.0, s in -3.0f64..0.0, ds in 0.0f64..1.0) {
        let lo = weibull_cdf(c, b, s - ds).unwrap();
        let hi = weibull_cdf(c, b, s).unwrap();
        prop_assert!(lo <= hi && (0.0..=1.0).contains(&lo) && hi <= 1.0);
    }

    #[test]
    fn gauss_legendre_is_exact_for_low_degree(n in 1usize..30, k in 0u32..8) {
        prop_assume!(2 * k as usize + 1 <= 2 * n);
        let rule = gauss_legendre::<f64>(n);
        let got: f64 = rule.apply(|x| x.powi(2 * k as i32));
        prop_assert!((got - 2.0 / (2 * k + 1) as f64).abs() < 1e-12);
    }

    #[test]
    fn eigenvalues_are_sorted_and_keep_the_trace(n in 2usize..12, seed in any::<u64>()) {
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let x = next();
                a[i * n + j] = x;
                a[j * n + i] = x;
            }
        }
        let trace: f64 = (0..n).map(|i| a[i * n + i]).sum();
        let fro: f64 = a.iter().map(|x| x * x).sum();
        let e = symmetric_eigen(a, n, false).unwrap();
        prop_assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!((e.values.iter().sum::<f64>() - trace).abs() < 1e-12);
        prop_assert!((e.values.iter().map(|x| x * x).sum::<f64>() - fro).abs() < 1e-11);
    }

    #[test]
    fn semicircle_transform_is_herglotz(re in -4.0f64..4.0, im in 1e-3f64..3.0) {
        let fc = FreeConvolution::new(BaseMeasure::PointMass(0.0), 1.0).unwrap();
        let z = Complex64::new(re, im);
        let m = fc.solve_mfc(z).unwrap();
        prop_assert!(m.im > 0.0 && m.norm() <= 1.0 / im + 1e-12);
        prop_assert!(fc.residual(z, m) <= 1e-12);
    }

    #[test]
    fn config_echo_round_trips(n in 2u64..5000, trials in 1u64..1000, seed in any::<u64>(), ratio in 0.1f64..3.0) {
        let v = json!({"measure": {"a": 12, "b": 12}, "lambda": 2.0, "N": n, "trials": trials, "seed": seed,
                       "beta_ratio": ratio, "experiment": "rigidity"});
        let cfg = ExperimentConfig::from_value(&v).unwrap();
        let again = ExperimentConfig::from_value(&cfg.to_value()).unwrap();
        prop_assert_eq!(cfg, again);
    }
}

#[test]
fn cauchy_transform_respects_conjugation() {
    let m = JacobiMeasure::new(MeasureSpec::new(3.0, 3.0)).unwrap();
    proptest!(ProptestConfig::with_cases(64), |(re in -2.0f64..2.0, im in 1e-4f64..2.0)| {
        let u = Complex64::new(re, im);
        let c = m.cauchy(u);
        prop_assert!((m.cauchy(u.conj()) - c.conj()).norm() < 1e-13);
        prop_assert!(c.im > 0.0);
    });
}
