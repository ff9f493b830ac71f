//! Monte-Carlo ensembles that test the limit laws at finite N.

mod config;
mod report;
mod runners;

pub use config::{
    apply_overrides, parse_json, validate_config, validate_value, ExperimentConfig, ExperimentKind, MeasureConfig,
    Tolerances, ARTIFACT_VERSION,
};
pub use report::{Check, Comparison, ExperimentReport, StatsTable, Summary};
pub use runners::{local_law_grid, Experiment};

/// `sup_x |F_n(x) - F(x)|` for the empirical CDF of `samples`, exact for a
/// continuous `cdf` (the supremum is attained at a sample point).
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x).clamp(0.0, 1.0);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    d.min(1.0)
}

/// Sample mean and unbiased variance (0 for a single sample).
pub fn mean_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// CDF of a centered Gaussian with the given variance.
pub fn centered_gaussian_cdf(variance: f64) -> impl Fn(f64) -> f64 {
    let sd = variance.sqrt();
    move |x| 0.5 * statrs::function::erf::erfc(-x / (sd * std::f64::consts::SQRT_2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn ks_degenerate_cases() {
        assert_eq!(ks_distance(&[0.0], |x| 0.5 + 0.5 * x.tanh()), 0.5);
        assert_eq!(ks_distance(&[-5.0, -4.0], |x| if x < 0.0 { 0.0 } else { 1.0 }), 1.0);
    }

    #[test]
    fn ks_of_own_distribution_is_small() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let xs: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
        assert!(ks_distance(&xs, |x| x.clamp(0.0, 1.0)) < 0.006);
    }

    #[test]
    fn gaussian_cdf_values() {
        let f = centered_gaussian_cdf(4.0);
        assert!((f(0.0) - 0.5).abs() < 1e-15);
        // statrs erfc is good to about 1e-11 here
        assert!((f(2.0) - 0.841_344_746_068_542_9).abs() < 1e-10);
    }
}
