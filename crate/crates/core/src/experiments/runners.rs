use super::config::{ExperimentConfig, ExperimentKind};
use super::report::{Check, Comparison, ExperimentReport, StatsTable, Summary};
use super::{centered_gaussian_cdf, ks_distance, mean_variance};
use crate::error::{Error, Result};
use crate::freeconv::{ContourOptions, FreeConvolution, TestFunction};
use crate::saddle::{free_energy, weibull_cdf, weibull_cdf_lower};
use crate::spectra::{local_law_envelope, rigidity_report, sample_matrix, RigidityParams, SpectralSample};
use num_complex::Complex64;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::time::Instant;

/// Twelve spectral parameters: real parts {-2, -1, 1, 2} at heights {0.5, 1, 2}.
pub fn local_law_grid() -> Vec<Complex64> {
    let mut out = Vec::with_capacity(12);
    for &im in &[0.5, 1.0, 2.0] {
        for &re in &[-2.0, -1.0, 1.0, 2.0] {
            out.push(Complex64::new(re, im));
        }
    }
    out
}

/// Deterministic quantities shared read-only by all trials.
#[derive(Debug, Clone)]
enum Theory {
    LowTemp { beta: f64, beta_c: f64, l_plus: f64, log_int: f64, f_limit: f64, c_mu: f64, b: f64 },
    HighTemp { beta: f64, gamma_hat: f64, log_int: f64, f_limit: f64, variance: f64, b: f64 },
    Lss { coeffs: Vec<f64>, mean: f64, variance: f64 },
    Rigidity { classical: Vec<f64>, params: RigidityParams },
    LocalLaw { grid: Vec<Complex64> },
    ExtremeEig { l_minus: f64, l_plus: f64, c_mu_prime: f64, c_mu: Option<f64>, a: f64, b: f64 },
}

/// A configured experiment with its theory constants.
pub struct Experiment {
    cfg: ExperimentConfig,
    kind: ExperimentKind,
    fc: FreeConvolution,
    theory: Theory,
    warnings: Vec<String>,
}

fn missing(what: &str) -> Error {
    Error::OutOfRegime(format!("{what} is undefined for this measure and lambda"))
}

impl Experiment {
    /// `cfg` should come from `validate_config`; `beta` must be resolved.
    pub fn new(cfg: ExperimentConfig, fc: FreeConvolution) -> Result<Self> {
        let kind = cfg
            .experiment
            .ok_or_else(|| Error::Config(vec!["missing required field `experiment`".into()]))?;
        let mut warnings = Vec::new();
        let contour = ContourOptions { margin: cfg.contour_margin, ..Default::default() };
        let edges = *fc.edges();
        let exps = cfg.measure.exponents();
        let theory = match kind {
            ExperimentKind::LowTemp => {
                let beta = cfg.beta.ok_or_else(|| missing("beta"))?;
                let l_plus = fc.l_plus();
                let log_int = fc.log_integral(l_plus)?;
                Theory::LowTemp {
                    beta,
                    beta_c: fc.beta_c_subordination(),
                    l_plus,
                    log_int,
                    f_limit: fc.limiting_free_energy(beta)?,
                    c_mu: edges.c_mu.ok_or_else(|| missing("C_mu"))?,
                    b: exps.ok_or_else(|| missing("b"))?.1,
                }
            }
            ExperimentKind::HighTemp => {
                let beta = cfg.beta.ok_or_else(|| missing("beta"))?;
                let bc = fc.beta_c_subordination();
                if (bc - beta) / bc < cfg.tolerances.near_critical {
                    warnings.push(format!(
                        "near-critical: beta={beta} is within {} of beta_c={bc}; gamma_hat-L_+ is small and \
                         distributional tolerances are widened by {}",
                        cfg.tolerances.near_critical, cfg.tolerances.near_critical_widen
                    ));
                }
                let gamma_hat = fc.gamma_hat_point(beta)?;
                Theory::HighTemp {
                    beta,
                    gamma_hat,
                    log_int: fc.log_integral(gamma_hat)?,
                    f_limit: fc.limiting_free_energy(beta)?,
                    variance: fc.clt_variance(&TestFunction::LogShift(gamma_hat), &contour)?,
                    b: exps.ok_or_else(|| missing("b"))?.1,
                }
            }
            ExperimentKind::Lss => {
                let coeffs = cfg.f_spec.clone().ok_or_else(|| missing("f_spec"))?;
                // The constant term is handled exactly: μ_fc is a probability measure.
                let mean = coeffs
                    .iter()
                    .enumerate()
                    .skip(1)
                    .filter(|(_, &c)| c != 0.0)
                    .map(|(k, &c)| c * fc.expectation(|t| t.powi(k as i32)))
                    .sum();
                let variance = fc.clt_variance(&TestFunction::Polynomial(coeffs.clone()), &contour)?;
                Theory::Lss { coeffs, mean, variance }
            }
            ExperimentKind::Rigidity => {
                let mut params = RigidityParams::for_convolution(&fc, cfg.zeta);
                params.kappa = cfg.kappa;
                Theory::Rigidity { classical: fc.classical_locations(cfg.n), params }
            }
            ExperimentKind::LocalLaw => Theory::LocalLaw { grid: local_law_grid() },
            ExperimentKind::ExtremeEig => {
                let (a, b) = exps.ok_or_else(|| missing("a"))?;
                Theory::ExtremeEig {
                    l_minus: fc.l_minus(),
                    l_plus: fc.l_plus(),
                    c_mu_prime: edges.c_mu_prime.ok_or_else(|| missing("C_mu'"))?,
                    c_mu: edges.c_mu,
                    a,
                    b,
                }
            }
        };
        Ok(Experiment { cfg, kind, fc, theory, warnings })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn free_convolution(&self) -> &FreeConvolution {
        &self.fc
    }

    pub fn kind(&self) -> ExperimentKind {
        self.kind
    }

    pub fn needs_matrix(&self) -> bool {
        self.kind == ExperimentKind::LocalLaw
    }

    pub fn theory(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: f64| {
            m.insert(k.to_string(), v);
        };
        put("L_plus", self.fc.l_plus());
        put("L_minus", self.fc.l_minus());
        put("beta_c", self.fc.beta_c_subordination());
        match &self.theory {
            Theory::LowTemp { beta, log_int, f_limit, c_mu, .. } => {
                put("beta", *beta);
                put("log_integral_at_L_plus", *log_int);
                put("F_limit", *f_limit);
                put("C_mu", *c_mu);
            }
            Theory::HighTemp { beta, gamma_hat, log_int, f_limit, variance, .. } => {
                put("beta", *beta);
                put("gamma_hat", *gamma_hat);
                put("log_integral_at_gamma_hat", *log_int);
                put("F_limit", *f_limit);
                put("theory_variance", *variance);
            }
            Theory::Lss { mean, variance, .. } => {
                put("mean_integral", *mean);
                put("theory_variance", *variance);
            }
            Theory::Rigidity { params, .. } => {
                put("zeta", params.zeta);
                put("kappa", params.kappa);
            }
            Theory::LocalLaw { .. } => put("epsilon_prime", self.cfg.epsilon_prime),
            Theory::ExtremeEig { c_mu_prime, .. } => put("C_mu_prime", *c_mu_prime),
        }
        m
    }

    pub fn columns(&self) -> Vec<String> {
        let cols: Vec<&str> = match &self.theory {
            Theory::LowTemp { .. } => {
                vec!["lambda_1", "gamma", "r_gamma", "r2", "k", "f_n", "i_n", "lambda1_stat", "k_in_bounds"]
            }
            Theory::HighTemp { .. } => vec![
                "lambda_1",
                "gamma",
                "gamma_minus_gamma_hat",
                "r_gamma",
                "r2",
                "k",
                "f_n",
                "stat",
                "laplace_ratio",
                "k_in_bounds",
            ],
            Theory::Lss { .. } => vec!["stat"],
            Theory::Rigidity { .. } => {
                vec!["max_dev_upper", "max_dev_lower", "bound_upper", "bound_lower", "mid_dev", "passed"]
            }
            Theory::LocalLaw { grid } => {
                let mut c: Vec<String> = (0..grid.len()).map(|i| format!("residual_z{i}")).collect();
                c.extend(["max_ratio", "ward", "symmetry", "passed"].map(String::from));
                return c;
            }
            Theory::ExtremeEig { .. } => vec!["lambda_n", "lower_stat", "lambda_1", "upper_stat"],
        };
        cols.into_iter().map(String::from).collect()
    }

    /// Statistics of one sample, in `columns()` order.
    pub fn trial_row(&self, s: &SpectralSample) -> Result<Vec<f64>> {
        let n = s.n as f64;
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        match &self.theory {
            Theory::LowTemp { beta, beta_c, l_plus, log_int, b, .. } => {
                let sd = free_energy(&s.eigs, *beta, self.cfg.method, self.cfg.mode)?;
                let scale = n.powf(1.0 / (b + 1.0));
                let centered = sd.free_energy + 0.5 * (2.0 * std::f64::consts::E * beta).ln() + 0.5 * log_int
                    - beta * l_plus;
                let i_n = scale * centered / (beta - beta_c);
                let l1 = scale * (s.largest() - l_plus);
                Ok(vec![s.largest(), sd.gamma, sd.r_gamma, sd.r2, sd.k, sd.free_energy, i_n, l1, flag(sd.k_in_bounds)])
            }
            Theory::HighTemp { beta, gamma_hat, log_int, .. } => {
                let sd = free_energy(&s.eigs, *beta, self.cfg.method, self.cfg.mode)?;
                let stat = 2.0
                    * n.sqrt()
                    * (sd.free_energy + 0.5 * (2.0 * beta * std::f64::consts::E).ln() - beta * gamma_hat
                        + 0.5 * log_int);
                let laplace = sd.k * (n * sd.r2 / (4.0 * std::f64::consts::PI)).sqrt();
                Ok(vec![
                    s.largest(),
                    sd.gamma,
                    sd.gamma - gamma_hat,
                    sd.r_gamma,
                    sd.r2,
                    sd.k,
                    sd.free_energy,
                    stat,
                    laplace,
                    flag(sd.k_in_bounds),
                ])
            }
            Theory::Lss { coeffs, mean, .. } => {
                let nonconst = &coeffs[1..];
                let sum: f64 = if nonconst.iter().all(|&c| c == 0.0) {
                    0.0
                } else {
                    s.eigs.iter().map(|&x| x * nonconst.iter().rev().fold(0.0, |acc, &c| acc * x + c)).sum()
                };
                let stat = if nonconst.iter().all(|&c| c == 0.0) { 0.0 } else { (sum - n * mean) / n.sqrt() };
                Ok(vec![stat])
            }
            Theory::Rigidity { classical, params } => {
                let r = rigidity_report(s, classical, params)?;
                let mid = s.n / 2 - 1;
                Ok(vec![
                    r.max_dev_upper,
                    r.max_dev_lower,
                    r.bound_upper,
                    r.bound_lower,
                    (s.eigs[mid] - classical[mid]).abs(),
                    flag(r.passed),
                ])
            }
            Theory::LocalLaw { grid } => {
                let mut row = Vec::with_capacity(grid.len() + 4);
                let (mut ward, mut sym, mut ratio) = (0.0f64, 0.0f64, 0.0f64);
                for &z in grid {
                    let g = s.resolvent(z)?;
                    let r = s.local_law_residual_of(&g, z);
                    ratio = ratio.max(r / local_law_envelope(s.n, z, self.cfg.epsilon_prime));
                    ward = ward.max(s.ward_residual(&g, z));
                    for i in 0..s.n {
                        for j in 0..i {
                            sym = sym.max((g[i * s.n + j] - g[j * s.n + i]).norm());
                        }
                    }
                    row.push(r);
                }
                row.extend([ratio, ward, sym, flag(ratio < 1.0)]);
                Ok(row)
            }
            Theory::ExtremeEig { l_minus, l_plus, a, b, .. } => Ok(vec![
                s.smallest(),
                n.powf(1.0 / (1.0 + a)) * (s.smallest() - l_minus),
                s.largest(),
                n.powf(1.0 / (1.0 + b)) * (s.largest() - l_plus),
            ]),
        }
    }

    /// Draws trial `t` of this experiment.
    pub fn sample(&self, t: u64) -> Result<SpectralSample> {
        sample_matrix(self.fc.measure(), self.cfg.lambda, self.cfg.n, self.cfg.seed, t, self.needs_matrix())
    }

    /// Rows for trials `0..trials` in index order, whatever the pool size.
    pub fn run_table(&self) -> Result<StatsTable> {
        let rows: Vec<Result<Vec<f64>>> = (0..self.cfg.trials as u64)
            .into_par_iter()
            .map(|t| self.sample(t).and_then(|s| self.trial_row(&s)))
            .collect();
        let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(StatsTable { columns: self.columns(), rows })
    }

    /// Aggregates a table into the summary and its pass flags.
    pub fn summarize(&self, table: &StatsTable) -> Summary {
        let tol = &self.cfg.tolerances;
        let widen = if self.warnings.iter().any(|w| w.starts_with("near-critical")) { tol.near_critical_widen } else { 1.0 };
        let col = |name: &str| table.column(name).unwrap_or_default();
        let rate = |xs: &[f64]| xs.iter().filter(|&&x| x > 0.5).count() as f64 / xs.len().max(1) as f64;
        let mut s = Summary::default();
        let n = self.cfg.n as f64;
        let trials = table.rows.len() as f64;
        match &self.theory {
            Theory::LowTemp { c_mu, b, .. } => {
                let cdf = |x: f64| if x > 0.0 { 1.0 } else { weibull_cdf(*c_mu, *b, x).unwrap() };
                let i_n = col("i_n");
                let l1 = col("lambda1_stat");
                let ks = ks_distance(&i_n, cdf);
                let ks_l1 = ks_distance(&l1, cdf);
                let (m, v) = mean_variance(&i_n);
                s.ks_distance = Some(ks);
                s.empirical_mean = Some(m);
                s.empirical_variance = Some(v);
                s.extra.insert("ks_lambda1".into(), ks_l1);
                s.extra.insert("k_in_bounds_rate".into(), rate(&col("k_in_bounds")));
                s.checks.push(Check::new("ks_free_energy_weibull", ks, Comparison::Below, "ks_low_temp", tol.ks_low_temp, true));
                s.checks.push(Check::new("ks_lambda1_weibull", ks_l1, Comparison::Below, "ks_lambda1", tol.ks_lambda1, true));
            }
            Theory::HighTemp { variance, b, .. } => {
                let stat = col("stat");
                let (m, v) = mean_variance(&stat);
                let second = stat.iter().map(|x| x * x).sum::<f64>() / trials;
                let ks_fit = ks_distance(&stat, centered_gaussian_cdf(second));
                let ks_theory = ks_distance(&stat, centered_gaussian_cdf(*variance));
                s.ks_distance = Some(ks_fit);
                s.empirical_mean = Some(m);
                s.empirical_variance = Some(v);
                s.theory_variance = Some(*variance);
                s.extra.insert("ks_theory_gaussian".into(), ks_theory);
                s.extra.insert("fitted_second_moment".into(), second);
                let eps = 1.0 / (b + 1.0) + 0.005;
                let gamma_bound = n.powf(3.0 * eps - 0.5);
                let gamma_rate = col("gamma_minus_gamma_hat").iter().filter(|d| d.abs() < gamma_bound).count() as f64 / trials;
                let lap_bound = n.powf(-1.0 / 3.0);
                let lap_rate = col("laplace_ratio").iter().filter(|r| (*r - 1.0).abs() <= lap_bound).count() as f64 / trials;
                s.extra.insert("gamma_distance_bound".into(), gamma_bound);
                s.extra.insert("laplace_bound".into(), lap_bound);
                let ratio_dev = (v / variance - 1.0).abs();
                s.checks.push(Check::new("variance_ratio", ratio_dev, Comparison::Below, "variance_ratio", tol.variance_ratio * widen, true));
                let se = (variance / trials).sqrt();
                s.checks.push(Check::new(
                    "mean_in_standard_errors",
                    m.abs() / se,
                    Comparison::Below,
                    "mean_standard_errors",
                    tol.mean_standard_errors * widen,
                    true,
                ));
                s.checks.push(Check::new("ks_fitted_gaussian", ks_fit, Comparison::Below, "ks_high_temp", tol.ks_high_temp * widen, true));
                s.checks.push(Check::new("ks_theory_gaussian", ks_theory, Comparison::Below, "ks_high_temp", tol.ks_high_temp * widen, false));
                s.checks.push(Check::new("gamma_distance_rate", gamma_rate, Comparison::AtLeast, "gamma_distance_pass_rate", tol.gamma_distance_pass_rate, true));
                s.checks.push(Check::new("laplace_rate", lap_rate, Comparison::AtLeast, "laplace_pass_rate", tol.laplace_pass_rate, true));
            }
            Theory::Lss { variance, .. } => {
                let stat = col("stat");
                let (m, v) = mean_variance(&stat);
                s.empirical_mean = Some(m);
                s.empirical_variance = Some(v);
                s.theory_variance = Some(*variance);
                let se = (v / trials).sqrt();
                s.extra.insert("mean_in_standard_errors".into(), if se > 0.0 { m.abs() / se } else { 0.0 });
                if *variance > 0.0 {
                    s.checks.push(Check::new("variance_ratio", (v / variance - 1.0).abs(), Comparison::Below, "variance_ratio", tol.variance_ratio, true));
                } else {
                    let worst = stat.iter().fold(0.0f64, |a, x| a.max(x.abs()));
                    s.extra.insert("max_abs_stat".into(), worst);
                    s.checks.push(Check::new("identically_zero", f64::from(u8::from(worst == 0.0)), Comparison::AtLeast, "exact", 1.0, true));
                }
            }
            Theory::Rigidity { .. } => {
                let r = rate(&col("passed"));
                let mid = col("mid_dev").iter().filter(|&&d| d < 0.1).count() as f64 / trials;
                s.extra.insert("pass_rate".into(), r);
                s.extra.insert("mid_index_rate".into(), mid);
                s.checks.push(Check::new("bulk_bound_rate", r, Comparison::AtLeast, "rigidity_pass_rate", tol.rigidity_pass_rate, true));
            }
            Theory::LocalLaw { .. } => {
                let r = rate(&col("passed"));
                let ward = col("ward").into_iter().fold(0.0f64, f64::max);
                s.extra.insert("pass_rate".into(), r);
                s.extra.insert("max_symmetry".into(), col("symmetry").into_iter().fold(0.0f64, f64::max));
                s.checks.push(Check::new("envelope_rate", r, Comparison::AtLeast, "local_law_pass_rate", tol.local_law_pass_rate, true));
                s.checks.push(Check::new("ward_identity", ward, Comparison::Below, "ward", tol.ward, true));
            }
            Theory::ExtremeEig { c_mu_prime, c_mu, a, b, .. } => {
                let lower = col("lower_stat");
                let ks = ks_distance(&lower, |x| if x < 0.0 { 0.0 } else { weibull_cdf_lower(*c_mu_prime, *a, x).unwrap() });
                let (m, v) = mean_variance(&lower);
                s.ks_distance = Some(ks);
                s.empirical_mean = Some(m);
                s.empirical_variance = Some(v);
                s.checks.push(Check::new("ks_lower_edge", ks, Comparison::Below, "ks_lower_edge", tol.ks_lower_edge, true));
                if let Some(c) = c_mu {
                    let up = ks_distance(&col("upper_stat"), |x| if x > 0.0 { 1.0 } else { weibull_cdf(*c, *b, x).unwrap() });
                    s.extra.insert("ks_upper_edge".into(), up);
                }
            }
        }
        s
    }

    pub fn report(&self, table: StatsTable, runtime_seconds: f64) -> ExperimentReport {
        let summary = self.summarize(&table);
        let mut warnings = self.warnings.clone();
        if let Some(j) = table.columns.iter().position(|c| c == "k_in_bounds") {
            let bad = table.rows.iter().filter(|r| r[j] < 0.5).count();
            if bad > 0 {
                warnings.push(format!("{bad} trials have K outside (N^-10, 20]"));
            }
        }
        ExperimentReport::new(self.kind, self.cfg.to_value(), self.theory(), summary, warnings, table, runtime_seconds)
    }

    /// Samples every trial, evaluates its statistics and aggregates.
    pub fn run(&self) -> Result<ExperimentReport> {
        let start = Instant::now();
        let table = self.run_table()?;
        Ok(self.report(table, start.elapsed().as_secs_f64()))
    }
}
