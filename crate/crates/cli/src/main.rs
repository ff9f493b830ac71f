//! `ssklab`: analytic quantities and Monte-Carlo experiments for the
//! spherical SK model with a deformed Wigner disorder.

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use ssklab::experiments::{validate_value, Experiment, ExperimentConfig, ExperimentKind, ARTIFACT_VERSION};
use ssklab::freeconv::FreeConvolution;
use ssklab::saddle::free_energy;
use ssklab::spectra::{sample_matrix, write_eigenvalues_csv, SampleCache, SpectralSample};
use ssklab::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

const SCHEMA: &str = r#"config schema (JSON object):
  "measure":     {"a": num, "b": num, "d"?: {"poly": [..]} | {"table": {"x": [..], "y": [..]}},
                  "quadrature_order"?: int}   or   {"point_mass": num}
  "lambda":      num (required)
  "beta"?: num | "beta_ratio"?: num (multiple of beta_c)
  "N"?: int (1000), "trials"?: int (100), "seed"?: int (0)
  "experiment"?: low_temp | high_temp | lss | rigidity | local_law | extreme_eig
  "tolerances"?: {name: num}, "f_spec"?: [c0, c1, ..], "zeta"?: 0.01, "kappa"?: 1,
  "epsilon_prime"?: 0.1, "method"?: steepest_descent | vertical_line | laplace,
  "mode"?: asymptotic | exact, "contour_margin"?: 0.25"#;

#[derive(Parser, Debug)]
#[command(name = "ssklab", version, about = "Free convolution, saddle-point and Monte-Carlo tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key (dotted path), e.g. --set measure.b=13.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Directory for outputs and the manifest; stdout only when absent.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; falls back to SSKLAB_THREADS, then all cores.
    #[arg(long, env = "SSKLAB_THREADS")]
    threads: Option<usize>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Stieltjes transform of the free convolution and its derivative.
    Mfc {
        #[command(flatten)]
        common: Common,
        /// Spectral parameter as RE,IM; repeatable.
        #[arg(long = "z", value_name = "RE,IM", required = true)]
        z: Vec<String>,
    },
    /// Density of the free convolution on a uniform grid over its support.
    Density {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 801)]
        points: usize,
    },
    /// Support edges and edge constants.
    Edges {
        #[command(flatten)]
        common: Common,
    },
    /// Critical inverse temperature.
    Betac {
        #[command(flatten)]
        common: Common,
    },
    /// High-temperature point, limiting free energy and fluctuation variance.
    GammaHat {
        #[command(flatten)]
        common: Common,
    },
    /// Classical eigenvalue locations for the configured N.
    Classical {
        #[command(flatten)]
        common: Common,
    },
    /// Limiting free energy on a grid of beta values.
    FreeEnergy {
        #[command(flatten)]
        common: Common,
        /// Comma-separated betas; defaults to the configured beta.
        #[arg(long, value_delimiter = ',')]
        betas: Vec<f64>,
    },
    /// Draw samples, dump eigenvalues and (with a beta) saddle diagnostics.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Reuse eigenvalues stored in this directory.
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
    /// Run a Monte-Carlo experiment and its pass/fail checks.
    Experiment {
        #[command(flatten)]
        common: Common,
        /// Overrides the config's "experiment".
        #[arg(value_parser = parse_kind)]
        kind: Option<ExperimentKind>,
    },
}

fn parse_kind(s: &str) -> Result<ExperimentKind, String> {
    ExperimentKind::parse(s).ok_or_else(|| {
        let names: Vec<_> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
        format!("unknown experiment `{s}` (expected one of {})", names.join(", "))
    })
}

enum Failure {
    Usage(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::RegimeViolation(_) => Failure::Usage(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

/// One artifact: file name and contents.
struct Output {
    name: String,
    body: String,
}

fn load(common: &Common, kind: Option<ExperimentKind>) -> Result<(ExperimentConfig, FreeConvolution), Failure> {
    let mut v = match &common.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
            ssklab::experiments::parse_json(&text)?
        }
        None => Value::Object(Map::new()),
    };
    if let Some(seed) = common.seed {
        v["seed"] = json!(seed);
    }
    if let Some(k) = kind {
        v["experiment"] = json!(k.name());
    }
    Ok(validate_value(&mut v, &common.overrides)?)
}

fn need_beta(cfg: &ExperimentConfig) -> Result<f64, Failure> {
    cfg.beta.ok_or_else(|| Failure::Usage("this command needs `beta` or `beta_ratio` in the config".into()))
}

fn json_out(name: &str, v: &Value) -> Output {
    Output { name: format!("{name}.json"), body: serde_json::to_string_pretty(v).unwrap() + "\n" }
}

/// Flat JSON object as `key,value` rows.
fn kv_csv(name: &str, v: &Value) -> Output {
    let mut body = String::from("key,value\n");
    if let Some(o) = v.as_object() {
        for (k, x) in o {
            body.push_str(&format!("{k},{x}\n"));
        }
    }
    Output { name: format!("{name}.csv"), body }
}

fn scalar_out(name: &str, v: Value, format: Option<Format>) -> Vec<Output> {
    match format.unwrap_or(Format::Json) {
        Format::Json => vec![json_out(name, &v)],
        Format::Csv => vec![kv_csv(name, &v)],
    }
}

fn opt(x: Option<f64>) -> Value {
    x.map(Value::from).unwrap_or(Value::Null)
}

fn parse_z(s: &str) -> Result<Complex64, Failure> {
    let bad = || Failure::Usage(format!("--z expects RE,IM, got `{s}`"));
    let (re, im) = s.split_once(',').ok_or_else(bad)?;
    Ok(Complex64::new(re.trim().parse().map_err(|_| bad())?, im.trim().parse().map_err(|_| bad())?))
}

fn run(cmd: &Command) -> Result<(Vec<Output>, ExperimentConfig, bool), Failure> {
    let mut passed = true;
    let (outputs, cfg) = match cmd {
        Command::Mfc { common, z } => {
            let (cfg, fc) = load(common, None)?;
            let mut rows = Vec::new();
            for s in z {
                let z = parse_z(s)?;
                let m = fc.solve_mfc(z)?;
                let mp = fc.mfc_prime(z)?;
                rows.push(json!({"re": z.re, "im": z.im, "m_re": m.re, "m_im": m.im, "m_prime_re": mp.re,
                                  "m_prime_im": mp.im, "residual": fc.residual(z, m)}));
            }
            let out = match common.format.unwrap_or(Format::Json) {
                Format::Json => json_out("mfc", &Value::Array(rows)),
                Format::Csv => {
                    let mut body = String::from("re,im,m_re,m_im,m_prime_re,m_prime_im,residual\n");
                    for r in &rows {
                        let cols = ["re", "im", "m_re", "m_im", "m_prime_re", "m_prime_im", "residual"];
                        let line: Vec<String> = cols.iter().map(|c| format!("{:?}", r[c].as_f64().unwrap())).collect();
                        body.push_str(&line.join(","));
                        body.push('\n');
                    }
                    Output { name: "mfc.csv".into(), body }
                }
            };
            (vec![out], cfg)
        }
        Command::Density { common, points } => {
            let (cfg, fc) = load(common, None)?;
            if *points < 2 {
                return Err(Failure::Usage("--points must be at least 2".into()));
            }
            let (lo, hi) = (fc.l_minus(), fc.l_plus());
            let xs: Vec<f64> = (0..*points).map(|i| lo + (hi - lo) * i as f64 / (*points - 1) as f64).collect();
            let grid = fc.density(&xs);
            let out = match common.format.unwrap_or(Format::Csv) {
                Format::Csv => {
                    let mut body = String::from("x,rho\n");
                    for (x, r) in grid.xs.iter().zip(&grid.rho) {
                        body.push_str(&format!("{x:?},{r:?}\n"));
                    }
                    Output { name: "density.csv".into(), body }
                }
                Format::Json => json_out(
                    "density",
                    &json!({"x": grid.xs, "rho": grid.rho, "trapezoid_mass": grid.trapezoid_mass(),
                            "flagged": grid.flagged}),
                ),
            };
            (vec![out], cfg)
        }
        Command::Edges { common } => {
            let (cfg, fc) = load(common, None)?;
            let s = fc.summary();
            let e = s.edges;
            let v = json!({"L_minus": s.l_minus, "L_plus": s.l_plus, "lambda": s.lambda,
                "lambda_plus": opt(e.lambda_plus), "lambda_minus": opt(e.lambda_minus),
                "tau_plus": opt(e.tau_plus), "tau_minus": opt(e.tau_minus),
                "C_mu": opt(e.c_mu), "C_mu_prime": opt(e.c_mu_prime),
                "closed_form_upper": s.closed_form_upper, "closed_form_lower": s.closed_form_lower,
                "beta_c": s.beta_c_subordination});
            (scalar_out("edges", v, common.format), cfg)
        }
        Command::Betac { common } => {
            let (cfg, fc) = load(common, None)?;
            let v = json!({"beta_c": fc.beta_c_subordination(), "beta_c_quadrature": opt(fc.beta_c().ok())});
            (scalar_out("betac", v, common.format), cfg)
        }
        Command::GammaHat { common } => {
            let (cfg, fc) = load(common, None)?;
            let h = fc.gamma_hat(need_beta(&cfg)?)?;
            let v = json!({"beta": h.beta, "gamma_hat": h.gamma_hat, "F_limit": h.f_limit, "variance": h.variance,
                           "L_plus": fc.l_plus()});
            (scalar_out("gamma_hat", v, common.format), cfg)
        }
        Command::Classical { common } => {
            let (cfg, fc) = load(common, None)?;
            let g = fc.classical_locations(cfg.n);
            let out = match common.format.unwrap_or(Format::Csv) {
                Format::Csv => {
                    let mut body = String::from("i,gamma_i\n");
                    for (i, x) in g.iter().enumerate() {
                        body.push_str(&format!("{},{x:?}\n", i + 1));
                    }
                    Output { name: "classical.csv".into(), body }
                }
                Format::Json => json_out("classical", &json!({"N": cfg.n, "gamma": g})),
            };
            (vec![out], cfg)
        }
        Command::FreeEnergy { common, betas } => {
            let (cfg, fc) = load(common, None)?;
            let betas = if betas.is_empty() { vec![need_beta(&cfg)?] } else { betas.clone() };
            let bc = fc.beta_c_subordination();
            let mut rows = Vec::new();
            for &b in &betas {
                rows.push(json!({"beta": b, "F": fc.limiting_free_energy(b)?, "low_temperature": b >= bc}));
            }
            let out = match common.format.unwrap_or(Format::Json) {
                Format::Json => json_out("free_energy", &json!({"beta_c": bc, "values": rows})),
                Format::Csv => {
                    let mut body = String::from("beta,F\n");
                    for r in &rows {
                        body.push_str(&format!("{:?},{:?}\n", r["beta"].as_f64().unwrap(), r["F"].as_f64().unwrap()));
                    }
                    Output { name: "free_energy.csv".into(), body }
                }
            };
            (vec![out], cfg)
        }
        Command::Simulate { common, cache_dir } => {
            let (cfg, fc) = load(common, None)?;
            let cache = cache_dir.as_ref().map(SampleCache::new).transpose()?;
            let samples = draw(&cfg, &fc, cache.as_ref())?;
            let mut buf = Vec::new();
            write_eigenvalues_csv(&mut buf, &samples).map_err(|e| Failure::Run(e.to_string()))?;
            let mut outs = vec![Output { name: "eigenvalues.csv".into(), body: String::from_utf8(buf).unwrap() }];
            if let Some(beta) = cfg.beta {
                let mut body = String::from("trial,gamma,R_gamma,R2,K,F_N,method\n");
                for s in &samples {
                    let d = free_energy(&s.eigs, beta, cfg.method, cfg.mode)?;
                    let method = serde_json::to_value(d.method).unwrap();
                    body.push_str(&format!(
                        "{},{:?},{:?},{:?},{:?},{:?},{}\n",
                        s.trial,
                        d.gamma,
                        d.r_gamma,
                        d.r2,
                        d.k,
                        d.free_energy,
                        method.as_str().unwrap()
                    ));
                }
                outs.push(Output { name: "saddle.csv".into(), body });
            }
            (outs, cfg)
        }
        Command::Experiment { common, kind } => {
            let (cfg, fc) = load(common, *kind)?;
            if cfg.experiment.is_none() {
                return Err(Failure::Usage("no experiment given (positional KIND or config `experiment`)".into()));
            }
            let exp = Experiment::new(cfg.clone(), fc)?;
            let report = exp.run()?;
            passed = report.passed();
            let csv = report.table.to_csv();
            let outs = match common.format.unwrap_or(Format::Json) {
                Format::Json => vec![
                    json_out("report", &serde_json::to_value(&report).unwrap()),
                    Output { name: "stats.csv".into(), body: csv },
                ],
                Format::Csv => vec![Output { name: "stats.csv".into(), body: csv }],
            };
            for c in report.summary.checks.iter().filter(|c| c.asserted && !c.passed) {
                eprintln!(
                    "check {} failed: {} (needs {} {} {})",
                    c.name,
                    c.value,
                    serde_json::to_value(c.comparison).unwrap().as_str().unwrap(),
                    c.tolerance_key,
                    c.tolerance
                );
            }
            (outs, cfg)
        }
    };
    Ok((outputs, cfg, passed))
}

fn draw(cfg: &ExperimentConfig, fc: &FreeConvolution, cache: Option<&SampleCache>) -> Result<Vec<SpectralSample>, Error> {
    use rayon::prelude::*;
    (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| match cache {
            Some(c) => c.get_or_sample(fc.measure(), cfg.lambda, cfg.n, cfg.seed, t),
            None => sample_matrix(fc.measure(), cfg.lambda, cfg.n, cfg.seed, t, false),
        })
        .collect()
}

fn common(cmd: &Command) -> &Common {
    match cmd {
        Command::Mfc { common, .. }
        | Command::Density { common, .. }
        | Command::Edges { common }
        | Command::Betac { common }
        | Command::GammaHat { common }
        | Command::Classical { common }
        | Command::FreeEnergy { common, .. }
        | Command::Simulate { common, .. }
        | Command::Experiment { common, .. } => common,
    }
}

fn name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Mfc { .. } => "mfc",
        Command::Density { .. } => "density",
        Command::Edges { .. } => "edges",
        Command::Betac { .. } => "betac",
        Command::GammaHat { .. } => "gamma-hat",
        Command::Classical { .. } => "classical",
        Command::FreeEnergy { .. } => "free-energy",
        Command::Simulate { .. } => "simulate",
        Command::Experiment { .. } => "experiment",
    }
}

fn config_hash(cfg: &ExperimentConfig) -> String {
    let canonical = serde_json::to_string(&cfg.to_value()).unwrap();
    Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_outputs(dir: &Path, outs: &[Output], manifest: &Value) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for o in outs {
        std::fs::write(dir.join(&o.name), &o.body)?;
    }
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(manifest).unwrap() + "\n")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let common = common(&cli.command).clone();
    if let Some(t) = common.threads {
        if t == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        // Only fails if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let (outs, cfg, passed) = match run(&cli.command) {
        Ok(r) => r,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\n{SCHEMA}");
            return ExitCode::from(2);
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    match &common.out_dir {
        Some(dir) => {
            let manifest = json!({
                "artifact_version": ARTIFACT_VERSION,
                "subcommand": name(&cli.command),
                "config_hash": config_hash(&cfg),
                "config": cfg.to_value(),
                "files": outs.iter().map(|o| o.name.clone()).collect::<Vec<_>>(),
                "threads": rayon::current_num_threads(),
                "runtime_seconds": start.elapsed().as_secs_f64(),
            });
            if let Err(e) = write_outputs(dir, &outs, &manifest) {
                eprintln!("error: writing {}: {e}", dir.display());
                return ExitCode::from(1);
            }
        }
        // Without an output directory only the primary artifact is printed.
        None => print!("{}", outs[0].body),
    }
    if passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
