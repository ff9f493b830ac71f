//! JSON experiment configuration: parsing, defaults and regime checks.

use crate::error::{Error, Result};
use crate::freeconv::FreeConvolution;
use crate::measure::{BaseMeasure, JacobiMeasure, MeasureSpec};
use crate::saddle::{FreeEnergyMode, KMethod};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::path::Path;

/// Bumped whenever defaults or the statistics-table layout change.
pub const ARTIFACT_VERSION: &str = concat!("ssklab-", env!("CARGO_PKG_VERSION"), "+tables.1");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    LowTemp,
    HighTemp,
    Lss,
    Rigidity,
    LocalLaw,
    ExtremeEig,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::LowTemp,
        ExperimentKind::HighTemp,
        ExperimentKind::Lss,
        ExperimentKind::Rigidity,
        ExperimentKind::LocalLaw,
        ExperimentKind::ExtremeEig,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::LowTemp => "low_temp",
            ExperimentKind::HighTemp => "high_temp",
            ExperimentKind::Lss => "lss",
            ExperimentKind::Rigidity => "rigidity",
            ExperimentKind::LocalLaw => "local_law",
            ExperimentKind::ExtremeEig => "extreme_eig",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// The measure block: a Jacobi spec, or `{"point_mass": x}` for a
/// degenerate diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeasureConfig {
    PointMass { point_mass: f64 },
    Jacobi(MeasureSpec),
}

impl MeasureConfig {
    pub fn build(&self) -> Result<BaseMeasure> {
        match self {
            MeasureConfig::PointMass { point_mass } => Ok(BaseMeasure::PointMass(*point_mass)),
            MeasureConfig::Jacobi(spec) => Ok(BaseMeasure::Jacobi(JacobiMeasure::new(spec.clone())?)),
        }
    }

    pub fn exponents(&self) -> Option<(f64, f64)> {
        match self {
            MeasureConfig::Jacobi(s) => Some((s.a, s.b)),
            MeasureConfig::PointMass { .. } => None,
        }
    }
}

/// Named pass thresholds. The distributional ones are desk-scale
/// calibrations for limit theorems and carry no finite-N guarantee.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub ks_low_temp: f64,
    pub ks_lambda1: f64,
    pub ks_high_temp: f64,
    pub ks_lower_edge: f64,
    pub variance_ratio: f64,
    /// Allowed |mean| in standard errors.
    pub mean_standard_errors: f64,
    pub rigidity_pass_rate: f64,
    pub local_law_pass_rate: f64,
    pub ward: f64,
    pub gamma_distance_pass_rate: f64,
    pub laplace_pass_rate: f64,
    /// Relative distance to β_c below which a near-critical warning fires.
    pub near_critical: f64,
    /// Factor applied to distributional tolerances when near-critical.
    pub near_critical_widen: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            ks_low_temp: 0.10,
            ks_lambda1: 0.08,
            ks_high_temp: 0.08,
            ks_lower_edge: 0.08,
            variance_ratio: 0.25,
            mean_standard_errors: 3.0,
            rigidity_pass_rate: 0.90,
            local_law_pass_rate: 0.95,
            ward: 1e-8,
            gamma_distance_pass_rate: 0.90,
            laplace_pass_rate: 0.90,
            near_critical: 0.02,
            near_critical_widen: 2.0,
        }
    }
}

/// A fully defaulted configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Option<ExperimentKind>,
    pub measure: MeasureConfig,
    pub lambda: f64,
    /// Resolved inverse temperature (from `beta_ratio` times β_c if given).
    pub beta: Option<f64>,
    pub beta_ratio: Option<f64>,
    #[serde(rename = "N")]
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub tolerances: Tolerances,
    /// Polynomial coefficients for linear statistics, lowest degree first.
    pub f_spec: Option<Vec<f64>>,
    pub zeta: f64,
    pub kappa: f64,
    pub epsilon_prime: f64,
    pub method: KMethod,
    pub mode: FreeEnergyMode,
    pub contour_margin: f64,
}

const KEYS: &[&str] = &[
    "experiment",
    "measure",
    "lambda",
    "beta",
    "beta_ratio",
    "N",
    "trials",
    "seed",
    "tolerances",
    "f_spec",
    "zeta",
    "kappa",
    "epsilon_prime",
    "method",
    "mode",
    "contour_margin",
];

fn number(obj: &Map<String, Value>, key: &str, errs: &mut Vec<String>) -> Option<f64> {
    match obj.get(key) {
        None | Some(Value::Null) => None,
        Some(Value::Number(x)) => x.as_f64(),
        Some(other) => {
            errs.push(format!("`{key}` must be a number, got {other}"));
            None
        }
    }
}

fn integer(obj: &Map<String, Value>, key: &str, errs: &mut Vec<String>) -> Option<u64> {
    match obj.get(key) {
        None | Some(Value::Null) => None,
        Some(Value::Number(x)) if x.as_u64().is_some() => x.as_u64(),
        Some(other) => {
            errs.push(format!("`{key}` must be a non-negative integer, got {other}"));
            None
        }
    }
}

fn typed<T: for<'de> Deserialize<'de>>(obj: &Map<String, Value>, key: &str, errs: &mut Vec<String>) -> Option<T> {
    let v = obj.get(key)?;
    if v.is_null() {
        return None;
    }
    match serde_json::from_value(v.clone()) {
        Ok(t) => Some(t),
        Err(e) => {
            errs.push(format!("`{key}`: {e}"));
            None
        }
    }
}

impl ExperimentConfig {
    /// Parses and defaults a JSON value, collecting every schema violation.
    /// Regime checks are separate (`regime_violations`).
    pub fn from_value(v: &Value) -> std::result::Result<Self, Vec<String>> {
        let mut errs = Vec::new();
        let Some(obj) = v.as_object() else {
            return Err(vec!["config must be a JSON object".into()]);
        };
        for k in obj.keys() {
            if !KEYS.contains(&k.as_str()) {
                errs.push(format!("unknown key `{k}`"));
            }
        }
        let experiment = match obj.get("experiment") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => {
                let k = ExperimentKind::parse(s);
                if k.is_none() {
                    let names: Vec<_> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
                    errs.push(format!("`experiment` must be one of {}, got \"{s}\"", names.join(", ")));
                }
                k
            }
            Some(other) => {
                errs.push(format!("`experiment` must be a string, got {other}"));
                None
            }
        };
        let measure = match obj.get("measure") {
            None => {
                errs.push("missing required field `measure`".into());
                None
            }
            Some(m) => match serde_json::from_value::<MeasureConfig>(m.clone()) {
                Ok(mc) => Some(mc),
                Err(_) => {
                    // Re-run the strict parser for a specific message.
                    let detail = serde_json::from_value::<MeasureSpec>(m.clone()).err().map(|e| e.to_string());
                    errs.push(format!(
                        "`measure` must be {{\"a\", \"b\", \"d\"?, \"quadrature_order\"?}} or {{\"point_mass\"}}: {}",
                        detail.unwrap_or_else(|| "invalid".into())
                    ));
                    None
                }
            },
        };
        let lambda = number(obj, "lambda", &mut errs);
        if lambda.is_none() && !obj.contains_key("lambda") {
            errs.push("missing required field `lambda`".into());
        }
        let beta = number(obj, "beta", &mut errs);
        let beta_ratio = number(obj, "beta_ratio", &mut errs);
        let n = integer(obj, "N", &mut errs).unwrap_or(1000);
        let trials = integer(obj, "trials", &mut errs).unwrap_or(100);
        let seed = integer(obj, "seed", &mut errs).unwrap_or(0);
        let tolerances: Tolerances = typed(obj, "tolerances", &mut errs).unwrap_or_default();
        let f_spec: Option<Vec<f64>> = typed(obj, "f_spec", &mut errs);
        let zeta = number(obj, "zeta", &mut errs).unwrap_or(0.01);
        let kappa = number(obj, "kappa", &mut errs).unwrap_or(1.0);
        let epsilon_prime = number(obj, "epsilon_prime", &mut errs).unwrap_or(0.1);
        let method = typed(obj, "method", &mut errs).unwrap_or(KMethod::SteepestDescent);
        let mode = typed(obj, "mode", &mut errs).unwrap_or(FreeEnergyMode::Asymptotic);
        let contour_margin = number(obj, "contour_margin", &mut errs).unwrap_or(0.25);

        if n < 2 {
            errs.push(format!("`N` must be at least 2, got {n}"));
        }
        if trials < 1 {
            errs.push("`trials` must be at least 1".into());
        }
        if let Some(l) = lambda {
            if !(l >= 0.0) {
                errs.push(format!("`lambda` must be non-negative, got {l}"));
            }
        }
        if beta.is_some() && beta_ratio.is_some() {
            errs.push("give at most one of `beta` and `beta_ratio`".into());
        }
        for (key, val) in [("beta", beta), ("beta_ratio", beta_ratio)] {
            if let Some(x) = val {
                if !(x > 0.0) {
                    errs.push(format!("`{key}` must be positive, got {x}"));
                }
            }
        }
        if !(zeta > 0.0) {
            errs.push(format!("`zeta` must be positive, got {zeta}"));
        }
        if !(contour_margin > 0.0) {
            errs.push(format!("`contour_margin` must be positive, got {contour_margin}"));
        }
        if let Some(f) = &f_spec {
            if f.is_empty() {
                errs.push("`f_spec` must list at least one coefficient".into());
            }
        }
        if !errs.is_empty() {
            return Err(errs);
        }
        Ok(ExperimentConfig {
            experiment,
            measure: measure.unwrap(),
            lambda: lambda.unwrap(),
            beta,
            beta_ratio,
            n: n as usize,
            trials: trials as usize,
            seed,
            tolerances,
            f_spec,
            zeta,
            kappa,
            epsilon_prime,
            method,
            mode,
            contour_margin,
        })
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn free_convolution(&self) -> Result<FreeConvolution> {
        FreeConvolution::new(self.measure.build()?, self.lambda)
    }

    /// Replaces `beta_ratio` by the absolute `beta` once β_c is known.
    pub fn resolve_beta(&mut self, fc: &FreeConvolution) {
        if let Some(r) = self.beta_ratio.take() {
            self.beta = Some(r * fc.beta_c_subordination());
        }
    }

    /// Hypotheses of the limit theorem behind the configured experiment.
    pub fn regime_violations(&self, fc: &FreeConvolution) -> Vec<String> {
        let Some(kind) = self.experiment else { return Vec::new() };
        let mut out = Vec::new();
        let name = kind.name();
        let (a, b) = match self.measure.exponents() {
            Some(ab) => ab,
            None => {
                if kind != ExperimentKind::LocalLaw && kind != ExperimentKind::Rigidity {
                    out.push(format!("{name} requires a Jacobi measure"));
                    return out;
                }
                (f64::NAN, f64::NAN)
            }
        };
        let edges = fc.edges();
        let lam = self.lambda;
        let above = |t: Option<f64>| t.map(|t| lam > t).unwrap_or(false);
        let supercritical = above(edges.lambda_plus) && above(edges.lambda_minus);
        let fmt_thresholds = || {
            format!(
                "lambda={lam}, lambda_plus={}, lambda_minus={}",
                edges.lambda_plus.map(|x| x.to_string()).unwrap_or_else(|| "undefined".into()),
                edges.lambda_minus.map(|x| x.to_string()).unwrap_or_else(|| "undefined".into())
            )
        };
        let need_super = |out: &mut Vec<String>| {
            if !supercritical {
                out.push(format!("{name} requires lambda>max(lambda_plus, lambda_minus) ({})", fmt_thresholds()));
            }
        };
        let beta = self.beta;
        let bc = fc.beta_c_subordination();
        match kind {
            ExperimentKind::LowTemp => {
                if !(b > 11.0) {
                    out.push(format!("low_temp requires b>11 (got b={b})"));
                }
                let upper = (b * b - 6.0 * b - 7.0) / 4.0;
                if !(a > 1.0 && a < upper) {
                    out.push(format!("low_temp requires 1<a<(b^2-6b-7)/4 (got a={a}, upper bound {upper})"));
                }
                need_super(&mut out);
                match beta {
                    Some(x) if x > bc => {}
                    Some(x) => out.push(format!("low_temp requires beta>beta_c (got beta={x}, beta_c={bc})")),
                    None => out.push("low_temp requires `beta` or `beta_ratio`".into()),
                }
            }
            ExperimentKind::HighTemp | ExperimentKind::Lss => {
                if !(a > 1.0) {
                    out.push(format!("{name} requires a>1 (got a={a})"));
                }
                if !(b > 37.0 / 3.0) {
                    out.push(format!("{name} requires b>37/3 (got b={b})"));
                }
                need_super(&mut out);
                if kind == ExperimentKind::HighTemp {
                    match beta {
                        Some(x) if x < bc => {}
                        Some(x) => out.push(format!("high_temp requires 0<beta<beta_c (got beta={x}, beta_c={bc})")),
                        None => out.push("high_temp requires `beta` or `beta_ratio`".into()),
                    }
                } else if self.f_spec.is_none() {
                    out.push("lss requires a polynomial `f_spec`".into());
                }
            }
            ExperimentKind::Rigidity => {
                if self.measure.exponents().is_some() {
                    if !(a > 1.0) {
                        out.push(format!("rigidity requires a>1 (got a={a})"));
                    }
                    if !(b > 3.0) {
                        out.push(format!("rigidity requires b>3 (got b={b})"));
                    }
                    need_super(&mut out);
                }
            }
            ExperimentKind::LocalLaw => {
                if self.n > 2000 {
                    out.push(format!("local_law needs dense resolvents and N<=2000 (got N={})", self.n));
                }
            }
            ExperimentKind::ExtremeEig => {
                if !(a > 1.0) {
                    out.push(format!("extreme_eig requires a>1 (got a={a})"));
                }
                if !above(edges.lambda_minus) {
                    out.push(format!("extreme_eig requires lambda>lambda_minus ({})", fmt_thresholds()));
                }
            }
        }
        out
    }
}

/// Parses JSON text; syntax errors carry line and column.
pub fn parse_json(text: &str) -> Result<Value> {
    serde_json::from_str(text)
        .map_err(|e| Error::Config(vec![format!("parse error at line {}, column {}: {e}", e.line(), e.column())]))
}

/// Applies `key=value` overrides (dotted paths) to a raw config value. The
/// value is read as JSON when possible and as a string otherwise. Keys must
/// exist in the defaulted schema.
pub fn apply_overrides(v: &mut Value, overrides: &[String]) -> Result<()> {
    let mut errs = Vec::new();
    let defaults = schema_skeleton(v);
    for o in overrides {
        let Some((key, raw)) = o.split_once('=') else {
            errs.push(format!("override `{o}` is not of the form key=value"));
            continue;
        };
        let path: Vec<&str> = key.split('.').collect();
        if !path_exists(&defaults, &path) {
            errs.push(format!("override key `{key}` does not name a config field"));
            continue;
        }
        let val: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut cur = &mut *v;
        for (i, p) in path.iter().enumerate() {
            if !cur.is_object() {
                *cur = Value::Object(Map::new());
            }
            let obj = cur.as_object_mut().unwrap();
            if i + 1 == path.len() {
                obj.insert(p.to_string(), val.clone());
                break;
            }
            cur = obj.entry(p.to_string()).or_insert_with(|| Value::Object(Map::new()));
        }
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(errs))
    }
}

/// Every key the schema accepts, with the measure branch matching `v`.
fn schema_skeleton(v: &Value) -> Value {
    let point_mass = v.get("measure").and_then(|m| m.get("point_mass")).is_some();
    let measure = if point_mass {
        serde_json::json!({"point_mass": 0.0})
    } else {
        serde_json::json!({"a": 0.0, "b": 0.0, "d": null, "quadrature_order": 0})
    };
    let mut obj = Map::new();
    for k in KEYS {
        obj.insert(k.to_string(), Value::Null);
    }
    obj.insert("measure".into(), measure);
    obj.insert("tolerances".into(), serde_json::to_value(Tolerances::default()).unwrap());
    Value::Object(obj)
}

fn path_exists(v: &Value, path: &[&str]) -> bool {
    match path.split_first() {
        None => true,
        Some((head, rest)) => match v.get(*head) {
            Some(inner) if rest.is_empty() => {
                let _ = inner;
                true
            }
            Some(inner) => path_exists(inner, rest),
            None => false,
        },
    }
}

/// Reads, overrides, defaults and regime-checks a config file. Returns the
/// normalized config with `beta` resolved, or every violation found.
pub fn validate_config(path: &Path, overrides: &[String]) -> Result<(ExperimentConfig, FreeConvolution)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut v = parse_json(&text)?;
    validate_value(&mut v, overrides)
}

pub fn validate_value(v: &mut Value, overrides: &[String]) -> Result<(ExperimentConfig, FreeConvolution)> {
    apply_overrides(v, overrides)?;
    let mut cfg = ExperimentConfig::from_value(v).map_err(Error::Config)?;
    let fc = cfg.free_convolution().map_err(|e| Error::Config(vec![format!("measure: {e}")]))?;
    cfg.resolve_beta(&fc);
    let regime = cfg.regime_violations(&fc);
    if !regime.is_empty() {
        return Err(Error::RegimeViolation(regime));
    }
    Ok((cfg, fc))
}
