use super::config::{ExperimentKind, ARTIFACT_VERSION};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Per-trial statistics; row `i` belongs to trial `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl StatsTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    /// CSV with a leading integer `trial` column. Floats use the shortest
    /// round-trip representation, so equal tables give equal bytes.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("trial");
        for c in &self.columns {
            s.push(',');
            s.push_str(c);
        }
        s.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            write!(s, "{i}").unwrap();
            for x in row {
                write!(s, ",{x:?}").unwrap();
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    #[serde(rename = "<")]
    Below,
    #[serde(rename = ">=")]
    AtLeast,
}

/// One pass/fail flag and the named tolerance it used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub comparison: Comparison,
    pub tolerance_key: String,
    pub tolerance: f64,
    pub passed: bool,
    /// Informational checks never affect the exit status.
    pub asserted: bool,
}

impl Check {
    pub fn new(name: &str, value: f64, comparison: Comparison, key: &str, tolerance: f64, asserted: bool) -> Self {
        let passed = match comparison {
            Comparison::Below => value < tolerance,
            Comparison::AtLeast => value >= tolerance,
        };
        Check { name: name.into(), value, comparison, tolerance_key: key.into(), tolerance, passed, asserted }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub ks_distance: Option<f64>,
    pub empirical_mean: Option<f64>,
    pub empirical_variance: Option<f64>,
    pub theory_variance: Option<f64>,
    pub extra: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
}

impl Summary {
    pub fn passed(&self) -> bool {
        self.checks.iter().filter(|c| c.asserted).all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub artifact_version: String,
    pub experiment: ExperimentKind,
    pub config: Value,
    pub theory: BTreeMap<String, f64>,
    pub summary: Summary,
    pub warnings: Vec<String>,
    pub calibration_note: String,
    pub table: StatsTable,
    pub runtime_seconds: f64,
}

pub(crate) const CALIBRATION_NOTE: &str = "distributional thresholds are desk-scale calibrations of \
N->infinity limit laws; they are not finite-N guarantees";

impl ExperimentReport {
    pub(crate) fn new(
        experiment: ExperimentKind,
        config: Value,
        theory: BTreeMap<String, f64>,
        summary: Summary,
        warnings: Vec<String>,
        table: StatsTable,
        runtime_seconds: f64,
    ) -> Self {
        ExperimentReport {
            artifact_version: ARTIFACT_VERSION.into(),
            experiment,
            config,
            theory,
            summary,
            warnings,
            calibration_note: CALIBRATION_NOTE.into(),
            table,
            runtime_seconds,
        }
    }

    pub fn passed(&self) -> bool {
        self.summary.passed()
    }
}
