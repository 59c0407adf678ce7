use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::stats::{self, KsResult};
use crate::subcritical::RegimeDiagnostics;

/// Raw statistics of one replica.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRecord {
    pub index: usize,
    pub graph_seed: u64,
    pub sim_seed: Option<u64>,
    pub values: BTreeMap<String, f64>,
    pub events: u64,
}

/// A replica that errored; kept with its seeds so it can be rerun.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaFailure {
    pub index: usize,
    pub graph_seed: u64,
    pub sim_seed: Option<u64>,
    pub error: String,
}

/// Distribution of one normalised error across replicas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltSummary {
    pub name: String,
    /// What the error is centred at and scaled by.
    pub normalization: String,
    pub samples: usize,
    pub mean: f64,
    pub variance: f64,
    pub theory_paper_literal: f64,
    pub theory_delta_method: f64,
    /// Empirical variance over the delta-method variance.
    pub variance_ratio: f64,
    /// Against `N(0, theory_delta_method)`.
    pub ks: KsResult,
    /// Against `N(0, variance)`, a shape-only diagnostic.
    pub ks_standardized: KsResult,
    /// `(theoretical quantile, empirical quantile)` on the delta-method scale.
    pub qq: Vec<(f64, f64)>,
    /// Whether checks were asserted on this summary.
    pub asserted: bool,
}

impl CltSummary {
    pub fn new(
        name: &str,
        normalization: &str,
        xs: &[f64],
        theory_paper_literal: f64,
        theory_delta_method: f64,
        asserted: bool,
    ) -> Self {
        let variance = stats::variance(xs);
        let sd = theory_delta_method.sqrt();
        let emp_sd = variance.sqrt();
        let mean = stats::mean(xs);
        CltSummary {
            name: name.into(),
            normalization: normalization.into(),
            samples: xs.len(),
            mean,
            variance,
            theory_paper_literal,
            theory_delta_method,
            variance_ratio: variance / theory_delta_method,
            ks: stats::ks_test(xs, |x| stats::normal_cdf(x / sd)),
            ks_standardized: stats::ks_test(xs, |x| stats::normal_cdf((x - mean) / emp_sd)),
            qq: stats::qq_points(xs, sd),
            asserted,
        }
    }

    pub fn write_qq_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(w);
        writeln!(w, "theoretical_quantile,empirical_quantile")?;
        for (a, b) in &self.qq {
            writeln!(w, "{a},{b}")?;
        }
        w.flush()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    /// Human-readable acceptance condition.
    pub bound: String,
}

impl Check {
    pub fn at_most(name: &str, value: f64, max: f64) -> Self {
        Check {
            name: name.into(),
            passed: value <= max,
            value,
            bound: format!("<= {max}"),
        }
    }

    pub fn at_least(name: &str, value: f64, min: f64) -> Self {
        Check {
            name: name.into(),
            passed: value >= min,
            value,
            bound: format!(">= {min}"),
        }
    }

    pub fn within(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        Check {
            name: name.into(),
            passed: (lo..=hi).contains(&value),
            value,
            bound: format!("in [{lo}, {hi}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub config: ExperimentConfig,
    pub replicas: Vec<ReplicaRecord>,
    pub failures: Vec<ReplicaFailure>,
    #[serde(default)]
    pub regime: Option<RegimeDiagnostics>,
    pub clt: Vec<CltSummary>,
    pub checks: Vec<Check>,
    pub diagnostics: BTreeMap<String, f64>,
    pub passed: bool,
    pub events_total: u64,
    /// Excluded from [`McReport::to_json_without_timing`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_secs: Option<f64>,
}

impl McReport {
    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    /// The report bytes that must be identical across reruns.
    pub fn to_json_without_timing(&self) -> serde_json::Result<String> {
        let mut r = self.clone();
        r.wall_clock_secs = None;
        r.to_json()
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn clt(&self, name: &str) -> Option<&CltSummary> {
        self.clt.iter().find(|c| c.name == name)
    }

    /// Values of one statistic across successful replicas.
    pub fn values(&self, key: &str) -> Vec<f64> {
        self.replicas
            .iter()
            .filter_map(|r| r.values.get(key).copied())
            .collect()
    }

    /// One line per check, `PASS`/`FAIL` first.
    pub fn summary_lines(&self) -> Vec<String> {
        self.checks
            .iter()
            .map(|c| {
                format!(
                    "{} {}: {:.6} (bound {})",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.bound
                )
            })
            .collect()
    }
}
