use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::subcritical::{Regime, DEFAULT_DOMINANCE};

/// What an experiment checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// `√K(𝒱_∞ - c)` over sampled graphs, no process simulation.
    GraphVInfClt,
    /// `𝒰_∞` and the plug-in `1/(𝒰_∞ + 1)` over sampled graphs.
    GraphUInf,
    /// Medians of `|p̂ - p|`, `|μ̂ - μ|`, `|Λ̂ - Λ|`.
    SubConsistency,
    /// Component CLT of the given regime, plus the `p̂` CLT when the
    /// configuration lies in that regime.
    SubCltRegime(Regime),
    /// Medians of `|𝒫 - p|` and `|𝒰 - (1/p - 1)|`.
    SuperConsistency,
    /// Consistency plus the CLT of `(e^{α₀t}√K/N)(𝒫 - p)`.
    SuperClt,
    /// Behaviour of `p̂` on the empty graph.
    PZeroProp,
}

impl Target {
    /// Whether replicas need a simulated event log.
    pub fn simulates(self) -> bool {
        !matches!(self, Target::GraphVInfClt | Target::GraphUInf)
    }
}

fn default_q() -> f64 {
    7.0
}

fn default_mu() -> f64 {
    1.0
}

fn default_alpha() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub n: usize,
    pub k: usize,
    /// Observation time; the log covers `[0, 2t]` for subcritical targets
    /// and `[0, t]` for supercritical ones.
    #[serde(default)]
    pub t: Option<f64>,
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default = "default_mu")]
    pub mu: f64,
    pub kernel: KernelSpec,
    pub p: f64,
    /// Limit of `K/N`; defaults to the realised ratio.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

impl Params {
    pub fn lambda(&self) -> f64 {
        self.kernel.lambda()
    }

    pub fn gamma_or_ratio(&self) -> f64 {
        self.gamma.unwrap_or(self.k as f64 / self.n as f64)
    }

    pub fn horizon_t(&self) -> Result<f64> {
        match self.t {
            Some(t) if t.is_finite() && t > 0.0 => Ok(t),
            Some(t) => Err(Error::Config(format!("t must be positive, got {t}"))),
            None => Err(Error::Config("this target needs t".into())),
        }
    }
}

/// Acceptance thresholds. `None` fields take the per-target default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Half-width of the accepted band for empirical / theoretical variance;
    /// 0.2 for graph-only targets and 0.3 for simulated ones.
    pub variance_band: Option<f64>,
    /// KS tests pass when the p-value exceeds this level.
    pub ks_level: f64,
    pub p_abs: f64,
    pub mu_abs: f64,
    pub lambda_abs: f64,
    pub u_abs: f64,
    pub plugin_abs: f64,
    /// Accepted range for the frequency of `p̂ > 1/2` when `p = 0`.
    pub p_zero_band: (f64, f64),
    /// Upper bound on the median of `p̂` when `p = 0` and `p̂ → 0`.
    pub p_zero_median: f64,
    /// Fraction of replicas allowed to fail before the experiment fails.
    pub failure_quota: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            variance_band: None,
            ks_level: 0.01,
            p_abs: 0.05,
            mu_abs: 0.1,
            lambda_abs: 0.15,
            u_abs: 0.1,
            plugin_abs: 0.03,
            p_zero_band: (0.4, 0.6),
            p_zero_median: 0.05,
            failure_quota: 0.02,
        }
    }
}

impl Tolerances {
    pub fn variance_band_for(&self, target: Target) -> f64 {
        self.variance_band
            .unwrap_or(if target.simulates() { 0.3 } else { 0.2 })
    }
}

fn default_budget() -> u64 {
    crate::simulator::SimOptions::default().event_budget
}

fn default_dominance() -> f64 {
    DEFAULT_DOMINANCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub target: Target,
    pub params: Params,
    pub replicas: usize,
    /// Base seed; replica `r` uses `seeds::derive(seed, r, stream)`.
    pub seed: u64,
    #[serde(default = "default_budget")]
    pub event_budget: u64,
    #[serde(default = "default_dominance")]
    pub dominance_factor: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl ExperimentConfig {
    pub fn new(target: Target, params: Params, replicas: usize, seed: u64) -> Self {
        ExperimentConfig {
            target,
            params,
            replicas,
            seed,
            event_budget: default_budget(),
            dominance_factor: DEFAULT_DOMINANCE,
            tolerances: Tolerances::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Checks that the parameters make sense for the target.
    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        if self.replicas == 0 {
            return Err(Error::Config("replicas must be at least 1".into()));
        }
        if p.n == 0 || p.k == 0 || p.k > p.n {
            return Err(Error::Config(format!("need 1 ≤ K ≤ N, got N = {}, K = {}", p.n, p.k)));
        }
        if !(0.0..=1.0).contains(&p.p) {
            return Err(Error::Config(format!("p must lie in [0, 1], got {}", p.p)));
        }
        if !(p.mu.is_finite() && p.mu > 0.0) {
            return Err(Error::Config(format!("μ must be positive, got {}", p.mu)));
        }
        if !(p.alpha > 0.0 && p.alpha < 1.0) {
            return Err(Error::Config(format!("α must lie in (0, 1), got {}", p.alpha)));
        }
        if !(self.dominance_factor >= 1.0) {
            return Err(Error::Config(format!(
                "dominance factor must be at least 1, got {}",
                self.dominance_factor
            )));
        }
        let tol = &self.tolerances;
        if !(0.0..1.0).contains(&tol.failure_quota) {
            return Err(Error::Config(format!("failure quota must lie in [0, 1), got {}", tol.failure_quota)));
        }
        let lp = p.lambda() * p.p;
        match self.target {
            Target::GraphVInfClt | Target::SubConsistency | Target::SubCltRegime(_) => {
                if !(lp < 1.0) {
                    return Err(Error::Config(format!("target needs Λp < 1, got {lp}")));
                }
            }
            Target::GraphUInf => {
                if p.p == 0.0 {
                    return Err(Error::Config("target needs p > 0".into()));
                }
            }
            Target::SuperConsistency | Target::SuperClt => {
                let b = p
                    .kernel
                    .decay_rate()
                    .ok_or_else(|| Error::Config("supercritical targets need an exponential kernel".into()))?;
                if !(p.p > b) {
                    return Err(Error::Config(format!("supercritical targets need p > b, got p = {}, b = {b}", p.p)));
                }
            }
            Target::PZeroProp => {
                if p.p != 0.0 {
                    return Err(Error::Config(format!("p_zero_prop needs p = 0, got {}", p.p)));
                }
            }
        }
        if self.target.simulates() {
            p.horizon_t()?;
        }
        if matches!(
            self.target,
            Target::SubConsistency | Target::SubCltRegime(_) | Target::PZeroProp
        ) {
            crate::subcritical::delta_rule(p.horizon_t()?, p.q).map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }
}
