//! Estimator of `p` in the supercritical regime, where counts grow like
//! `e^{α₀ t}` with `α₀ = p - b`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::EventLog;

fn check_block(log: &EventLog, k: usize, t: f64) -> Result<()> {
    if k == 0 || k > log.n() {
        return Err(Error::Domain(format!("K must lie in 1..={}, got {k}", log.n())));
    }
    if !(t >= 0.0 && t <= log.horizon()) {
        return Err(Error::HorizonTooShort(format!("t = {t} outside [0, {}]", log.horizon())));
    }
    Ok(())
}

/// `Z̄_t` over the first `K` individuals.
pub fn z_bar(log: &EventLog, k: usize, t: f64) -> Result<f64> {
    check_block(log, k, t)?;
    Ok(log.block_counts(k, &[t])[0] as f64 / k as f64)
}

/// `𝒰 = [(N/K) Σ_{i≤K} ((Z^i_t - Z̄_t)/Z̄_t)² - N/Z̄_t] · 1{Z̄_t > 0}`.
pub fn u_stat(log: &EventLog, k: usize, t: f64) -> Result<f64> {
    let zb = z_bar(log, k, t)?;
    if !(zb > 0.0) {
        return Ok(0.0);
    }
    let n = log.n() as f64;
    let ss: f64 = (0..k)
        .map(|i| {
            let d = (log.count_unchecked(i, t) as f64 - zb) / zb;
            d * d
        })
        .sum();
    Ok(n / k as f64 * ss - n / zb)
}

/// `𝒫 = 1/(𝒰 + 1) · 1{𝒰 ≥ 0}`.
pub fn p_stat(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (u + 1.0)
    } else {
        0.0
    }
}

/// Limit variance `2 α₀⁴ p² / μ²` of `(e^{α₀ t}√K/N)(𝒫_t - p)`.
pub fn asymptotic_variance_super(mu: f64, p: f64, b: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::Domain(format!("μ must be positive, got {mu}")));
    }
    if !(p > b) {
        return Err(Error::Assumption(format!("need p > b, got p = {p}, b = {b}")));
    }
    let a = p - b;
    Ok(2.0 * a.powi(4) * p * p / (mu * mu))
}

/// Least-squares slope of `log Z̄_s` over `s` in `[3t/4, t]`.
///
/// Not part of the estimator; used to report a growth rate when the true
/// `α₀` is unknown.
pub fn fit_growth_rate(log: &EventLog, k: usize, t: f64) -> Result<Option<f64>> {
    check_block(log, k, t)?;
    const POINTS: usize = 65;
    let grid: Vec<f64> = (0..POINTS)
        .map(|j| 0.75 * t + 0.25 * t * j as f64 / (POINTS - 1) as f64)
        .collect();
    let counts = log.block_counts(k, &grid);
    let pts: Vec<(f64, f64)> = grid
        .iter()
        .zip(&counts)
        .filter(|(_, &c)| c > 0)
        .map(|(&s, &c)| (s, (c as f64 / k as f64).ln()))
        .collect();
    if pts.len() < 2 {
        return Ok(None);
    }
    let m = pts.len() as f64;
    let sx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let sy = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - sx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - sx) * (p.1 - sy)).sum();
    Ok((sxx > 0.0).then(|| sxy / sxx))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthSource {
    /// `α₀ = p - b` from known parameters.
    Known,
    /// Fitted slope of `log Z̄`.
    Fitted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupercriticalEstimate {
    pub n: usize,
    pub k: usize,
    pub t: f64,
    pub z_bar: f64,
    #[serde(rename = "u")]
    pub u_stat: f64,
    #[serde(rename = "p")]
    pub p_stat: f64,
    pub alpha0_used: Option<f64>,
    pub alpha0_source: GrowthSource,
}

/// Computes `Z̄`, `𝒰`, `𝒫`; `alpha0` is reported as given or fitted.
pub fn estimate(log: &EventLog, k: usize, t: f64, alpha0: Option<f64>) -> Result<SupercriticalEstimate> {
    let zb = z_bar(log, k, t)?;
    let u = u_stat(log, k, t)?;
    let (alpha0_used, alpha0_source) = match alpha0 {
        Some(a) => (Some(a), GrowthSource::Known),
        None => (fit_growth_rate(log, k, t)?, GrowthSource::Fitted),
    };
    Ok(SupercriticalEstimate {
        n: log.n(),
        k,
        t,
        z_bar: zb,
        u_stat: u,
        p_stat: p_stat(u),
        alpha0_used,
        alpha0_source,
    })
}
