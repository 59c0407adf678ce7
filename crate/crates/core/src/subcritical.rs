//! Estimators of `(μ, Λ, p)` from the first `K` counting processes in the
//! subcritical regime `Λp < 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::EventLog;
use crate::stats::normal_quantile;

/// Default dominance factor of the regime classifier.
pub const DEFAULT_DOMINANCE: f64 = 5.0;

/// `Δ_t = t / (2 ⌊t^{1 - 4/(q+1)}⌋)`.
pub fn delta_rule(t: f64, q: f64) -> Result<f64> {
    Ok(t / (2 * bins_half(t, q)?) as f64)
}

/// `⌊t^{1 - 4/(q+1)}⌋`, the number of `2Δ` bins in `(t, 2t]`.
pub fn bins_half(t: f64, q: f64) -> Result<u64> {
    if !(q > 3.0) {
        return Err(Error::Assumption(format!("q must exceed 3, got {q}")));
    }
    if !t.is_finite() {
        return Err(Error::Domain(format!("t must be finite, got {t}")));
    }
    if !(t >= 4.0) {
        return Err(Error::HorizonTooShort(format!("t = {t} is below 4")));
    }
    let x = t.powf(1.0 - 4.0 / (q + 1.0));
    // Exact integers can land a hair below themselves after powf.
    let r = x.round();
    let fl = if (x - r).abs() <= 1e-9 * r.max(1.0) { r } else { x.floor() };
    if fl < 1.0 {
        return Err(Error::HorizonTooShort(format!(
            "t = {t} gives t^(1-4/(q+1)) = {x:.4} < 1 for q = {q}"
        )));
    }
    Ok(fl as u64)
}

fn check_block(log: &EventLog, k: usize, t: f64) -> Result<()> {
    if k == 0 || k > log.n() {
        return Err(Error::Domain(format!("K must lie in 1..={}, got {k}", log.n())));
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::Domain(format!("t must be positive, got {t}")));
    }
    if log.horizon() < 2.0 * t {
        return Err(Error::HorizonTooShort(format!(
            "horizon {} is shorter than 2t = {}",
            log.horizon(),
            2.0 * t
        )));
    }
    Ok(())
}

/// Number of `Δ` bins in `(t, 2t]`, checked to be a positive integer.
fn grid_bins(t: f64, delta: f64, need_even: bool) -> Result<u64> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::InvalidGrid(format!("Δ must be positive, got {delta}")));
    }
    let m = t / delta;
    let r = m.round();
    if r < 1.0 || (m - r).abs() > 1e-9 * r {
        return Err(Error::InvalidGrid(format!("t/Δ = {m} is not a positive integer")));
    }
    let r = r as u64;
    if need_even && r % 2 != 0 {
        return Err(Error::InvalidGrid(format!("t/(2Δ) = {m}/2 is not an integer")));
    }
    Ok(r)
}

/// Point `aΔ` of the grid with `m` bins on `(t, 2t]`, for `a` in `m..=2m`.
fn grid_point(t: f64, m: u64, a: u64) -> f64 {
    if a == m {
        t
    } else if a == 2 * m {
        2.0 * t
    } else {
        t * a as f64 / m as f64
    }
}

/// `Σ_{i<K} Z^i` on the grid `t·a/m`, `a = m..=2m`.
fn grid_counts(log: &EventLog, k: usize, t: f64, m: u64) -> Vec<u64> {
    let grid: Vec<f64> = (m..=2 * m).map(|a| grid_point(t, m, a)).collect();
    log.block_counts(k, &grid)
}

/// `ε = (Z̄_{2t} - Z̄_t) / t`.
pub fn epsilon_stat(log: &EventLog, k: usize, t: f64) -> Result<f64> {
    check_block(log, k, t)?;
    let c = grid_counts(log, k, t, 1);
    Ok((c[1] - c[0]) as f64 / (k as f64 * t))
}

/// `𝒱 = (N/K) Σ_{i≤K} ((Z^i_{2t} - Z^i_t)/t - ε)² - (N/t) ε`.
pub fn v_stat(log: &EventLog, k: usize, t: f64) -> Result<f64> {
    check_block(log, k, t)?;
    let eps = epsilon_stat(log, k, t)?;
    let n = log.n() as f64;
    let ss: f64 = (0..k)
        .map(|i| {
            let d = (log.count_unchecked(i, 2.0 * t) - log.count_unchecked(i, t)) as f64 / t - eps;
            d * d
        })
        .sum();
    Ok(n / k as f64 * ss - n / t * eps)
}

fn z_from_counts(counts: &[u64], n: usize, k: usize, t: f64, m: u64, stride: usize, eps: f64) -> f64 {
    let kf = k as f64;
    let width = t / m as f64 * stride as f64;
    let ss: f64 = counts
        .iter()
        .step_by(stride)
        .collect::<Vec<_>>()
        .windows(2)
        .map(|w| {
            let d = (w[1] - w[0]) as f64 / kf - width * eps;
            d * d
        })
        .sum();
    n as f64 / t * ss
}

/// `𝒵_Δ = (N/t) Σ_{a=t/Δ+1}^{2t/Δ} (Z̄_{aΔ} - Z̄_{(a-1)Δ} - Δ ε)²`.
pub fn z_delta_stat(log: &EventLog, k: usize, t: f64, delta: f64) -> Result<f64> {
    check_block(log, k, t)?;
    let m = grid_bins(t, delta, false)?;
    let counts = grid_counts(log, k, t, m);
    let eps = (counts[m as usize] - counts[0]) as f64 / (k as f64 * t);
    Ok(z_from_counts(&counts, log.n(), k, t, m, 1, eps))
}

/// The `𝒵` statistics on the `Δ` and `2Δ` grids and what they combine into.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XStat {
    pub z_delta: f64,
    pub z_2delta: f64,
    /// `𝒲 = 2 𝒵_{2Δ} - 𝒵_Δ`.
    pub w: f64,
    /// `𝒳 = 𝒲 - ((N-K)/K) ε`.
    pub x: f64,
}

pub fn x_stat(log: &EventLog, k: usize, t: f64, delta: f64) -> Result<XStat> {
    check_block(log, k, t)?;
    let m = grid_bins(t, delta, true)?;
    let counts = grid_counts(log, k, t, m);
    let eps = (counts[m as usize] - counts[0]) as f64 / (k as f64 * t);
    let z_delta = z_from_counts(&counts, log.n(), k, t, m, 1, eps);
    let z_2delta = z_from_counts(&counts, log.n(), k, t, m, 2, eps);
    let w = 2.0 * z_2delta - z_delta;
    let n = log.n() as f64;
    let kf = k as f64;
    Ok(XStat {
        z_delta,
        z_2delta,
        w,
        x: w - (n - kf) / kf * eps,
    })
}

/// Estimate of `p`: `u²(1-√(u/w))² / (v + u²(1-√(u/w))²)` on `u, v, w > 0`, else 0.
pub fn psi3(u: f64, v: f64, w: f64) -> f64 {
    if u > 0.0 && v > 0.0 && w > 0.0 {
        let f = u * (1.0 - (u / w).sqrt());
        let f2 = f * f;
        f2 / (v + f2)
    } else {
        0.0
    }
}

/// Estimate of `μ`: `u √(u/w)` on `u > 0, v > 0, w > u`, else 0.
pub fn psi1(u: f64, v: f64, w: f64) -> f64 {
    if u > 0.0 && v > 0.0 && w > u {
        u * (u / w).sqrt()
    } else {
        0.0
    }
}

/// Estimate of `Λ`: `(v + (u - Ψ¹)²) / (u (u - Ψ¹))` on `u > 0, v > 0, w > u`, else 0.
pub fn psi2(u: f64, v: f64, w: f64) -> f64 {
    if u > 0.0 && v > 0.0 && w > u {
        let d = u - psi1(u, v, w);
        (v + d * d) / (u * d)
    } else {
        0.0
    }
}

/// The three asymptotic regimes for the error of `p̂`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// Graph fluctuations dominate, rate `1/√K`.
    I,
    /// Time fluctuations of `𝒱` dominate, rate `N/(t√K)`.
    II,
    /// Fluctuations of `𝒳` dominate, rate `(N/K)√(Δ/t)`.
    III,
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I" | "i" | "1" => Ok(Regime::I),
            "II" | "ii" | "2" => Ok(Regime::II),
            "III" | "iii" | "3" => Ok(Regime::III),
            _ => Err(Error::parse("regime", format!("expected I, II or III, got {s:?}"))),
        }
    }
}

/// Limit variance of the normalised error of `p̂`, as printed and as
/// recomputed by propagating the component limits through `∇Ψ³`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticVariance {
    pub regime: Regime,
    pub paper_literal: f64,
    pub delta_method: f64,
}

/// `∂Ψ³/∂v` at the fixed point `C(μ, Λ, p)`.
pub fn dpsi3_dv(mu: f64, lambda: f64, p: f64) -> f64 {
    -(1.0 - lambda * p).powi(2) / (mu * mu * lambda * lambda)
}

/// `∂Ψ³/∂w` at the fixed point `C(μ, Λ, p)`.
pub fn dpsi3_dw(mu: f64, lambda: f64, p: f64) -> f64 {
    (1.0 - lambda * p).powi(4) * (1.0 - p) / (mu * lambda)
}

/// Limit variance of `√K (𝒱_∞ - Λ²p(1-p)/(1-Λp)²)`.
pub fn graph_v_variance(lambda: f64, p: f64) -> f64 {
    (lambda * lambda * p * (1.0 - p) / (1.0 - lambda * p).powi(2)).powi(2)
}

/// Limit variance of `(t√K/N)(𝒱_t - 𝒱_∞)`.
pub fn time_v_variance(mu: f64, lambda: f64, p: f64) -> f64 {
    2.0 * mu * mu / (1.0 - lambda * p).powi(2)
}

/// Limit variance of `(K/N)√(t/Δ)(𝒳 - 𝒳_∞)`.
pub fn x_variance(lambda: f64, p: f64, gamma: f64) -> f64 {
    let a = 1.0 - lambda * p;
    1.5 * ((1.0 - gamma) / a + gamma / a.powi(3)).powi(2)
}

pub fn asymptotic_variance(regime: Regime, mu: f64, lambda: f64, p: f64, gamma: Option<f64>) -> Result<AsymptoticVariance> {
    if !(mu > 0.0 && lambda > 0.0 && (0.0..=1.0).contains(&p)) {
        return Err(Error::Domain(format!("need μ > 0, Λ > 0, p in [0, 1]; got ({mu}, {lambda}, {p})")));
    }
    if !(lambda * p < 1.0) {
        return Err(Error::Assumption(format!("Λp = {} is not below 1", lambda * p)));
    }
    let a = 1.0 - lambda * p;
    let (paper_literal, delta_method) = match regime {
        Regime::I => (
            (p * (1.0 - p)).powi(2) / mu.powi(4),
            dpsi3_dv(mu, lambda, p).powi(2) * mu.powi(4) * graph_v_variance(lambda, p),
        ),
        Regime::II => (
            2.0 * a / (mu * mu * lambda.powi(4)),
            dpsi3_dv(mu, lambda, p).powi(2) * time_v_variance(mu, lambda, p),
        ),
        Regime::III => {
            let g = gamma.ok_or(Error::MissingGamma)?;
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::Domain(format!("γ must lie in [0, 1], got {g}")));
            }
            (
                3.0 * (1.0 - p).powi(2) / (2.0 * mu * mu * lambda * lambda)
                    * ((1.0 - g) * a.powi(3) + g * a).powi(2),
                dpsi3_dw(mu, lambda, p).powi(2) * x_variance(lambda, p, g),
            )
        }
    };
    Ok(AsymptoticVariance {
        regime,
        paper_literal,
        delta_method,
    })
}

/// The three error-rate terms and which one dominates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeDiagnostics {
    /// `1/√K`.
    pub rate_i: f64,
    /// `N/(t√K)`.
    pub rate_ii: f64,
    /// `(N/K)√(Δ/t)`.
    pub rate_iii: f64,
    /// Largest term over the second largest.
    pub dominance: f64,
    pub factor: f64,
    /// `None` when no term dominates by `factor`.
    pub dominant: Option<Regime>,
}

pub fn rate_terms(n: usize, k: usize, t: f64, delta: f64) -> (f64, f64, f64) {
    let (n, k) = (n as f64, k as f64);
    (1.0 / k.sqrt(), n / (t * k.sqrt()), n / k * (delta / t).sqrt())
}

pub fn classify_regime(n: usize, k: usize, t: f64, q: f64, factor: f64) -> Result<RegimeDiagnostics> {
    let delta = delta_rule(t, q)?;
    let (rate_i, rate_ii, rate_iii) = rate_terms(n, k, t, delta);
    let mut terms = [(rate_i, Regime::I), (rate_ii, Regime::II), (rate_iii, Regime::III)];
    terms.sort_by(|a, b| b.0.total_cmp(&a.0));
    let dominance = terms[0].0 / terms[1].0;
    Ok(RegimeDiagnostics {
        rate_i,
        rate_ii,
        rate_iii,
        dominance,
        factor,
        dominant: (dominance >= factor).then_some(terms[0].1),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMode {
    /// The interval exactly as printed.
    PaperLiteral,
    /// Same three-term shape, each term's standard deviation from
    /// [`asymptotic_variance`] evaluated at the estimates with `γ = K/N`.
    DeltaMethod,
}

/// Half-widths of the confidence interval for `p`; `None` where undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub alpha: f64,
    pub mode: CiMode,
    pub halfwidth: Option<f64>,
    pub paper_literal: Option<f64>,
    pub delta_method: Option<f64>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn ci_paper_literal(z: f64, rates: (f64, f64, f64), p: f64, mu: f64, lambda: f64) -> Option<f64> {
    let (r1, r2, r3) = rates;
    if p == 0.0 || mu == 0.0 || lambda == 0.0 || mu > 1.0 {
        return None;
    }
    let t1 = r1 * p * (1.0 - p) / p;
    let t2 = r2 * (2.0 * (1.0 - mu)).sqrt() / (mu * lambda * lambda);
    let t3 = r3 * (3.0 * (1.0 - p).powi(2) / (2.0 * mu * mu * lambda * lambda)).sqrt();
    finite(z * (t1 + t2 + t3))
}

fn ci_delta_method(z: f64, rates: (f64, f64, f64), p: f64, mu: f64, lambda: f64, gamma: f64) -> Option<f64> {
    let (r1, r2, r3) = rates;
    let sd = |r| {
        asymptotic_variance(r, mu, lambda, p, Some(gamma))
            .ok()
            .map(|v| v.delta_method.sqrt())
    };
    finite(z * (r1 * sd(Regime::I)? + r2 * sd(Regime::II)? + r3 * sd(Regime::III)?))
}

/// Everything the subcritical pipeline computes from one log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubcriticalEstimate {
    pub n: usize,
    pub k: usize,
    pub t: f64,
    pub q: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub v_stat: f64,
    pub z_delta: f64,
    pub z_2delta: f64,
    pub w_stat: f64,
    pub x_stat: f64,
    pub p_hat: f64,
    pub mu_hat: f64,
    pub lambda_hat: f64,
    pub ci: ConfidenceInterval,
    pub regime: RegimeDiagnostics,
}

pub fn estimate(log: &EventLog, k: usize, t: f64, q: f64, alpha: f64) -> Result<SubcriticalEstimate> {
    estimate_with(log, k, t, q, alpha, CiMode::DeltaMethod)
}

pub fn estimate_with(log: &EventLog, k: usize, t: f64, q: f64, alpha: f64, mode: CiMode) -> Result<SubcriticalEstimate> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("α must lie in (0, 1), got {alpha}")));
    }
    check_block(log, k, t)?;
    let delta = delta_rule(t, q)?;
    let epsilon = epsilon_stat(log, k, t)?;
    let v = v_stat(log, k, t)?;
    let x = x_stat(log, k, t, delta)?;
    let p_hat = psi3(epsilon, v, x.x);
    let mu_hat = psi1(epsilon, v, x.x);
    let lambda_hat = psi2(epsilon, v, x.x);
    let n = log.n();
    let rates = rate_terms(n, k, t, delta);
    let z = normal_quantile(1.0 - alpha / 2.0);
    let paper_literal = ci_paper_literal(z, rates, p_hat, mu_hat, lambda_hat);
    let delta_method = ci_delta_method(z, rates, p_hat, mu_hat, lambda_hat, k as f64 / n as f64);
    let regime = classify_regime(n, k, t, q, DEFAULT_DOMINANCE)?;
    Ok(SubcriticalEstimate {
        n,
        k,
        t,
        q,
        delta,
        epsilon,
        v_stat: v,
        z_delta: x.z_delta,
        z_2delta: x.z_2delta,
        w_stat: x.w,
        x_stat: x.x,
        p_hat,
        mu_hat,
        lambda_hat,
        ci: ConfidenceInterval {
            alpha,
            mode,
            halfwidth: match mode {
                CiMode::PaperLiteral => paper_literal,
                CiMode::DeltaMethod => delta_method,
            },
            paper_literal,
            delta_method,
        },
        regime,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> EventLog {
        EventLog::new(2.0, vec![vec![0.5, 1.5], vec![1.2]]).unwrap()
    }

    #[test]
    fn delta_rule_examples() {
        assert_eq!(delta_rule(16.0, 7.0).unwrap(), 2.0);
        assert_eq!(delta_rule(100.0, 7.0).unwrap(), 5.0);
        assert!(matches!(delta_rule(1.5, 7.0), Err(Error::HorizonTooShort(_))));
        assert!(delta_rule(100.0, 3.0).is_err());
        for &(t, q) in &[(400.0, 7.0), (40000.0, 5.35), (400.0, 31.0), (1234.5, 9.0)] {
            let d = delta_rule(t, q).unwrap();
            let m = t / (2.0 * d);
            assert!((m - m.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn hand_counted_statistics() {
        let log = toy();
        assert_eq!(epsilon_stat(&log, 2, 1.0).unwrap(), 1.0);
        assert_eq!(v_stat(&log, 2, 1.0).unwrap(), -2.0);
        let one = EventLog::new(4.0, vec![vec![2.5, 3.9]]).unwrap();
        assert_eq!(epsilon_stat(&one, 1, 2.0).unwrap(), 1.0);
        assert_eq!(z_delta_stat(&one, 1, 2.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn empty_log_statistics() {
        let log = EventLog::empty(4, 8.0).unwrap();
        assert_eq!(epsilon_stat(&log, 2, 4.0).unwrap(), 0.0);
        assert_eq!(v_stat(&log, 2, 4.0).unwrap(), 0.0);
        assert_eq!(z_delta_stat(&log, 2, 4.0, 1.0).unwrap(), 0.0);
        assert_eq!(x_stat(&log, 2, 4.0, 1.0).unwrap().x, 0.0);
        let est = estimate(&EventLog::empty(4, 32.0).unwrap(), 2, 16.0, 7.0, 0.1).unwrap();
        assert_eq!(est.p_hat, 0.0);
        assert_eq!(est.ci.halfwidth, None);
        assert_eq!(est.ci.paper_literal, None);
    }

    #[test]
    fn linear_counts_give_zero_z() {
        // one event per unit bin at its midpoint, so Z̄_{aΔ} grows by exactly Δε
        let times: Vec<f64> = (0..8).map(|j| j as f64 + 0.5).collect();
        let log = EventLog::new(8.0, vec![times.clone(), times]).unwrap();
        assert_eq!(z_delta_stat(&log, 2, 4.0, 1.0).unwrap(), 0.0);
        assert_eq!(z_delta_stat(&log, 2, 4.0, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn grid_errors() {
        let log = EventLog::empty(2, 8.0).unwrap();
        assert!(matches!(z_delta_stat(&log, 2, 4.0, 1.5), Err(Error::InvalidGrid(_))));
        // t/Δ = 1 is fine for 𝒵 but x needs an even count
        assert!(z_delta_stat(&log, 2, 4.0, 4.0).is_ok());
        assert!(matches!(x_stat(&log, 2, 4.0, 4.0), Err(Error::InvalidGrid(_))));
        assert!(matches!(epsilon_stat(&log, 2, 5.0), Err(Error::HorizonTooShort(_))));
        assert!(epsilon_stat(&log, 3, 4.0).is_err());
    }

    #[test]
    fn psi_examples() {
        assert_eq!(psi3(2.0, 1.0, 8.0), 0.5);
        assert_eq!(psi3(2.0, 0.0, 8.0), 0.0);
        assert_eq!(psi3(2.0, -1.0, 8.0), 0.0);
        assert_eq!(psi1(2.0, 1.0, 8.0), 1.0);
        assert_eq!(psi2(2.0, 1.0, 8.0), 1.0);
        assert_eq!(psi1(2.0, 1.0, 2.0), 0.0);
        assert_eq!(psi2(2.0, 1.0, 1.0), 0.0);
    }

    #[test]
    fn asymptotic_variance_examples() {
        let v3 = asymptotic_variance(Regime::III, 1.0, 1.0, 0.5, Some(0.5)).unwrap();
        // 0.375 · (0.5·0.125 + 0.5·0.5)²
        assert!((v3.paper_literal - 0.375 * 0.3125f64.powi(2)).abs() < 1e-15);
        assert!((v3.paper_literal - v3.delta_method).abs() < 1e-10);
        let v2 = asymptotic_variance(Regime::II, 1.0, 1.0, 0.5, None).unwrap();
        assert!((v2.delta_method - 0.5).abs() < 1e-15);
        assert!((v2.paper_literal - 1.0).abs() < 1e-15);
        let v1 = asymptotic_variance(Regime::I, 2.0, 0.5, 0.5, None).unwrap();
        assert!((v1.delta_method - 0.0625).abs() < 1e-15);
        assert!((v1.paper_literal - 0.003_906_25).abs() < 1e-15);
        assert!(matches!(
            asymptotic_variance(Regime::III, 1.0, 1.0, 0.5, None),
            Err(Error::MissingGamma)
        ));
        assert!(asymptotic_variance(Regime::I, 1.0, 2.0, 0.5, None).is_err());
    }

    #[test]
    fn classifier_examples() {
        let a = classify_regime(100, 100, 1e4, 7.0, 5.0).unwrap();
        assert!((a.rate_i - 0.1).abs() < 1e-15);
        assert!((a.rate_iii - (0.005f64).sqrt()).abs() < 1e-15);
        assert!((a.rate_ii - 0.001).abs() < 1e-15);
        assert_eq!(a.dominant, None);
        assert_eq!(classify_regime(100, 100, 1e4, 7.0, 1.2).unwrap().dominant, Some(Regime::I));
        let b = classify_regime(10_000, 10_000, 100.0, 7.0, 5.0).unwrap();
        assert!((b.rate_i - 0.01).abs() < 1e-15);
        assert!((b.rate_ii - 1.0).abs() < 1e-15);
        assert!((b.rate_iii - 0.05f64.sqrt()).abs() < 1e-15);
        assert_eq!(b.dominant, None);
        assert_eq!(classify_regime(10_000, 10_000, 100.0, 7.0, 4.0).unwrap().dominant, Some(Regime::II));
        let c = classify_regime(400, 200, 400.0, 7.0, 5.0).unwrap();
        assert_eq!(c.dominant, None);
    }
}
