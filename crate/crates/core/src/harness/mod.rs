//! Replicated Monte Carlo experiments.
//!
//! Each replica draws its graph and its event log from seeds derived from the
//! base seed and the replica index, so a report depends only on its config.
//! Replicas run in parallel on the current rayon pool; results are collected
//! in index order.

mod config;
mod report;

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{self, GraphLimits, InteractionGraph};
use crate::seeds::{self, Stream};
use crate::simulator::{simulate_with, SimOptions};
use crate::stats;
use crate::subcritical::{self, Regime, RegimeDiagnostics};
use crate::supercritical;

pub use config::{ExperimentConfig, Params, Target, Tolerances};
pub use report::{Check, CltSummary, McReport, ReplicaFailure, ReplicaRecord};
pub use subcritical::classify_regime;

/// Per-experiment constants shared by all replicas.
struct Context<'a> {
    cfg: &'a ExperimentConfig,
    lambda: f64,
    /// `Λ²p(1-p)/(1-Λp)²`, the population value of `𝒱_∞`.
    c_v: f64,
    delta: Option<f64>,
    regime: Option<RegimeDiagnostics>,
}

impl<'a> Context<'a> {
    fn new(cfg: &'a ExperimentConfig) -> Result<Self> {
        let p = &cfg.params;
        let lambda = p.lambda();
        let lp = lambda * p.p;
        let sub = matches!(
            cfg.target,
            Target::SubConsistency | Target::SubCltRegime(_) | Target::PZeroProp
        );
        let (delta, regime) = if sub {
            let t = p.horizon_t()?;
            (
                Some(subcritical::delta_rule(t, p.q)?),
                Some(classify_regime(p.n, p.k, t, p.q, cfg.dominance_factor)?),
            )
        } else {
            (None, None)
        };
        Ok(Context {
            cfg,
            lambda,
            c_v: lambda * lambda * p.p * (1.0 - p.p) / ((1.0 - lp) * (1.0 - lp)),
            delta,
            regime,
        })
    }

    fn sim_options(&self) -> SimOptions {
        let p = &self.cfg.params;
        SimOptions {
            event_budget: self.cfg.event_budget,
            observed: (p.k < p.n).then_some(p.k),
        }
    }

    /// `[N/(t√K)] / [(N/K)√(Δ/t)]²`, which decides the p = 0 case.
    fn p_zero_ratio(&self) -> f64 {
        let r = self.regime.expect("subcritical target");
        r.rate_ii / (r.rate_iii * r.rate_iii)
    }

    fn replica(&self, index: usize) -> (u64, Option<u64>, Result<(BTreeMap<String, f64>, u64)>) {
        let cfg = self.cfg;
        let graph_seed = seeds::derive(cfg.seed, index as u64, Stream::Graph);
        let sim_seed = cfg
            .target
            .simulates()
            .then(|| seeds::derive(cfg.seed, index as u64, Stream::Simulation));
        let out = InteractionGraph::sample(cfg.params.n, cfg.params.p, graph_seed)
            .and_then(|g| self.replica_values(&g, sim_seed));
        (graph_seed, sim_seed, out)
    }

    fn replica_values(&self, g: &InteractionGraph, sim_seed: Option<u64>) -> Result<(BTreeMap<String, f64>, u64)> {
        let p = &self.cfg.params;
        let (n, k) = (p.n as f64, p.k as f64);
        let mut v = BTreeMap::new();
        let mut put = |key: &str, x: f64| {
            v.insert(key.to_string(), x);
        };
        let mut events = 0;
        match self.cfg.target {
            Target::GraphVInfClt => {
                let v_inf = graph::v_infinity(g, self.lambda, p.k)?;
                put("v_inf", v_inf);
                put("z", k.sqrt() * (v_inf - self.c_v));
            }
            Target::GraphUInf => {
                let pd = graph::perron_data(g, p.kernel.decay_rate().unwrap_or(0.0))?;
                let u = graph::u_infinity_from_perron(&pd.v, p.k);
                put("u_inf", u);
                put("plugin", 1.0 / (u + 1.0));
                put("rho", pd.rho);
            }
            Target::SubConsistency | Target::SubCltRegime(_) | Target::PZeroProp => {
                let t = p.horizon_t()?;
                let seed = sim_seed.expect("simulated target");
                let log = simulate_with(g, &p.kernel, p.mu, 2.0 * t, seed, &self.sim_options())?;
                events = log.total_events();
                let est = subcritical::estimate(&log, p.k, t, p.q, p.alpha)?;
                put("p_hat", est.p_hat);
                put("mu_hat", est.mu_hat);
                put("lambda_hat", est.lambda_hat);
                put("epsilon", est.epsilon);
                put("v_stat", est.v_stat);
                put("x_stat", est.x_stat);
                if let Some(h) = est.ci.halfwidth {
                    put("ci_halfwidth", h);
                    put("ci_covers", f64::from(u8::from((est.p_hat - p.p).abs() <= h)));
                }
                if let Target::SubCltRegime(r) = self.cfg.target {
                    let lim = GraphLimits::subcritical(g, self.lambda, p.mu, p.k)?;
                    let delta = self.delta.expect("subcritical target");
                    let mu2 = p.mu * p.mu;
                    put("v_inf", lim.v_inf);
                    put("x_inf", lim.x_inf);
                    let component = match r {
                        Regime::I => k.sqrt() * (est.v_stat - mu2 * self.c_v),
                        Regime::II => t * k.sqrt() / n * (est.v_stat - mu2 * lim.v_inf),
                        Regime::III => k / n * (t / delta).sqrt() * (est.x_stat - lim.x_inf),
                    };
                    put("z_component", component);
                    let reg = self.regime.expect("subcritical target");
                    let rate = match r {
                        Regime::I => reg.rate_i,
                        Regime::II => reg.rate_ii,
                        Regime::III => reg.rate_iii,
                    };
                    put("z_p_hat", (est.p_hat - p.p) / rate);
                }
            }
            Target::SuperConsistency | Target::SuperClt => {
                let t = p.horizon_t()?;
                let b = p.kernel.decay_rate().expect("validated exponential kernel");
                let alpha0 = p.p - b;
                let seed = sim_seed.expect("simulated target");
                let log = simulate_with(g, &p.kernel, p.mu, t, seed, &self.sim_options())?;
                events = log.total_events();
                let est = supercritical::estimate(&log, p.k, t, Some(alpha0))?;
                put("z_bar", est.z_bar);
                put("u", est.u_stat);
                put("p_stat", est.p_stat);
                if self.cfg.target == Target::SuperClt {
                    let scale = (alpha0 * t).exp() * k.sqrt() / n;
                    put("z", scale * (est.p_stat - p.p));
                    let pd = graph::perron_data(g, b)?;
                    let u_inf = graph::u_infinity_from_perron(&pd.v, p.k);
                    let plugin = 1.0 / (u_inf + 1.0);
                    put("u_inf", u_inf);
                    put("plugin", plugin);
                    put("z_graph_centred", scale * (est.p_stat - plugin));
                    put("z_graph_part", scale * (plugin - p.p));
                    put("alpha_n", pd.alpha_n);
                }
            }
        }
        Ok((v, events))
    }
}

fn median_abs_dev(xs: &[f64], center: f64) -> f64 {
    let d: Vec<f64> = xs.iter().map(|x| (x - center).abs()).collect();
    stats::median(&d)
}

fn clt_checks(s: &CltSummary, band: f64, ks_level: f64, checks: &mut Vec<Check>) {
    let prefix = &s.name;
    checks.push(Check::within(
        &format!("{prefix}.variance_ratio"),
        s.variance_ratio,
        1.0 - band,
        1.0 + band,
    ));
    checks.push(Check {
        name: format!("{prefix}.ks_p_value"),
        passed: s.ks.p_value > ks_level,
        value: s.ks.p_value,
        bound: format!("> {ks_level}"),
    });
    let sd_of_mean = (s.theory_delta_method / s.samples as f64).sqrt();
    checks.push(Check::at_most(
        &format!("{prefix}.mean_abs_over_sd"),
        s.mean.abs() / sd_of_mean,
        4.0,
    ));
}

/// Runs every replica of `cfg` and evaluates the target's checks.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<McReport> {
    cfg.validate()?;
    let start = Instant::now();
    let ctx = Context::new(cfg)?;
    let tol = &cfg.tolerances;
    if cfg.target == Target::PZeroProp {
        let ratio = ctx.p_zero_ratio();
        if ratio < cfg.dominance_factor && ratio > 1.0 / cfg.dominance_factor {
            return Err(Error::Config(format!(
                "p = 0 case ratio {ratio:.3} is within a factor {} of 1; neither case applies",
                cfg.dominance_factor
            )));
        }
    }

    let outcomes: Vec<_> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| (r, ctx.replica(r)))
        .collect();
    let mut replicas = Vec::new();
    let mut failures = Vec::new();
    for (index, (graph_seed, sim_seed, out)) in outcomes {
        match out {
            Ok((values, events)) => replicas.push(ReplicaRecord {
                index,
                graph_seed,
                sim_seed,
                values,
                events,
            }),
            Err(e) => failures.push(ReplicaFailure {
                index,
                graph_seed,
                sim_seed,
                error: e.to_string(),
            }),
        }
    }
    let events_total = replicas.iter().map(|r| r.events).sum();
    let mut report = McReport {
        config: cfg.clone(),
        replicas,
        failures,
        regime: ctx.regime,
        clt: Vec::new(),
        checks: Vec::new(),
        diagnostics: BTreeMap::new(),
        passed: false,
        events_total,
        wall_clock_secs: None,
    };
    let quota = (tol.failure_quota * cfg.replicas as f64).floor();
    report
        .checks
        .push(Check::at_most("failures", report.failures.len() as f64, quota));
    if report.replicas.len() >= 2 {
        evaluate(&ctx, &mut report)?;
    } else {
        report.checks.push(Check::at_least("successful_replicas", report.replicas.len() as f64, 2.0));
    }
    report.passed = report.checks.iter().all(|c| c.passed);
    report.wall_clock_secs = Some(start.elapsed().as_secs_f64());
    Ok(report)
}

fn evaluate(ctx: &Context, report: &mut McReport) -> Result<()> {
    let cfg = ctx.cfg;
    let p = &cfg.params;
    let tol = &cfg.tolerances;
    let band = tol.variance_band_for(cfg.target);
    let mut checks = Vec::new();
    let mut diag = BTreeMap::new();
    let mut clt = Vec::new();
    let r = report.replicas.len();
    match cfg.target {
        Target::GraphVInfClt => {
            let theory = subcritical::graph_v_variance(ctx.lambda, p.p);
            let s = CltSummary::new(
                "v_inf",
                "sqrt(K)·(V_inf - Λ²p(1-p)/(1-Λp)²), population centring",
                &report.values("z"),
                theory,
                theory,
                true,
            );
            clt_checks(&s, band, tol.ks_level, &mut checks);
            diag.insert("mean_v_inf".into(), stats::mean(&report.values("v_inf")));
            diag.insert("v_inf_population".into(), ctx.c_v);
            clt.push(s);
        }
        Target::GraphUInf => {
            let u = report.values("u_inf");
            let plug = report.values("plugin");
            let target_u = 1.0 / p.p - 1.0;
            checks.push(Check::at_most(
                "mean_u_inf_abs_error",
                (stats::mean(&u) - target_u).abs(),
                tol.u_abs,
            ));
            checks.push(Check::at_most(
                "mean_plugin_abs_error",
                (stats::mean(&plug) - p.p).abs(),
                tol.plugin_abs,
            ));
            diag.insert("mean_u_inf".into(), stats::mean(&u));
            diag.insert("mean_plugin".into(), stats::mean(&plug));
            diag.insert("mean_rho".into(), stats::mean(&report.values("rho")));
        }
        Target::SubConsistency => {
            let ph = report.values("p_hat");
            let mh = report.values("mu_hat");
            let lh = report.values("lambda_hat");
            checks.push(Check::at_most("median_abs_p_hat_error", median_abs_dev(&ph, p.p), tol.p_abs));
            checks.push(Check::at_most("median_abs_mu_hat_error", median_abs_dev(&mh, p.mu), tol.mu_abs));
            checks.push(Check::at_most(
                "median_abs_lambda_hat_error",
                median_abs_dev(&lh, ctx.lambda),
                tol.lambda_abs,
            ));
            diag.insert("median_p_hat".into(), stats::median(&ph));
            diag.insert("median_mu_hat".into(), stats::median(&mh));
            diag.insert("median_lambda_hat".into(), stats::median(&lh));
            let covers = report.values("ci_covers");
            if !covers.is_empty() {
                diag.insert("ci_coverage".into(), stats::mean(&covers));
            }
        }
        Target::SubCltRegime(regime) => {
            let gamma = p.gamma_or_ratio();
            let (name, normalization, theory) = match regime {
                Regime::I => (
                    "v_t_regime_i",
                    "sqrt(K)·(V_t - μ²Λ²p(1-p)/(1-Λp)²), population centring",
                    p.mu.powi(4) * subcritical::graph_v_variance(ctx.lambda, p.p),
                ),
                Regime::II => (
                    "v_t_regime_ii",
                    "(t·sqrt(K)/N)·(V_t - μ²·V_inf), per-replica matrix centring",
                    subcritical::time_v_variance(p.mu, ctx.lambda, p.p),
                ),
                Regime::III => (
                    "x_regime_iii",
                    "(K/N)·sqrt(t/Δ)·(X - X_inf), per-replica matrix centring",
                    subcritical::x_variance(ctx.lambda, p.p, gamma),
                ),
            };
            let s = CltSummary::new(name, normalization, &report.values("z_component"), theory, theory, true);
            clt_checks(&s, band, tol.ks_level, &mut checks);
            clt.push(s);

            let reg = ctx.regime.expect("subcritical target");
            let asserted = reg.dominant == Some(regime);
            let av = subcritical::asymptotic_variance(regime, p.mu, ctx.lambda, p.p, Some(gamma))?;
            let s = CltSummary::new(
                "p_hat",
                "(p_hat - p) / dominant rate term",
                &report.values("z_p_hat"),
                av.paper_literal,
                av.delta_method,
                asserted,
            );
            if asserted {
                clt_checks(&s, band, tol.ks_level, &mut checks);
            }
            clt.push(s);
            diag.insert("p_hat_clt_asserted".into(), f64::from(u8::from(asserted)));
            diag.insert("dominance".into(), reg.dominance);
            diag.insert("median_p_hat".into(), stats::median(&report.values("p_hat")));
        }
        Target::SuperConsistency | Target::SuperClt => {
            let ps = report.values("p_stat");
            let us = report.values("u");
            checks.push(Check::at_most("median_abs_p_error", median_abs_dev(&ps, p.p), tol.p_abs));
            let u_target = 1.0 / p.p - 1.0;
            if cfg.target == Target::SuperConsistency {
                checks.push(Check::at_most("median_abs_u_error", median_abs_dev(&us, u_target), tol.u_abs));
            }
            diag.insert("median_p_stat".into(), stats::median(&ps));
            diag.insert("median_u".into(), stats::median(&us));
            if cfg.target == Target::SuperClt {
                let b = p.kernel.decay_rate().expect("validated exponential kernel");
                let theory = supercritical::asymptotic_variance_super(p.mu, p.p, b)?;
                let s = CltSummary::new(
                    "p_stat",
                    "exp(α₀t)·sqrt(K)/N·(P_t - p), population centring",
                    &report.values("z"),
                    theory,
                    theory,
                    true,
                );
                clt_checks(&s, band, tol.ks_level, &mut checks);
                clt.push(s);
                // Same scaling, centred at each replica's graph plug-in; shows
                // how much of the spread is the graph's rather than the process's.
                clt.push(CltSummary::new(
                    "p_stat_graph_centred",
                    "exp(α₀t)·sqrt(K)/N·(P_t - 1/(U_inf + 1)), per-replica matrix centring",
                    &report.values("z_graph_centred"),
                    theory,
                    theory,
                    false,
                ));
                diag.insert("variance_graph_part".into(), stats::variance(&report.values("z_graph_part")));
                diag.insert("mean_plugin_u_inf".into(), stats::mean(&report.values("plugin")));
                diag.insert("mean_alpha_n".into(), stats::mean(&report.values("alpha_n")));
            }
        }
        Target::PZeroProp => {
            let ph = report.values("p_hat");
            let ratio = ctx.p_zero_ratio();
            diag.insert("case_ratio".into(), ratio);
            let freq = ph.iter().filter(|&&x| x > 0.5).count() as f64 / r as f64;
            diag.insert("frequency_p_hat_above_half".into(), freq);
            diag.insert("median_p_hat".into(), stats::median(&ph));
            if ratio >= cfg.dominance_factor {
                diag.insert("case".into(), 1.0);
                checks.push(Check::at_most("median_p_hat", stats::median(&ph), tol.p_zero_median));
            } else {
                diag.insert("case".into(), 2.0);
                let (lo, hi) = tol.p_zero_band;
                checks.push(Check::within("frequency_p_hat_above_half", freq, lo, hi));
            }
        }
    }
    report.checks.extend(checks);
    report.diagnostics = diag;
    report.clt = clt;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;

    fn params(n: usize, k: usize, t: Option<f64>, p: f64) -> Params {
        Params {
            n,
            k,
            t,
            q: 7.0,
            mu: 1.0,
            kernel: KernelSpec::exponential(1.0).unwrap(),
            p,
            gamma: None,
            alpha: 0.1,
        }
    }

    #[test]
    fn graph_target_runs_and_is_deterministic() {
        let cfg = ExperimentConfig::new(Target::GraphVInfClt, params(60, 30, None, 0.5), 20, 11);
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.replicas.len(), 20);
        assert_eq!(a.to_json_without_timing().unwrap(), b.to_json_without_timing().unwrap());
        assert!(a.check("v_inf.variance_ratio").is_some());
        let seeds: std::collections::HashSet<u64> = a.replicas.iter().map(|r| r.graph_seed).collect();
        assert_eq!(seeds.len(), 20);
    }

    #[test]
    fn budget_failures_are_recorded() {
        let mut cfg = ExperimentConfig::new(Target::SubConsistency, params(20, 10, Some(16.0), 0.5), 4, 2);
        cfg.event_budget = 10;
        let rep = run_experiment(&cfg).unwrap();
        assert_eq!(rep.failures.len(), 4);
        assert!(!rep.passed);
        assert!(!rep.check("failures").unwrap().passed);
    }

    #[test]
    fn mixed_p_zero_config_is_rejected() {
        // N = K = 100, t = 100, q = 7: Δ = 5, ratio = 0.1 / 0.05 = 2.
        let cfg = ExperimentConfig::new(Target::PZeroProp, params(100, 100, Some(100.0), 0.0), 2, 1);
        assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
    }
}
