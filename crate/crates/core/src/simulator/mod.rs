//! Exact simulation of the interacting Hawkes system and its mean trajectory.
//!
//! Both kernels are simulated event by event on the superposition of all
//! individuals. The total intensity `Σ_i λ_i = |S| μ + Σ_j (c_j/N) H_j(t)`,
//! where `c_j` counts the individuals `j` influences and `H_j` is the
//! `φ`-weighted history of `j`, is what the next event time is drawn
//! against. The individual that jumps is then chosen in two stages: a parent
//! `j` in proportion to `c_j H_j` (or the baseline), then a uniformly random
//! child of `j`. A Fenwick tree over parents makes each event `O(log N)`.

mod expected;
mod fenwick;
mod log;

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::InteractionGraph;
use crate::kernel::{KernelFamily, KernelSpec};
use crate::seeds;
use fenwick::Fenwick;

pub use expected::{expected_counts, expected_counts_ode};
pub use log::{EventLog, SimMeta};

/// Weights are rescaled once the stored excitation grows by this factor.
const REBASE_EXPONENT: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Maximum number of events before the run is aborted.
    pub event_budget: u64,
    /// Simulate only individuals `0..K` and everything upstream of them.
    ///
    /// The law of the first `K` counting processes is unchanged; the others
    /// are left empty.
    pub observed: Option<usize>,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            event_budget: 10_000_000,
            observed: None,
        }
    }
}

/// Simulates on `[0, horizon]` with default options.
pub fn simulate(g: &InteractionGraph, kernel: &KernelSpec, mu: f64, horizon: f64, seed: u64) -> Result<EventLog> {
    simulate_with(g, kernel, mu, horizon, seed, &SimOptions::default())
}

pub fn simulate_with(
    g: &InteractionGraph,
    kernel: &KernelSpec,
    mu: f64,
    horizon: f64,
    seed: u64,
    opts: &SimOptions,
) -> Result<EventLog> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::Domain(format!("μ must be positive, got {mu}")));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
    }
    if let Some(k) = opts.observed {
        if k == 0 || k > g.n() {
            return Err(Error::Domain(format!("observed block must lie in 1..={}, got {k}", g.n())));
        }
    }
    if !kernel.is_exponential() {
        g.check_subcritical(kernel.lambda())?;
    }
    let net = Network::new(g, opts.observed);
    let mut state = Run {
        net: &net,
        mu,
        horizon,
        budget: opts.event_budget,
        rng: seeds::rng(seed),
        events: vec![Vec::new(); g.n()],
        count: 0,
    };
    let result = match kernel.family() {
        KernelFamily::Exponential { b } => state.exponential(b),
        KernelFamily::UniformIndicator { a } => state.uniform(a),
    };
    let meta = SimMeta {
        n: g.n(),
        horizon,
        mu,
        kernel: *kernel,
        p: g.p(),
        graph_seed: g.seed(),
        sim_seed: seed,
        observed: opts.observed,
        total_events: state.count,
    };
    match result {
        Ok(()) => Ok(EventLog::from_parts_unchecked(horizon, state.events, Some(meta))),
        Err(time) => {
            let partial = EventLog::from_parts_unchecked(time, state.events, Some(SimMeta { horizon: time, ..meta }));
            Err(Error::BudgetExceeded {
                cap: opts.event_budget,
                time,
                partial: Box::new(partial),
            })
        }
    }
}

/// The simulated individuals and, for each, who they influence.
struct Network {
    n: usize,
    active: Vec<u32>,
    children: Vec<Vec<u32>>,
}

impl Network {
    fn new(g: &InteractionGraph, observed: Option<usize>) -> Self {
        let n = g.n();
        let mut in_set = vec![observed.is_none(); n];
        let mut active: Vec<u32> = Vec::new();
        match observed {
            None => active.extend(0..n as u32),
            Some(k) => {
                // Ancestor closure of the observed block.
                for i in 0..k {
                    in_set[i] = true;
                    active.push(i as u32);
                }
                let mut head = 0;
                while head < active.len() {
                    let i = active[head] as usize;
                    head += 1;
                    for j in g.influencers(i) {
                        if !in_set[j] {
                            in_set[j] = true;
                            active.push(j as u32);
                        }
                    }
                }
                active.sort_unstable();
            }
        }
        let mut children = vec![Vec::new(); n];
        for &i in &active {
            for j in g.influencers(i as usize) {
                children[j].push(i);
            }
        }
        Network { n, active, children }
    }
}

struct Run<'a> {
    net: &'a Network,
    mu: f64,
    horizon: f64,
    budget: u64,
    rng: rand_chacha::ChaCha8Rng,
    events: Vec<Vec<f64>>,
    count: u64,
}

impl Run<'_> {
    fn baseline_pick(&self, u: f64) -> usize {
        let a = &self.net.active;
        a[((u / self.mu) as usize).min(a.len() - 1)] as usize
    }

    /// A parent with at least one child near the Fenwick search result.
    fn parent_with_children(&self, mut j: usize) -> usize {
        let n = self.net.n;
        while self.net.children[j].is_empty() {
            j = if j == 0 { n - 1 } else { j - 1 };
        }
        j
    }

    fn child_of(&mut self, j: usize) -> usize {
        let ch = &self.net.children[j];
        ch[self.rng.random_range(0..ch.len())] as usize
    }

    /// Records a jump; `Err` carries the time at which the budget ran out.
    fn record(&mut self, i: usize, t: f64) -> Result<(), f64> {
        if self.count >= self.budget {
            return Err(t);
        }
        self.events[i].push(t);
        self.count += 1;
        Ok(())
    }

    fn exponential(&mut self, b: f64) -> Result<(), f64> {
        let net = self.net;
        let n = net.n as f64;
        let base = net.active.len() as f64 * self.mu;
        let mut weights = vec![0.0; net.n];
        let mut fen = Fenwick::new(net.n);
        // Excitation is stored relative to `t_ref`: true value = stored · e^{-b(t - t_ref)}.
        let mut stored_total = 0.0;
        let mut t_ref = 0.0;
        let mut t = 0.0;
        loop {
            let bound = base + stored_total * (-b * (t - t_ref)).exp();
            let e: f64 = self.rng.sample(Exp1);
            t += e / bound;
            if t > self.horizon {
                return Ok(());
            }
            let decay = (-b * (t - t_ref)).exp();
            let excitation = stored_total * decay;
            let u = self.rng.random::<f64>() * bound;
            let i = if u < base {
                self.baseline_pick(u)
            } else if u < base + excitation {
                let j = self.parent_with_children(fen.search((u - base) / decay));
                self.child_of(j)
            } else {
                continue;
            };
            self.record(i, t)?;
            let c = net.children[i].len();
            if c > 0 {
                if b * (t - t_ref) > REBASE_EXPONENT {
                    for w in weights.iter_mut() {
                        *w *= decay;
                    }
                    fen = Fenwick::from_weights(&weights);
                    stored_total = weights.iter().sum();
                    t_ref = t;
                }
                let w = c as f64 / n * (b * (t - t_ref)).exp();
                weights[i] += w;
                fen.add(i, w);
                stored_total += w;
            }
        }
    }

    fn uniform(&mut self, a: f64) -> Result<(), f64> {
        let net = self.net;
        let n = net.n as f64;
        let base = net.active.len() as f64 * self.mu;
        let mut fen = Fenwick::new(net.n);
        // Σ_j c_j · (jumps of j in the window), an exact integer.
        let mut weight: u64 = 0;
        let mut window: VecDeque<(f64, u32)> = VecDeque::new();
        let mut t = 0.0;
        loop {
            let rate = base + weight as f64 / n;
            let e: f64 = self.rng.sample(Exp1);
            let candidate = t + e / rate;
            if let Some(&(s, j)) = window.front() {
                let expiry = s + a;
                if candidate > expiry && expiry <= self.horizon {
                    // Memorylessness lets the draw restart from the expiry.
                    t = expiry;
                    window.pop_front();
                    let c = net.children[j as usize].len() as u64;
                    weight -= c;
                    fen.add(j as usize, -(c as f64));
                    continue;
                }
            }
            if candidate > self.horizon {
                return Ok(());
            }
            t = candidate;
            let u = self.rng.random::<f64>() * rate;
            let i = if u < base {
                self.baseline_pick(u)
            } else {
                let j = self.parent_with_children(fen.search((u - base) * n));
                self.child_of(j)
            };
            self.record(i, t)?;
            let c = net.children[i].len() as u64;
            if c > 0 {
                window.push_back((t, i as u32));
                weight += c;
                fen.add(i, c as f64);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closure_of_observed_block() {
        // 0 <- 2 <- 3, 1 isolated, 4 influences only 1
        let mut g = InteractionGraph::zeros(5);
        g.set(0, 2, true);
        g.set(2, 3, true);
        g.set(1, 4, true);
        let net = Network::new(&g, Some(1));
        assert_eq!(net.active, vec![0, 2, 3]);
        assert_eq!(net.children[2], vec![0]);
        assert_eq!(net.children[3], vec![2]);
        assert!(net.children[4].is_empty());
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = InteractionGraph::ones(4);
        let k = KernelSpec::exponential(1.0).unwrap();
        assert!(simulate(&g, &k, 0.0, 1.0, 1).is_err());
        assert!(simulate(&g, &k, 1.0, -1.0, 1).is_err());
        let u = KernelSpec::uniform(1.0).unwrap();
        assert!(matches!(simulate(&g, &u, 1.0, 1.0, 1), Err(Error::NotSubcritical { .. })));
        let opts = SimOptions {
            observed: Some(5),
            ..Default::default()
        };
        assert!(simulate_with(&g, &k, 1.0, 1.0, 1, &opts).is_err());
    }

    #[test]
    fn budget_error_keeps_partial_log() {
        let g = InteractionGraph::zeros(10);
        let k = KernelSpec::exponential(1.0).unwrap();
        let opts = SimOptions {
            event_budget: 50,
            observed: None,
        };
        match simulate_with(&g, &k, 1.0, 100.0, 3, &opts) {
            Err(Error::BudgetExceeded { cap, time, partial }) => {
                assert_eq!(cap, 50);
                assert_eq!(partial.total_events(), 50);
                assert!(time < 100.0);
                assert_eq!(partial.horizon(), time);
            }
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn logs_are_well_formed() {
        let g = InteractionGraph::sample(30, 0.5, 4).unwrap();
        for k in [KernelSpec::exponential(1.0).unwrap(), KernelSpec::uniform(1.0).unwrap()] {
            let log = simulate(&g, &k, 1.0, 20.0, 8).unwrap();
            for i in 0..30 {
                let ts = log.times(i);
                assert!(ts.windows(2).all(|w| w[0] < w[1]));
                assert!(ts.iter().all(|&s| s > 0.0 && s <= 20.0));
            }
            let again = simulate(&g, &k, 1.0, 20.0, 8).unwrap();
            assert_eq!(log, again);
        }
    }
}
