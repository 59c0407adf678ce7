//! Expected counts `E_θ[Z^i_t]` given the graph.
//!
//! Two independent evaluators: the series
//! `μ Σ_n (∫_0^t (t-u) φ^{*n}(u) du) (A_N^n 1)_i`, and for the exponential
//! kernel the linear ODE satisfied by the mean excitation.

use ode_solvers::{DVector, Dopri5, System};

use crate::error::{Error, Result};
use crate::graph::{BitMatrix, InteractionGraph};
use crate::kernel::KernelSpec;

const SERIES_TOL: f64 = 1e-8;
const SERIES_MAX_TERMS: u32 = 100_000;

fn check_inputs(g: &InteractionGraph, mu: f64, t: f64, k_obs: usize) -> Result<()> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::Domain(format!("μ must be positive, got {mu}")));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::Domain(format!("t must be non-negative, got {t}")));
    }
    if k_obs == 0 || k_obs > g.n() {
        return Err(Error::Domain(format!("K must lie in 1..={}, got {k_obs}", g.n())));
    }
    Ok(())
}

/// Upper bound on `μ Σ_{m > n} c_m(t) ‖A^m 1‖_∞`, using `c_m ≤ t Λ^m`,
/// `c_m ≤ t^{m+1}/(m+1)!` (both kernels are bounded by 1) and
/// `‖A^m 1‖_∞ ≤ r^m`.
fn remainder_bound(n: u32, t: f64, lambda: f64, r: f64, mu: f64) -> f64 {
    let m = (n + 1) as f64;
    let lr = lambda * r;
    let geometric = if lr < 1.0 {
        t * lr.powf(m) / (1.0 - lr)
    } else {
        f64::INFINITY
    };
    let ratio = t * r / (m + 2.0);
    let factorial = if ratio < 1.0 {
        let log_first = (m + 1.0) * t.ln() + m * r.ln() - statrs::function::gamma::ln_gamma(m + 2.0);
        log_first.exp() / (1.0 - ratio)
    } else {
        f64::INFINITY
    };
    mu * geometric.min(factorial)
}

/// Series evaluator; the truncation error is below `1e-8`.
pub fn expected_counts(g: &InteractionGraph, kernel: &KernelSpec, mu: f64, t: f64, k_obs: usize) -> Result<Vec<f64>> {
    check_inputs(g, mu, t, k_obs)?;
    if !kernel.is_exponential() {
        g.check_subcritical(kernel.lambda())?;
    }
    let n = g.n();
    let r = g.max_row_density();
    let mut power = vec![1.0; n];
    let mut next = vec![0.0; n];
    let mut out = vec![mu * t; k_obs];
    if r == 0.0 || t == 0.0 {
        return Ok(out);
    }
    for m in 1..=SERIES_MAX_TERMS {
        g.bits().matvec(&power, 1.0 / n as f64, &mut next);
        std::mem::swap(&mut power, &mut next);
        let c = kernel.weighted_primitive(m, t)?;
        for (o, p) in out.iter_mut().zip(&power) {
            *o += mu * c * p;
        }
        if remainder_bound(m, t, kernel.lambda(), r, mu) < SERIES_TOL {
            return Ok(out);
        }
    }
    Err(Error::Domain(format!("series did not reach tolerance within {SERIES_MAX_TERMS} terms")))
}

struct MeanSystem<'a> {
    bits: &'a BitMatrix,
    b: f64,
    mu: f64,
    k_obs: usize,
}

impl System<f64, DVector<f64>> for MeanSystem<'_> {
    // y = (g_1..g_N, Z_1..Z_K): g' = -b g + A(μ1 + g), Z' = μ + g.
    fn system(&self, _t: f64, y: &DVector<f64>, dy: &mut DVector<f64>) {
        let n = self.bits.n();
        let y = y.as_slice();
        let rate: Vec<f64> = y[..n].iter().map(|g| self.mu + g).collect();
        let mut ar = vec![0.0; n];
        self.bits.matvec(&rate, 1.0 / n as f64, &mut ar);
        let dy = dy.as_mut_slice();
        for i in 0..n {
            dy[i] = -self.b * y[i] + ar[i];
        }
        for i in 0..self.k_obs {
            dy[n + i] = rate[i];
        }
    }
}

/// ODE evaluator for the exponential kernel of rate `b`.
pub fn expected_counts_ode(g: &InteractionGraph, b: f64, mu: f64, t: f64, k_obs: usize) -> Result<Vec<f64>> {
    check_inputs(g, mu, t, k_obs)?;
    if !(b.is_finite() && b > 0.0) {
        return Err(Error::Domain(format!("decay rate must be positive, got {b}")));
    }
    if t == 0.0 {
        return Ok(vec![0.0; k_obs]);
    }
    let n = g.n();
    let sys = MeanSystem {
        bits: g.bits(),
        b,
        mu,
        k_obs,
    };
    let y0 = DVector::zeros(n + k_obs);
    let mut solver = Dopri5::new(sys, 0.0, t, t, y0, 1e-11, 1e-10);
    solver.set_output(ode_solvers::OutputType::Sparse);
    solver
        .integrate()
        .map_err(|e| Error::Domain(format!("ODE integration failed: {e:?}")))?;
    let y = solver.y_out().last().expect("solver output includes the endpoint");
    Ok(y.as_slice()[n..].to_vec())
}
