//! Simulation, estimation and Monte Carlo validation for partially observed
//! interacting Hawkes processes on Bernoulli random graphs.
//!
//! `N` individuals emit events. Individual `i` jumps at rate
//!
//! ```text
//! λ_i(t) = μ + (1/N) Σ_j θ_ij ∫_[0,t) φ(t - s) dZ_j(s)
//! ```
//!
//! where `θ` is an i.i.d. Bernoulli(p) adjacency matrix and `φ` a decay kernel
//! of total mass `Λ`. Only the first `K` individuals are observed, and the
//! goal is to recover the edge density `p`.
//!
//! Module map:
//!
//! * [`kernel`]: decay kernels, convolution powers, assumption checks.
//! * [`graph`]: graph sampling and the deterministic graph functionals
//!   (resolvent row sums, Perron data) that the estimators converge to.
//! * [`simulator`]: exact event simulation and the mean-trajectory oracle.
//! * [`subcritical`] / [`supercritical`]: the estimators of `p`.
//! * [`harness`]: replicated experiments checking consistency and CLT claims.

pub mod error;
pub mod graph;
pub mod harness;
pub mod kernel;
pub mod quad;
pub mod seeds;
pub mod simulator;
pub mod stats;
pub mod subcritical;
pub mod supercritical;

pub use error::{Error, Result};
pub use graph::{GraphLimits, InteractionGraph};
pub use kernel::{Criticality, KernelFamily, KernelSpec, RegimeParams};
pub use simulator::{simulate, simulate_with, EventLog, SimMeta, SimOptions};
pub use subcritical::{CiMode, SubcriticalEstimate};
pub use supercritical::SupercriticalEstimate;
