//! Decay kernels `φ`, their convolution powers and the model's regime
//! parameters.

mod irwin_hall;

use std::cell::RefCell;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};
use irwin_hall::IrwinHall;

thread_local! {
    static IRWIN_HALL: RefCell<IrwinHall> = RefCell::new(IrwinHall::new());
}

/// The two built-in kernel shapes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelFamily {
    /// `φ(s) = exp(-b s)`.
    Exponential { b: f64 },
    /// `φ(s) = 1{0 ≤ s ≤ a}`.
    UniformIndicator { a: f64 },
}

/// A decay kernel with its total mass `Λ = ∫ φ`.
///
/// Serialized as `"exp:<b>"` or `"unif:<a>"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct KernelSpec {
    family: KernelFamily,
    lambda: f64,
    q_max: f64,
}

impl KernelSpec {
    pub fn exponential(b: f64) -> Result<Self> {
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::Domain(format!("exponential rate must be positive, got {b}")));
        }
        Ok(KernelSpec {
            family: KernelFamily::Exponential { b },
            lambda: 1.0 / b,
            q_max: f64::INFINITY,
        })
    }

    pub fn uniform(a: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::Domain(format!("uniform cutoff must be positive, got {a}")));
        }
        Ok(KernelSpec {
            family: KernelFamily::UniformIndicator { a },
            lambda: a,
            q_max: f64::INFINITY,
        })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    /// `Λ = ∫_0^∞ φ(s) ds`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Largest `q` with a finite `q`-th moment.
    pub fn q_max(&self) -> f64 {
        self.q_max
    }

    /// Decay rate `b` of the exponential family.
    pub fn decay_rate(&self) -> Option<f64> {
        match self.family {
            KernelFamily::Exponential { b } => Some(b),
            KernelFamily::UniformIndicator { .. } => None,
        }
    }

    pub fn is_exponential(&self) -> bool {
        matches!(self.family, KernelFamily::Exponential { .. })
    }

    /// `φ(s)`.
    pub fn value(&self, s: f64) -> Result<f64> {
        check_time(s)?;
        Ok(match self.family {
            KernelFamily::Exponential { b } => (-b * s).exp(),
            KernelFamily::UniformIndicator { a } => {
                if s <= a {
                    1.0
                } else {
                    0.0
                }
            }
        })
    }

    /// `φ^{*n}(s)` for `n ≥ 1`.
    pub fn convolution_power(&self, n: u32, s: f64) -> Result<f64> {
        check_time(s)?;
        if n == 0 {
            return Err(Error::UnsupportedPointwise);
        }
        Ok(match self.family {
            KernelFamily::Exponential { b } => {
                if n == 1 {
                    (-b * s).exp()
                } else if s == 0.0 {
                    0.0
                } else {
                    let nf = n as f64;
                    ((nf - 1.0) * s.ln() - b * s - ln_gamma(nf)).exp()
                }
            }
            KernelFamily::UniformIndicator { a } => {
                let scale = a.powi(n as i32 - 1);
                scale * IRWIN_HALL.with(|ih| ih.borrow_mut().density(n as usize, s / a))
            }
        })
    }

    /// `∫_x^∞ φ(s) ds`.
    pub fn tail(&self, x: f64) -> f64 {
        let x = x.max(0.0);
        match self.family {
            KernelFamily::Exponential { b } => (-b * x).exp() / b,
            KernelFamily::UniformIndicator { a } => (a - x).max(0.0),
        }
    }

    /// Upper bound `n Λ^{n-1} ∫_{t/n}^∞ φ` on `Λ^n - ∫_0^t φ^{*n}`.
    pub fn tail_mass(&self, n: u32, t: f64) -> f64 {
        let n = n.max(1);
        n as f64 * self.lambda.powi(n as i32 - 1) * self.tail(t.max(0.0) / n as f64)
    }

    /// `∫_0^t (t - u) φ^{*n}(u) du`, with `φ^{*0} = δ_0` giving `t`.
    ///
    /// This is the weight of `A^n 1` in the expected counting process.
    pub fn weighted_primitive(&self, n: u32, t: f64) -> Result<f64> {
        check_time(t)?;
        if n == 0 {
            return Ok(t);
        }
        Ok(match self.family {
            KernelFamily::Exponential { b } => {
                let nf = n as f64;
                let x = b * t;
                let v = t * gamma_lr(nf, x) - nf / b * gamma_lr(nf + 1.0, x);
                v.max(0.0) / b.powi(n as i32)
            }
            KernelFamily::UniformIndicator { a } => {
                let shortfall = IRWIN_HALL.with(|ih| ih.borrow_mut().expected_shortfall(n as usize, t / a));
                a.powi(n as i32 + 1) * shortfall
            }
        })
    }

    /// `∫_0^∞ s^q φ(s) ds`.
    pub fn q_moment(&self, q: f64) -> Result<f64> {
        if !(q >= 0.0) {
            return Err(Error::Domain(format!("moment order must be non-negative, got {q}")));
        }
        Ok(match self.family {
            KernelFamily::Exponential { b } => (ln_gamma(q + 1.0) - (q + 1.0) * b.ln()).exp(),
            KernelFamily::UniformIndicator { a } => a.powf(q + 1.0) / (q + 1.0),
        })
    }

    /// `∫_0^∞ φ(s)^2 ds`.
    pub fn square_integral(&self) -> f64 {
        match self.family {
            KernelFamily::Exponential { b } => 0.5 / b,
            KernelFamily::UniformIndicator { a } => a,
        }
    }

    /// Checks the moment condition for a user-chosen `q > 3`.
    pub fn check_moment_order(&self, q: f64) -> Result<()> {
        if !(q > 3.0) {
            return Err(Error::Assumption(format!("q must exceed 3, got {q}")));
        }
        if q > self.q_max {
            return Err(Error::Assumption(format!(
                "kernel has no moment of order {q} (largest is {})",
                self.q_max
            )));
        }
        Ok(())
    }
}

fn check_time(s: f64) -> Result<()> {
    if s >= 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("time must be finite and non-negative, got {s}")))
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            KernelFamily::Exponential { b } => write!(f, "exp:{b}"),
            KernelFamily::UniformIndicator { a } => write!(f, "unif:{a}"),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, value) = s
            .split_once(':')
            .ok_or_else(|| Error::parse("kernel", format!("expected exp:<b> or unif:<a>, got {s:?}")))?;
        let x: f64 = value
            .trim()
            .parse()
            .map_err(|e| Error::parse("kernel", format!("bad parameter {value:?}: {e}")))?;
        match name.trim() {
            "exp" => KernelSpec::exponential(x),
            "unif" => KernelSpec::uniform(x),
            other => Err(Error::parse("kernel", format!("unknown family {other:?}"))),
        }
    }
}

impl TryFrom<String> for KernelSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<KernelSpec> for String {
    fn from(k: KernelSpec) -> String {
        k.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criticality {
    Subcritical,
    Supercritical,
}

/// Baseline rate, edge probability and the regime they put the system in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeParams {
    pub mu: f64,
    pub p: f64,
    pub criticality: Criticality,
    /// `α₀ = p - b`, set in the supercritical case.
    pub alpha0: Option<f64>,
    /// Limit of `K/N`.
    pub gamma: Option<f64>,
}

impl RegimeParams {
    pub fn new(kernel: &KernelSpec, mu: f64, p: f64, gamma: Option<f64>) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::Domain(format!("μ must be positive, got {mu}")));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("p must lie in [0, 1], got {p}")));
        }
        if let Some(g) = gamma {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::Domain(format!("γ must lie in [0, 1], got {g}")));
            }
        }
        let lp = kernel.lambda() * p;
        if lp < 1.0 {
            return Ok(RegimeParams {
                mu,
                p,
                criticality: Criticality::Subcritical,
                alpha0: None,
                gamma,
            });
        }
        let b = match (lp > 1.0, kernel.decay_rate()) {
            (true, Some(b)) => b,
            (true, None) => {
                return Err(Error::Assumption(
                    "the supercritical regime needs the exponential kernel".into(),
                ))
            }
            (false, _) => return Err(Error::Assumption("Λp = 1 is the critical case".into())),
        };
        Ok(RegimeParams {
            mu,
            p,
            criticality: Criticality::Supercritical,
            alpha0: Some(p - b),
            gamma,
        })
    }
}
