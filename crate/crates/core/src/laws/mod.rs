//! Marginal laws of the base processes: Yule–Furry birth, Poisson, linear
//! death and sublinear death.
//!
//! All kernels are evaluated in log space so that populations in the
//! thousands stay finite; `t = 0` is an exact indicator branch.

pub mod combinatorics;

use serde::{Deserialize, Serialize};
use statrs::function::factorial::{ln_binomial, ln_factorial};

use crate::error::{domain, invalid, Result};

pub use combinatorics::{bell_polynomial, stirling2};

/// Yule–Furry birth process with per-individual rate `alpha`, started from `n0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BirthParams {
    pub alpha: f64,
    pub n0: u64,
}

/// Linear or sublinear death process with rate `mu`, started from `n0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeathParams {
    pub mu: f64,
    pub n0: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonParams {
    pub lambda: f64,
}

pub(crate) fn check_rate(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

pub(crate) fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("time must be finite and nonnegative, got {t}")))
    }
}

pub(crate) fn check_n0(n0: u64) -> Result<()> {
    if n0 >= 1 {
        Ok(())
    } else {
        Err(invalid("initial population n0 must be at least 1"))
    }
}

impl BirthParams {
    pub fn new(alpha: f64, n0: u64) -> Result<Self> {
        let p = Self { alpha, n0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_rate("alpha", self.alpha)?;
        check_n0(self.n0)
    }
}

impl DeathParams {
    pub fn new(mu: f64, n0: u64) -> Result<Self> {
        let p = Self { mu, n0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_rate("mu", self.mu)?;
        check_n0(self.n0)
    }
}

impl PoissonParams {
    pub fn new(lambda: f64) -> Result<Self> {
        let p = Self { lambda };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_rate("lambda", self.lambda)
    }
}

/// `C(n, k)` as a float: exact products for `n ≤ 30`, log-gamma beyond.
pub fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    if n <= 30 {
        let k = k.min(n - k);
        let mut c: u64 = 1;
        for i in 0..k {
            c = c * (n - i) / (i + 1);
        }
        c as f64
    } else {
        ln_binomial(n, k).exp()
    }
}

/// `k ln x`, with `0 ln 0 = 0`.
fn xlogy(k: u64, x: f64) -> f64 {
    if k == 0 {
        0.0
    } else {
        k as f64 * x.ln()
    }
}

/// `Pr{B_α(t) = k | B_α(0) = n0} = C(k−1, k−n0) e^{−α t n0} (1 − e^{−α t})^{k−n0}`.
pub fn yule_pmf(p: &BirthParams, t: f64, k: u64) -> Result<f64> {
    p.validate()?;
    check_time(t)?;
    if k < p.n0 {
        return Err(domain(format!("Yule state {k} is below the initial population {}", p.n0)));
    }
    if t == 0.0 {
        return Ok(if k == p.n0 { 1.0 } else { 0.0 });
    }
    let at = p.alpha * t;
    let growth = -(-at).exp_m1();
    let ln = ln_binomial(k - 1, k - p.n0) - at * p.n0 as f64 + xlogy(k - p.n0, growth);
    Ok(ln.exp())
}

/// `Pr{N_λ(t) = j} = e^{−λt} (λt)^j / j!`, evaluated in log space.
pub fn poisson_pmf(p: &PoissonParams, t: f64, j: u64) -> Result<f64> {
    p.validate()?;
    check_time(t)?;
    let m = p.lambda * t;
    if m == 0.0 {
        return Ok(if j == 0 { 1.0 } else { 0.0 });
    }
    Ok((-m + xlogy(j, m) - ln_factorial(j)).exp())
}

fn check_death_state(p: &DeathParams, k: u64) -> Result<()> {
    if k > p.n0 {
        Err(domain(format!("death-process state {k} exceeds n0 = {}", p.n0)))
    } else {
        Ok(())
    }
}

/// Binomial law of the linear death process: `C(n0,k) e^{−μtk} (1 − e^{−μt})^{n0−k}`.
pub fn linear_death_pmf(p: &DeathParams, t: f64, k: u64) -> Result<f64> {
    p.validate()?;
    check_time(t)?;
    check_death_state(p, k)?;
    if t == 0.0 {
        return Ok(if k == p.n0 { 1.0 } else { 0.0 });
    }
    let mt = p.mu * t;
    let dead = -(-mt).exp_m1();
    let ln = ln_binomial(p.n0, k) - mt * k as f64 + xlogy(p.n0 - k, dead);
    Ok(ln.exp())
}

/// Law of the sublinear death process, whose death rate in state `k ≥ 1` is
/// `μ (n0 − k + 1)`.
pub fn sublinear_death_pmf(p: &DeathParams, t: f64, k: u64) -> Result<f64> {
    p.validate()?;
    check_time(t)?;
    check_death_state(p, k)?;
    if t == 0.0 {
        return Ok(if k == p.n0 { 1.0 } else { 0.0 });
    }
    let mt = p.mu * t;
    let dead = -(-mt).exp_m1();
    if k == 0 {
        Ok(xlogy(p.n0, dead).exp())
    } else {
        Ok((-mt + xlogy(p.n0 - k, dead)).exp())
    }
}

/// Total death rate of the sublinear process in state `k` (zero once extinct).
pub fn sublinear_death_rate(p: &DeathParams, k: u64) -> f64 {
    if k == 0 || k > p.n0 {
        0.0
    } else {
        p.mu * (p.n0 - k + 1) as f64
    }
}

/// Generating function `E u^{D(t)} = [1 − e^{−μt}(1 − u)]^{n0}` of the linear death process.
pub fn death_pgf(p: &DeathParams, t: f64, u: f64) -> Result<f64> {
    p.validate()?;
    check_time(t)?;
    if !(0.0..=1.0).contains(&u) {
        return Err(domain(format!("pgf argument must lie in [0, 1], got {u}")));
    }
    let base = 1.0 - (-p.mu * t).exp() * (1.0 - u);
    Ok(base.powf(p.n0 as f64))
}

/// `E D̃(t) = n0 + 1 − e^{μt} [1 − (1 − e^{−μt})^{n0+1}]`.
pub fn sublinear_death_mean(p: &DeathParams, t: f64) -> Result<f64> {
    p.validate()?;
    check_time(t)?;
    Ok(sublinear_mean_at(p.mu * t, p.n0))
}

/// The mean above as a function of `μt`, with the bracket computed as
/// `−expm1((n0+1) ln(1 − e^{−μt}))` so that large `μt` does not cancel.
pub(crate) fn sublinear_mean_at(mt: f64, n0: u64) -> f64 {
    if mt == 0.0 {
        return n0 as f64;
    }
    let x = (-mt).exp();
    let bracket = -((n0 + 1) as f64 * (-x).ln_1p()).exp_m1();
    let v = (n0 + 1) as f64 - bracket / x;
    v.clamp(0.0, n0 as f64)
}
