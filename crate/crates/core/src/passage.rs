//! First-passage densities, hitting probabilities `Pr{T_k < ∞}` and the
//! downcrossing law of the sublinear model.
//!
//! `T_k` is the first instant the process *equals* `k`. The composed processes
//! jump by arbitrary amounts, so a level can be stepped over and
//! `Pr{T_k < ∞} < 1` in general. For the iterated birth process only arrival
//! by a jump at `t > 0` counts: a path whose random initial value already
//! equals `k` does not contribute.
//!
//! Most formulas are built from the one-step quantity
//!
//! ```text
//! s_j(k) = Σ_{h≥1} Pr{B_α(j) = k − h, B_α(j+1) = k}
//!        = e^{−αj} [e^{−α}(1 − e^{−α(j+1)})^{k−1} − e^{−αk}(1 − e^{−αj})^{k−1}],
//! ```
//! the probability that the outer birth chain lands on `k` on step `j → j+1`.

use serde::{Deserialize, Serialize};

use crate::composed::{ComposedModel, Process};
use crate::error::{domain, invalid, Result};
use crate::laws::{binomial, check_n0, check_rate, check_time, DeathParams};
use crate::quadrature::{integrate, integrate_exponential_tail, Integral};
use crate::series::{
    geometric_tail, poisson_weights, sum_positive_series, weighted_geometric_tail, CompensatedSum,
    Evaluation, Method, SeriesControl, finite_is_hopeless, prefer_finite,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HitProbResult {
    pub k: u64,
    pub prob: f64,
    pub method: Method,
    pub terms_used: usize,
}

impl HitProbResult {
    fn from_eval(k: u64, e: Evaluation) -> Self {
        Self {
            k,
            prob: e.value.clamp(0.0, 1.0),
            method: e.method,
            terms_used: e.terms_used,
        }
    }
}

fn sign(i: u64) -> f64 {
    if i.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// `1 − e^{−x}` without cancellation.
fn one_minus_exp(x: f64) -> f64 {
    -(-x).exp_m1()
}


fn check_birth_level(alpha: f64, k: u64) -> Result<()> {
    check_rate("alpha", alpha)?;
    if k < 2 {
        return Err(domain(format!("first-passage level must be at least 2, got {k}")));
    }
    Ok(())
}

fn check_death_level(n0: u64, k: u64) -> Result<()> {
    check_n0(n0)?;
    if k >= n0 {
        return Err(domain(format!("first-passage level {k} must lie in 0..{n0}")));
    }
    Ok(())
}

/// `s_j(k)` above, for `j ≥ 0` and `k ≥ 2`.
pub fn birth_step_landing(alpha: f64, k: u64, j: u64) -> f64 {
    let km1 = (k - 1) as f64;
    let jf = j as f64;
    let ln_a = (-(-alpha * (jf + 1.0)).exp()).ln_1p();
    let lead = (-alpha * (jf + 1.0) + km1 * ln_a).exp();
    if j == 0 {
        return lead;
    }
    let ln_b = (-(-alpha * jf).exp()).ln_1p();
    // e^{−αk} B^{k−1} / (e^{−α} A^{k−1}) = exp{(k−1)(−α + ln B − ln A)}
    lead * -(km1 * (-alpha + ln_b - ln_a)).exp_m1()
}

/// `Σ_{m≥1} e^{−aαm} (1 − e^{−αm})^b`.
pub fn birth_power_series(alpha: f64, a: u32, b: u64, ctl: &SeriesControl) -> Result<Evaluation> {
    check_rate("alpha", alpha)?;
    if a == 0 {
        return Err(invalid("exponent a must be at least 1"));
    }
    let r = (-alpha * a as f64).exp();
    sum_positive_series(
        ctl,
        1,
        |m| {
            let mf = m as f64;
            (-alpha * a as f64 * mf + b as f64 * (-(-alpha * mf).exp()).ln_1p()).exp()
        },
        |m| geometric_tail(r, m),
    )
}

// Iterated birth process Z.

/// Density of `T_k^Z` at `t`:
/// `λ e^{−λt} Σ_{j≥1} j (1 − e^{−λt})^{j−1} s_j(k)`.
pub fn iterated_birth_fpt_density(alpha: f64, lambda: f64, k: u64, t: f64, ctl: &SeriesControl) -> Result<f64> {
    check_birth_level(alpha, k)?;
    check_rate("lambda", lambda)?;
    check_time(t)?;
    let lead = lambda * (-lambda * t).exp();
    let p = one_minus_exp(lambda * t);
    if p < 1e-300 {
        return Ok(lead * birth_step_landing(alpha, k, 1));
    }
    let ln_p = p.ln();
    let r = (-alpha).exp() * p;
    let ea = (-alpha).exp();
    let e = sum_positive_series(
        ctl,
        1,
        |j| j as f64 * ((j as f64 - 1.0) * ln_p).exp() * birth_step_landing(alpha, k, j as u64),
        |j| ea * weighted_geometric_tail(r, j) / p,
    )?;
    Ok(lead * e.value)
}

/// `Pr{T_k^Z < ∞} = Σ_{j≥1} s_j(k)`.
pub fn iterated_birth_hitprob_series(alpha: f64, k: u64, ctl: &SeriesControl) -> Result<Evaluation> {
    check_birth_level(alpha, k)?;
    let ea = (-alpha).exp();
    sum_positive_series(
        ctl,
        1,
        |j| birth_step_landing(alpha, k, j as u64),
        |j| ea * geometric_tail(ea, j),
    )
}

/// `Σ_{r=0}^{k−2} C(k−1,r) (−1)^r e^{−2α(r+1)} (1 − e^{−α(k−r−1)}) / (1 − e^{−α(r+1)})`.
pub fn iterated_birth_hitprob_finite(alpha: f64, k: u64) -> Result<Evaluation> {
    check_birth_level(alpha, k)?;
    let mut acc = CompensatedSum::new();
    for r in 0..=k - 2 {
        let x = alpha * (r + 1) as f64;
        let term = binomial(k - 1, r) * (-2.0 * x).exp() * one_minus_exp(alpha * (k - r - 1) as f64)
            / one_minus_exp(x);
        acc.add(sign(r) * term);
    }
    Ok(acc.evaluation())
}

/// `Pr{T_k^Z < ∞}`, which does not depend on the inner rate.
pub fn iterated_birth_hitprob(alpha: f64, k: u64, ctl: &SeriesControl) -> Result<HitProbResult> {
    check_birth_level(alpha, k)?;
    let bound = (k - 1) as f64 * (-2.0 * alpha).exp().ln_1p() - (k as f64).ln() - 2.0 * alpha
        + one_minus_exp(alpha).ln();
    if finite_is_hopeless(ctl, bound) {
        return Ok(HitProbResult::from_eval(k, iterated_birth_hitprob_series(alpha, k, ctl)?));
    }
    let finite = iterated_birth_hitprob_finite(alpha, k)?;
    let e = prefer_finite(ctl, finite, || iterated_birth_hitprob_series(alpha, k, ctl))?;
    Ok(HitProbResult::from_eval(k, e))
}

/// `S(K) = Σ_{k=2}^{K} Pr{T_k^Z < ∞}`. Diverges like `ln K / α`.
pub fn hitprob_partial_sum(alpha: f64, kmax: u64, ctl: &SeriesControl) -> Result<f64> {
    check_birth_level(alpha, kmax)?;
    let mut acc = CompensatedSum::new();
    for k in 2..=kmax {
        acc.add(iterated_birth_hitprob(alpha, k, ctl)?.prob);
    }
    Ok(acc.value())
}

// Birth process at Poisson times X, started from one individual.

/// `λ Σ_{l=0}^{k−2} (−1)^l C(k−1,l) e^{−α(l+1)} (1 − e^{−α(k−1−l)}) exp{−λt(1 − e^{−α(l+1)})}`.
pub fn birth_at_poisson_fpt_density_finite(alpha: f64, lambda: f64, k: u64, t: f64) -> Result<Evaluation> {
    check_birth_level(alpha, k)?;
    check_rate("lambda", lambda)?;
    check_time(t)?;
    let mut acc = CompensatedSum::new();
    for l in 0..=k - 2 {
        let x = alpha * (l + 1) as f64;
        let c = binomial(k - 1, l) * (-x).exp() * one_minus_exp(alpha * (k - 1 - l) as f64);
        acc.add(sign(l) * c * (-lambda * t * one_minus_exp(x)).exp());
    }
    let mut e = acc.evaluation();
    e.value *= lambda;
    Ok(e)
}

/// `λ Σ_{j≥0} Pr{N_λ(t) = j} s_j(k)`.
pub fn birth_at_poisson_fpt_density_series(
    alpha: f64,
    lambda: f64,
    k: u64,
    t: f64,
    ctl: &SeriesControl,
) -> Result<Evaluation> {
    check_birth_level(alpha, k)?;
    check_rate("lambda", lambda)?;
    check_time(t)?;
    let w = poisson_weights(lambda * t, ctl)?;
    let acc: CompensatedSum = w
        .iter()
        .enumerate()
        .map(|(j, wj)| wj * birth_step_landing(alpha, k, j as u64))
        .collect();
    Ok(Evaluation {
        value: lambda * acc.value(),
        method: Method::Series,
        terms_used: w.len(),
        condition: 1.0,
    })
}

/// Density of `T_k^X` given `X(0) = 1`.
pub fn birth_at_poisson_fpt_density(alpha: f64, lambda: f64, k: u64, t: f64, ctl: &SeriesControl) -> Result<f64> {
    let finite = birth_at_poisson_fpt_density_finite(alpha, lambda, k, t)?;
    Ok(prefer_finite(ctl, finite, || birth_at_poisson_fpt_density_series(alpha, lambda, k, t, ctl))?.value)
}

/// `Σ_{l=0}^{k−2} (−1)^l C(k−1,l) e^{−α(l+1)} (1 − e^{−α(k−1−l)}) / (1 − e^{−α(l+1)})`.
pub fn birth_at_poisson_hitprob_finite(alpha: f64, k: u64) -> Result<Evaluation> {
    check_birth_level(alpha, k)?;
    let mut acc = CompensatedSum::new();
    for l in 0..=k - 2 {
        let x = alpha * (l + 1) as f64;
        let term = binomial(k - 1, l) * (-x).exp() * one_minus_exp(alpha * (k - 1 - l) as f64) / one_minus_exp(x);
        acc.add(sign(l) * term);
    }
    Ok(acc.evaluation())
}

/// `(1 − e^{−αk}) Σ_{m≥1} Pr{B_α(m) = k | B_α(0) = 1}`.
pub fn birth_at_poisson_hitprob_series(alpha: f64, k: u64, ctl: &SeriesControl) -> Result<Evaluation> {
    check_birth_level(alpha, k)?;
    let mut e = birth_power_series(alpha, 1, k - 1, ctl)?;
    e.value *= one_minus_exp(alpha * k as f64);
    Ok(e)
}

/// `Pr{T_k^X < ∞ | X(0) = 1}`, independent of the Poisson rate.
pub fn birth_at_poisson_hitprob(alpha: f64, k: u64, ctl: &SeriesControl) -> Result<HitProbResult> {
    check_birth_level(alpha, k)?;
    let bound = (k - 1) as f64 * (-alpha).exp().ln_1p() - (k as f64).ln() - alpha + one_minus_exp(alpha).ln();
    if finite_is_hopeless(ctl, bound) {
        return Ok(HitProbResult::from_eval(k, birth_at_poisson_hitprob_series(alpha, k, ctl)?));
    }
    let finite = birth_at_poisson_hitprob_finite(alpha, k)?;
    let e = prefer_finite(ctl, finite, || birth_at_poisson_hitprob_series(alpha, k, ctl))?;
    Ok(HitProbResult::from_eval(k, e))
}

/// `g_k = Pr{T_k^X < ∞} / (1 − e^{−αk}) = Σ_{m≥1} e^{−αm}(1 − e^{−αm})^{k−1}`.
///
/// For `k = 1` the series value `e^{−α}/(1 − e^{−α})` is returned.
pub fn birth_at_poisson_g(alpha: f64, k: u64, ctl: &SeriesControl) -> Result<f64> {
    check_rate("alpha", alpha)?;
    match k {
        0 => Err(domain("g_k is defined for k ≥ 1")),
        1 => Ok((-alpha).exp() / one_minus_exp(alpha)),
        _ => Ok(birth_at_poisson_hitprob(alpha, k, ctl)?.prob / one_minus_exp(alpha * k as f64)),
    }
}

// Plain death processes.

/// Density of `T_k^D` for the linear death process: `μ(k+1) Pr{D(t) = k+1}`.
pub fn linear_death_fpt_density(p: &DeathParams, k: u64, t: f64) -> Result<f64> {
    p.validate()?;
    check_death_level(p.n0, k)?;
    check_time(t)?;
    let up = k + 1;
    let mt = p.mu * t;
    let rest = (p.n0 - up) as f64;
    let ln = binomial(p.n0, up).ln() - mt * up as f64
        + if rest > 0.0 { rest * one_minus_exp(mt).ln() } else { 0.0 };
    Ok(p.mu * up as f64 * ln.exp())
}

/// Density of `T_k^D̃` for the sublinear death process: `μ(n0−k) Pr{D̃(t) = k+1}`.
pub fn sublinear_death_fpt_density(p: &DeathParams, k: u64, t: f64) -> Result<f64> {
    p.validate()?;
    check_death_level(p.n0, k)?;
    check_time(t)?;
    let mt = p.mu * t;
    let rest = (p.n0 - k - 1) as f64;
    let ln = -mt + if rest > 0.0 { rest * one_minus_exp(mt).ln() } else { 0.0 };
    Ok(p.mu * (p.n0 - k) as f64 * ln.exp())
}

// Linear death process at Poisson times Y.

/// `[1 − e^{−μ(j+1)}]^n − [1 − e^{−μj}]^n`, the chance that the last of `n`
/// independent unit-rate lifetimes (scaled by `μ`) ends in `(j, j+1]`.
fn death_window(mu: f64, n: u64, j: u64) -> f64 {
    let nf = n as f64;
    if j == 0 {
        return (nf * (-(-mu).exp()).ln_1p()).exp();
    }
    let b = one_minus_exp(mu * j as f64);
    let d = (-mu * j as f64).exp() * one_minus_exp(mu);
    (nf * b.ln()).exp() * (nf * (d / b).ln_1p()).exp_m1()
}

/// Density of `T_k^Y`:
/// `λ e^{−μk} C(n0,k) Σ_{j≥0} Pr{N_λ(t)=j} e^{−μjk} {[1−e^{−μ(j+1)}]^{n0−k} − [1−e^{−μj}]^{n0−k}}`.
pub fn death_at_poisson_fpt_density(
    mu: f64,
    lambda: f64,
    n0: u64,
    k: u64,
    t: f64,
    ctl: &SeriesControl,
) -> Result<f64> {
    check_rate("mu", mu)?;
    check_rate("lambda", lambda)?;
    check_death_level(n0, k)?;
    check_time(t)?;
    let n = n0 - k;
    let w = poisson_weights(lambda * t, ctl)?;
    let acc: CompensatedSum = w
        .iter()
        .enumerate()
        .map(|(j, wj)| wj * (-mu * (j * k as usize) as f64).exp() * death_window(mu, n, j as u64))
        .collect();
    Ok(lambda * (-mu * k as f64).exp() * binomial(n0, k) * acc.value())
}

/// Finite-mode form of the density of `T_k^Y`:
/// `λ e^{−μk} C(n0,k) Σ_{m=1}^{n0−k} C(n0−k,m) (−1)^{m−1} (1 − e^{−μm}) exp{−λt(1 − e^{−μ(k+m)})}`.
pub fn death_at_poisson_fpt_density_finite(mu: f64, lambda: f64, n0: u64, k: u64, t: f64) -> Result<Evaluation> {
    check_rate("mu", mu)?;
    check_rate("lambda", lambda)?;
    check_death_level(n0, k)?;
    check_time(t)?;
    let n = n0 - k;
    let mut acc = CompensatedSum::new();
    for m in 1..=n {
        let c = binomial(n, m) * one_minus_exp(mu * m as f64);
        acc.add(-sign(m) * c * (-lambda * t * one_minus_exp(mu * (k + m) as f64)).exp());
    }
    let mut e = acc.evaluation();
    e.value *= lambda * (-mu * k as f64).exp() * binomial(n0, k);
    Ok(e)
}

/// `Pr{T_k^Y < ∞} = e^{−μk} C(n0,k) Σ_{j≥0} e^{−μjk} {[1−e^{−μ(j+1)}]^{n0−k} − [1−e^{−μj}]^{n0−k}}`.
///
/// Level 0 telescopes to exactly 1.
pub fn death_at_poisson_hitprob(mu: f64, n0: u64, k: u64, ctl: &SeriesControl) -> Result<HitProbResult> {
    check_rate("mu", mu)?;
    check_death_level(n0, k)?;
    if k == 0 {
        return Ok(HitProbResult {
            k,
            prob: 1.0,
            method: Method::FiniteSum,
            terms_used: n0 as usize,
        });
    }
    let n = n0 - k;
    let front = (-mu * k as f64).exp() * binomial(n0, k);
    let r = (-mu * (k + 1) as f64).exp();
    let bound = front * n as f64 * one_minus_exp(mu);
    let mut e = sum_positive_series(
        ctl,
        0,
        |j| (-mu * (j as u64 * k) as f64).exp() * death_window(mu, n, j as u64),
        |j| bound * geometric_tail(r, j) / front,
    )?;
    e.value *= front;
    Ok(HitProbResult::from_eval(k, e))
}

/// `e^{−μk} C(n0,k) Σ_{m=1}^{n0−k} (−1)^{m−1} C(n0−k,m) (1 − e^{−μm}) / (1 − e^{−μ(k+m)})`.
pub fn death_at_poisson_hitprob_finite(mu: f64, n0: u64, k: u64) -> Result<Evaluation> {
    check_rate("mu", mu)?;
    check_death_level(n0, k)?;
    let n = n0 - k;
    let mut acc = CompensatedSum::new();
    for m in 1..=n {
        let term = binomial(n, m) * one_minus_exp(mu * m as f64) / one_minus_exp(mu * (k + m) as f64);
        acc.add(-sign(m) * term);
    }
    let mut e = acc.evaluation();
    e.value *= (-mu * k as f64).exp() * binomial(n0, k);
    Ok(e)
}

// Sublinear death process at Poisson times Ỹ.

/// `Pr{V_k > t}` for `V_k = inf{s : Ỹ(s) ≤ k}`, i.e. `Pr{Ỹ(t) ≥ k+1}`:
/// `Σ_{r=1}^{n0−k} (−1)^{r−1} C(n0−k, r) exp{−λt(1 − e^{−μr})}`.
///
/// For `k = 0` this is one minus the extinction probability by time `t`.
pub fn sublinear_downcrossing_survival(
    mu: f64,
    lambda: f64,
    n0: u64,
    k: u64,
    t: f64,
    ctl: &SeriesControl,
) -> Result<f64> {
    check_rate("mu", mu)?;
    check_rate("lambda", lambda)?;
    check_death_level(n0, k)?;
    check_time(t)?;
    let n = n0 - k;
    let lt = lambda * t;
    let mut acc = CompensatedSum::new();
    for r in 1..=n {
        acc.add(-sign(r) * binomial(n, r) * (-lt * one_minus_exp(mu * r as f64)).exp());
    }
    let finite = acc.evaluation();
    let e = prefer_finite(ctl, finite, || {
        // Pr{D̃(j) ≥ k+1} = 1 − (1 − e^{−μj})^{n0−k}
        let w = poisson_weights(lt, ctl)?;
        let s: CompensatedSum = w
            .iter()
            .enumerate()
            .map(|(j, wj)| {
                if j == 0 {
                    *wj
                } else {
                    wj * -(n as f64 * (-(-mu * j as f64).exp()).ln_1p()).exp_m1()
                }
            })
            .collect();
        Ok(Evaluation {
            value: s.value(),
            method: Method::Series,
            terms_used: w.len(),
            condition: 1.0,
        })
    })?;
    Ok(e.value.clamp(0.0, 1.0))
}

/// A first-passage question: the law of `T_k` for one process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FptQuery {
    pub process: Process,
    pub k: u64,
}

impl FptQuery {
    pub fn new(process: impl Into<Process>, k: u64) -> Result<Self> {
        let q = Self {
            process: process.into(),
            k,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        self.process.validate()?;
        match &self.process {
            Process::Composed(ComposedModel::IteratedBirth(m)) => check_birth_level(m.alpha, self.k),
            Process::Composed(ComposedModel::BirthAtPoisson(m)) => {
                if m.n0 != 1 {
                    return Err(invalid("first-passage laws of the birth process at Poisson times need n0 = 1"));
                }
                check_birth_level(m.alpha, self.k)
            }
            Process::Composed(ComposedModel::DeathAtPoisson(m)) => check_death_level(m.n0, self.k),
            Process::LinearDeath(p) | Process::SublinearDeath(p) => check_death_level(p.n0, self.k),
            Process::Composed(ComposedModel::SublinearDeathAtPoisson(_)) => Err(invalid(
                "no first-passage density for the sublinear model; use the downcrossing survival",
            )),
            Process::Yule(_) => Err(invalid("the Yule process visits every level; no first-passage law here")),
        }
    }

    pub fn density(&self, t: f64, ctl: &SeriesControl) -> Result<f64> {
        self.validate()?;
        let k = self.k;
        match &self.process {
            Process::Composed(ComposedModel::IteratedBirth(m)) => iterated_birth_fpt_density(m.alpha, m.lambda, k, t, ctl),
            Process::Composed(ComposedModel::BirthAtPoisson(m)) => birth_at_poisson_fpt_density(m.alpha, m.lambda, k, t, ctl),
            Process::Composed(ComposedModel::DeathAtPoisson(m)) => {
                death_at_poisson_fpt_density(m.mu, m.lambda, m.n0, k, t, ctl)
            }
            Process::LinearDeath(p) => linear_death_fpt_density(p, k, t),
            Process::SublinearDeath(p) => sublinear_death_fpt_density(p, k, t),
            _ => unreachable!("rejected by validate"),
        }
    }

    pub fn hitprob(&self, ctl: &SeriesControl) -> Result<HitProbResult> {
        self.validate()?;
        let k = self.k;
        match &self.process {
            Process::Composed(ComposedModel::IteratedBirth(m)) => iterated_birth_hitprob(m.alpha, k, ctl),
            Process::Composed(ComposedModel::BirthAtPoisson(m)) => birth_at_poisson_hitprob(m.alpha, k, ctl),
            Process::Composed(ComposedModel::DeathAtPoisson(m)) => death_at_poisson_hitprob(m.mu, m.n0, k, ctl),
            Process::LinearDeath(p) | Process::SublinearDeath(p) => Ok(HitProbResult {
                k,
                prob: 1.0,
                method: Method::FiniteSum,
                terms_used: (p.n0 - k) as usize,
            }),
            _ => unreachable!("rejected by validate"),
        }
    }

    /// `(rate, coeff)` with `density(t) ≤ coeff · e^{−rate t}` for all `t`.
    pub fn tail_envelope(&self) -> Result<(f64, f64)> {
        self.validate()?;
        let k = self.k;
        Ok(match &self.process {
            Process::Composed(ComposedModel::IteratedBirth(m)) => {
                let ea = (-m.alpha).exp();
                (m.lambda, m.lambda * ea * ea / (1.0 - ea).powi(2))
            }
            Process::Composed(ComposedModel::BirthAtPoisson(m)) => {
                let ea = (-m.alpha).exp();
                (m.lambda * (1.0 - ea), m.lambda * ea * (1.0 + ea).powf((k - 1) as f64))
            }
            Process::Composed(ComposedModel::DeathAtPoisson(m)) => {
                let n = (m.n0 - k) as f64;
                let c = m.lambda * (-m.mu * k as f64).exp() * binomial(m.n0, k) * 2f64.powf(n);
                (m.lambda * one_minus_exp(m.mu * (k + 1) as f64), c)
            }
            Process::LinearDeath(p) => {
                let up = (k + 1) as f64;
                (p.mu * up, p.mu * up * binomial(p.n0, k + 1))
            }
            Process::SublinearDeath(p) => (p.mu, p.mu * (p.n0 - k) as f64),
            _ => unreachable!("rejected by validate"),
        })
    }

    /// `Pr{T_k ≤ t_max}` by adaptive quadrature of the density.
    pub fn cdf(&self, t_max: f64, tol: f64, ctl: &SeriesControl) -> Result<Integral> {
        check_time(t_max)?;
        self.validate()?;
        let f = |t: f64| self.density(t, ctl).unwrap_or(f64::NAN);
        let out = integrate(f, 0.0, t_max, tol, 4000)?;
        check_finite(out)
    }

    /// Total mass `∫_0^∞` of the density: quadrature on `[0, T*]` plus an
    /// analytic bound on the exponential tail.
    pub fn total_mass(&self, tol: f64, ctl: &SeriesControl) -> Result<Integral> {
        let (rate, coeff) = self.tail_envelope()?;
        let f = |t: f64| self.density(t, ctl).unwrap_or(f64::NAN);
        check_finite(integrate_exponential_tail(f, rate, coeff, tol)?)
    }
}

fn check_finite(i: Integral) -> Result<Integral> {
    if i.value.is_finite() {
        Ok(i)
    } else {
        Err(domain("density evaluation failed inside the quadrature"))
    }
}
