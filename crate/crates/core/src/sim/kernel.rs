//! One-unit-time transition kernels of the outer processes.
//!
//! The composed processes advance their outer chain by exactly one unit of
//! time at every jump of the inner process, so these kernels are all the
//! simulator needs on the outer side.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Geometric, Poisson};

use crate::error::{Error, Result};
use crate::laws::{linear_death_pmf, yule_pmf, BirthParams, DeathParams};

/// Below this population the negative-binomial step is drawn as a sum of
/// geometrics; above it via the gamma–Poisson mixture.
const GEOMETRIC_SUM_MAX: u64 = 32;

/// Largest state the birth sampler will produce.
pub const STATE_LIMIT: u64 = 1 << 52;

fn overflow() -> Error {
    Error::Explosion { limit: STATE_LIMIT }
}

/// Population after one unit of time of a Yule process with rate `alpha`
/// started from `m`: each individual independently becomes a
/// Geometric(`e^{−α}`) clan on `{1, 2, ...}`.
pub fn birth_step<R: Rng + ?Sized>(m: u64, alpha: f64, rng: &mut R) -> Result<u64> {
    if m == 0 {
        return Ok(0);
    }
    let p = (-alpha).exp();
    let extra = if m <= GEOMETRIC_SUM_MAX {
        let geo = Geometric::new(p).expect("success probability in (0, 1]");
        (0..m).map(|_| geo.sample(rng)).try_fold(0u64, |a, g| a.checked_add(g)).ok_or_else(overflow)?
    } else {
        // Failures of a negative binomial: Poisson with a Gamma(m, (1−p)/p) mean.
        let scale = -(-alpha).exp_m1() / p;
        let g = Gamma::new(m as f64, scale).expect("positive shape and scale").sample(rng);
        if g <= 0.0 {
            0
        } else if g > 1e15 {
            return Err(overflow());
        } else {
            Poisson::new(g).expect("finite positive mean").sample(rng) as u64
        }
    };
    let k = m.checked_add(extra).ok_or_else(overflow)?;
    if k > STATE_LIMIT {
        return Err(overflow());
    }
    Ok(k)
}

/// Survivors after one unit of time of a linear death process from `s`.
pub fn linear_death_step<R: Rng + ?Sized>(s: u64, mu: f64, rng: &mut R) -> u64 {
    if s == 0 {
        return 0;
    }
    Binomial::new(s, (-mu).exp()).expect("probability in [0, 1]").sample(rng)
}

/// State after one unit of time of the sublinear death process started at
/// `n0`, currently at `s`.
///
/// `W = n0 − s + 1` (deaths so far plus one) moves up at rate `μW`, so it is a
/// Yule process stopped at `n0 + 1`.
pub fn sublinear_death_step<R: Rng + ?Sized>(s: u64, n0: u64, mu: f64, rng: &mut R) -> Result<u64> {
    if s == 0 {
        return Ok(0);
    }
    let w = n0 - s + 1;
    let w1 = birth_step(w, mu, rng)?;
    Ok((n0 + 1).saturating_sub(w1))
}

/// `Pr{m → k}` for [`birth_step`].
pub fn birth_step_pmf(alpha: f64, m: u64, k: u64) -> Result<f64> {
    if k < m {
        return Ok(0.0);
    }
    yule_pmf(&BirthParams { alpha, n0: m }, 1.0, k)
}

/// `Pr{s → k}` for [`linear_death_step`]: `C(s,k) e^{−μk} (1 − e^{−μ})^{s−k}`.
pub fn linear_death_step_pmf(mu: f64, s: u64, k: u64) -> Result<f64> {
    if s == 0 {
        return Ok(if k == 0 { 1.0 } else { 0.0 });
    }
    if k > s {
        return Ok(0.0);
    }
    linear_death_pmf(&DeathParams { mu, n0: s }, 1.0, k)
}

/// `Pr{s → k}` for [`sublinear_death_step`].
pub fn sublinear_death_step_pmf(mu: f64, n0: u64, s: u64, k: u64) -> Result<f64> {
    if s == 0 {
        return Ok(if k == 0 { 1.0 } else { 0.0 });
    }
    if k > s {
        return Ok(0.0);
    }
    let w = n0 - s + 1;
    if k >= 1 {
        return birth_step_pmf(mu, w, n0 - k + 1);
    }
    let mut below = 0.0;
    for v in w..=n0 {
        below += birth_step_pmf(mu, w, v)?;
    }
    Ok((1.0 - below).max(0.0))
}
