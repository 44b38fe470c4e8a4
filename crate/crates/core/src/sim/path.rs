//! Exact path samplers.

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::kernel::{birth_step, linear_death_step, sublinear_death_step};
use crate::composed::{ComposedModel, Process};
use crate::error::{Error, Result};
use crate::laws::{check_time, sublinear_death_rate, BirthParams, DeathParams};

/// Abort a path after this many events.
pub const EVENT_LIMIT: u64 = 10_000_000;

/// A piecewise-constant path on `[0, end_time]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub initial_value: u64,
    /// Strictly increasing jump instants.
    pub jump_times: Vec<f64>,
    /// State right after each jump.
    pub values: Vec<u64>,
    /// Time up to which the path is known. Earlier than the requested horizon
    /// only when sampling was stopped on purpose.
    pub end_time: f64,
}

impl PathRecord {
    fn new(initial_value: u64) -> Self {
        Self {
            initial_value,
            jump_times: Vec::new(),
            values: Vec::new(),
            end_time: 0.0,
        }
    }

    fn push(&mut self, t: f64, v: u64) {
        self.jump_times.push(t);
        self.values.push(v);
    }

    pub fn final_value(&self) -> u64 {
        self.values.last().copied().unwrap_or(self.initial_value)
    }

    /// State at time `t` (right-continuous).
    pub fn value_at(&self, t: f64) -> u64 {
        let i = self.jump_times.partition_point(|&s| s <= t);
        if i == 0 {
            self.initial_value
        } else {
            self.values[i - 1]
        }
    }

    /// First jump that lands exactly on `k`.
    pub fn first_hit(&self, k: u64) -> Option<f64> {
        self.values.iter().position(|&v| v == k).map(|i| self.jump_times[i])
    }

    /// First instant at or below `k`.
    pub fn first_at_or_below(&self, k: u64) -> Option<f64> {
        if self.initial_value <= k {
            return Some(0.0);
        }
        self.values.iter().position(|&v| v <= k).map(|i| self.jump_times[i])
    }

    /// Every jump moves in the given direction by at least one.
    pub fn is_monotone(&self, increasing: bool) -> bool {
        let mut prev = self.initial_value;
        self.values.iter().all(|&v| {
            let ok = if increasing { v > prev } else { v < prev };
            prev = v;
            ok
        })
    }
}

fn exp_time<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    let e: f64 = rng.sample(Exp1);
    e / rate
}

/// Gillespie simulation of a pure jump chain moving `±1` with state-dependent rate.
fn gillespie<R: Rng + ?Sized>(
    initial: u64,
    t_end: f64,
    rng: &mut R,
    rate: impl Fn(u64) -> f64,
    next: impl Fn(u64) -> u64,
    stop: &mut dyn FnMut(u64) -> bool,
) -> Result<PathRecord> {
    let mut path = PathRecord::new(initial);
    if stop(initial) {
        return Ok(path);
    }
    let mut t = 0.0;
    let mut s = initial;
    let mut events = 0u64;
    loop {
        let r = rate(s);
        if r <= 0.0 {
            break;
        }
        t += exp_time(r, rng);
        if t > t_end {
            break;
        }
        events += 1;
        if events > EVENT_LIMIT {
            return Err(Error::Explosion { limit: EVENT_LIMIT });
        }
        s = next(s);
        path.push(t, s);
        if stop(s) {
            path.end_time = t;
            return Ok(path);
        }
    }
    path.end_time = t_end;
    Ok(path)
}

pub fn sample_yule<R: Rng + ?Sized>(p: &BirthParams, t_end: f64, rng: &mut R) -> Result<PathRecord> {
    sample_process(&Process::Yule(*p), t_end, rng, &mut |_| false)
}

pub fn sample_linear_death<R: Rng + ?Sized>(p: &DeathParams, t_end: f64, rng: &mut R) -> Result<PathRecord> {
    sample_process(&Process::LinearDeath(*p), t_end, rng, &mut |_| false)
}

pub fn sample_sublinear_death<R: Rng + ?Sized>(p: &DeathParams, t_end: f64, rng: &mut R) -> Result<PathRecord> {
    sample_process(&Process::SublinearDeath(*p), t_end, rng, &mut |_| false)
}

/// Samples a composed process by conditioning on the jump times of the inner
/// process and advancing the outer chain one unit of time per inner jump.
pub fn sample_composed<R: Rng + ?Sized>(m: &ComposedModel, t_end: f64, rng: &mut R) -> Result<PathRecord> {
    sample_process(&Process::Composed(*m), t_end, rng, &mut |_| false)
}

/// Samples any process on `[0, t_end]`, stopping early after the first state
/// (including the initial one) for which `stop` returns true.
pub fn sample_process<R: Rng + ?Sized>(
    process: &Process,
    t_end: f64,
    rng: &mut R,
    stop: &mut dyn FnMut(u64) -> bool,
) -> Result<PathRecord> {
    process.validate()?;
    check_time(t_end)?;
    match *process {
        Process::Yule(p) => gillespie(p.n0, t_end, rng, |k| p.alpha * k as f64, |k| k + 1, stop),
        Process::LinearDeath(p) => gillespie(p.n0, t_end, rng, |k| p.mu * k as f64, |k| k - 1, stop),
        Process::SublinearDeath(p) => gillespie(p.n0, t_end, rng, |k| sublinear_death_rate(&p, k), |k| k - 1, stop),
        Process::Composed(m) => composed(&m, t_end, rng, stop),
    }
}

enum Inner {
    Poisson(f64),
    Yule(f64),
}

fn composed<R: Rng + ?Sized>(
    m: &ComposedModel,
    t_end: f64,
    rng: &mut R,
    stop: &mut dyn FnMut(u64) -> bool,
) -> Result<PathRecord> {
    let (inner, initial) = match *m {
        ComposedModel::IteratedBirth(z) => (Inner::Yule(z.lambda), birth_step(1, z.alpha, rng)?),
        ComposedModel::BirthAtPoisson(x) => (Inner::Poisson(x.lambda), x.n0),
        ComposedModel::DeathAtPoisson(y) => (Inner::Poisson(y.lambda), y.n0),
        ComposedModel::SublinearDeathAtPoisson(y) => (Inner::Poisson(y.lambda), y.n0),
    };
    let mut path = PathRecord::new(initial);
    if stop(initial) {
        return Ok(path);
    }
    let absorbing = !m.is_increasing();
    let mut t = 0.0;
    let mut inner_state = 1u64;
    let mut s = initial;
    let mut events = 0u64;
    loop {
        if absorbing && s == 0 {
            break;
        }
        let rate = match inner {
            Inner::Poisson(l) => l,
            Inner::Yule(l) => l * inner_state as f64,
        };
        t += exp_time(rate, rng);
        if t > t_end {
            break;
        }
        events += 1;
        if events > EVENT_LIMIT {
            return Err(Error::Explosion { limit: EVENT_LIMIT });
        }
        inner_state += 1;
        let next = match *m {
            ComposedModel::IteratedBirth(z) => birth_step(s, z.alpha, rng)?,
            ComposedModel::BirthAtPoisson(x) => birth_step(s, x.alpha, rng)?,
            ComposedModel::DeathAtPoisson(y) => linear_death_step(s, y.mu, rng),
            ComposedModel::SublinearDeathAtPoisson(y) => sublinear_death_step(s, y.n0, y.mu, rng)?,
        };
        if next != s {
            s = next;
            path.push(t, s);
            if stop(s) {
                path.end_time = t;
                return Ok(path);
            }
        }
    }
    path.end_time = t_end;
    Ok(path)
}
