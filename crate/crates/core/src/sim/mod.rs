//! Exact Monte Carlo simulation and empirical estimators.
//!
//! Every path `i` draws from its own ChaCha8 stream `i` under the root seed,
//! so a path does not depend on how work is split across threads. Paths are
//! processed in fixed-size blocks in parallel, and the per-block results are
//! merged sequentially in block order. Identical configurations therefore give
//! bit-identical estimates for any thread count.

pub mod kernel;
mod path;

use std::collections::BTreeMap;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use path::{
    sample_composed, sample_linear_death, sample_process, sample_sublinear_death, sample_yule, PathRecord,
    EVENT_LIMIT,
};

use crate::composed::Process;
use crate::error::{invalid, Error, Result};

const BLOCK: u64 = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub n_paths: u64,
    /// `T_max`.
    pub horizon: f64,
    /// Increasing observation times within `[0, horizon]`.
    pub eval_times: Vec<f64>,
}

impl SimConfig {
    pub fn new(seed: u64, n_paths: u64, horizon: f64, eval_times: Vec<f64>) -> Result<Self> {
        let c = Self {
            seed,
            n_paths,
            horizon,
            eval_times,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(invalid("at least one path is required"));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(invalid(format!("horizon must be positive and finite, got {}", self.horizon)));
        }
        if self.eval_times.iter().any(|&t| !(0.0..=self.horizon).contains(&t)) {
            return Err(invalid("evaluation times must lie in [0, horizon]"));
        }
        if self.eval_times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("evaluation times must be strictly increasing"));
        }
        Ok(())
    }
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n: u64,
}

impl EmpiricalEstimate {
    /// Sample proportion with binomial standard error.
    pub fn proportion(successes: u64, n: u64) -> Self {
        let p = if n == 0 { 0.0 } else { successes as f64 / n as f64 };
        Self {
            value: p,
            stderr: (p * (1.0 - p) / n.max(1) as f64).sqrt(),
            n,
        }
    }

    /// Sample mean with standard error `s / √n`.
    pub fn mean(sum: f64, sum_sq: f64, n: u64) -> Self {
        if n == 0 {
            return Self {
                value: 0.0,
                stderr: 0.0,
                n,
            };
        }
        let nf = n as f64;
        let m = sum / nf;
        let var = if n > 1 { ((sum_sq - nf * m * m) / (nf - 1.0)).max(0.0) } else { 0.0 };
        Self {
            value: m,
            stderr: (var / nf).sqrt(),
            n,
        }
    }

    /// `|value − target|` in units of the given standard error.
    pub fn deviation(&self, target: f64, stderr: f64) -> f64 {
        let d = (self.value - target).abs();
        if d == 0.0 {
            0.0
        } else {
            d / stderr
        }
    }

    /// Deviation in units of the binomial standard error of `target` itself,
    /// which stays meaningful when the observed proportion is 0 or 1.
    pub fn binomial_deviation(&self, target: f64) -> f64 {
        let se = (target * (1.0 - target) / self.n.max(1) as f64).sqrt();
        self.deviation(target, se)
    }
}

/// The random stream of path `index` under `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Runs `f` on every path and merges the block results in order.
fn fold_paths<A: Send>(
    cfg: &SimConfig,
    init: impl Fn() -> A + Sync,
    f: impl Fn(&mut A, u64, &mut ChaCha8Rng) + Sync,
    merge: impl Fn(&mut A, A),
) -> A {
    let blocks = cfg.n_paths.div_ceil(BLOCK);
    let parts: Vec<A> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = init();
            for i in b * BLOCK..((b + 1) * BLOCK).min(cfg.n_paths) {
                let mut rng = path_rng(cfg.seed, i);
                f(&mut acc, i, &mut rng);
            }
            acc
        })
        .collect();
    let mut out = init();
    for p in parts {
        merge(&mut out, p);
    }
    out
}

/// Empirical law of the state at one observation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub t: f64,
    pub n: u64,
    pub counts: BTreeMap<u64, u64>,
    pub mean: EmpiricalEstimate,
}

impl StateSnapshot {
    pub fn frequency(&self, k: u64) -> EmpiricalEstimate {
        EmpiricalEstimate::proportion(self.counts.get(&k).copied().unwrap_or(0), self.n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateEstimates {
    pub snapshots: Vec<StateSnapshot>,
    /// Paths abandoned by the explosion guard (excluded from the snapshots).
    pub aborted: u64,
    pub n_paths: u64,
}

#[derive(Default)]
struct StateAcc {
    counts: Vec<BTreeMap<u64, u64>>,
    sums: Vec<(f64, f64)>,
    n: u64,
    aborted: u64,
    error: Option<Error>,
}

fn absorb_error(acc_err: &mut Option<Error>, e: Error) -> bool {
    if matches!(e, Error::Explosion { .. }) {
        true
    } else {
        acc_err.get_or_insert(e);
        false
    }
}

/// Empirical state distributions and means at each `cfg.eval_times`.
pub fn estimate_states(process: &Process, cfg: &SimConfig) -> Result<StateEstimates> {
    cfg.validate()?;
    process.validate()?;
    let times = &cfg.eval_times;
    if times.is_empty() {
        return Err(invalid("no evaluation times given"));
    }
    let t_end = *times.last().expect("nonempty");
    let nt = times.len();
    let init = || StateAcc {
        counts: vec![BTreeMap::new(); nt],
        sums: vec![(0.0, 0.0); nt],
        ..Default::default()
    };
    let acc = fold_paths(
        cfg,
        init,
        |acc, _, rng| match sample_process(process, t_end, rng, &mut |_| false) {
            Ok(path) => {
                acc.n += 1;
                for (i, &t) in times.iter().enumerate() {
                    let v = path.value_at(t);
                    *acc.counts[i].entry(v).or_insert(0) += 1;
                    let x = v as f64;
                    acc.sums[i].0 += x;
                    acc.sums[i].1 += x * x;
                }
            }
            Err(e) => {
                if absorb_error(&mut acc.error, e) {
                    acc.aborted += 1;
                }
            }
        },
        |out, part| {
            for i in 0..nt {
                for (k, c) in part.counts[i].iter() {
                    *out.counts[i].entry(*k).or_insert(0) += c;
                }
                out.sums[i].0 += part.sums[i].0;
                out.sums[i].1 += part.sums[i].1;
            }
            out.n += part.n;
            out.aborted += part.aborted;
            if out.error.is_none() {
                out.error = part.error;
            }
        },
    );
    if let Some(e) = acc.error {
        return Err(e);
    }
    let snapshots = times
        .iter()
        .enumerate()
        .map(|(i, &t)| StateSnapshot {
            t,
            n: acc.n,
            counts: acc.counts[i].clone(),
            mean: EmpiricalEstimate::mean(acc.sums[i].0, acc.sums[i].1, acc.n),
        })
        .collect();
    Ok(StateEstimates {
        snapshots,
        aborted: acc.aborted,
        n_paths: cfg.n_paths,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FptBin {
    pub lo: f64,
    pub hi: f64,
    pub count: u64,
    /// Empirical density `count / (n · width)` with its standard error.
    pub density: EmpiricalEstimate,
}

/// Horizon-censored first-passage statistics for one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FptEstimate {
    pub k: u64,
    pub horizon: f64,
    /// Estimate of `Pr{T_k ≤ horizon}`.
    pub cdf_at_horizon: EmpiricalEstimate,
    pub hits: u64,
    /// Paths that moved past the level without landing on it.
    pub jumped_over: u64,
    /// Paths still on the near side of the level at the horizon.
    pub censored: u64,
    pub aborted: u64,
    pub bins: Vec<FptBin>,
}

#[derive(Default)]
struct FptAcc {
    hist: Vec<u64>,
    hits: u64,
    over: u64,
    censored: u64,
    aborted: u64,
    error: Option<Error>,
}

/// Estimates the law of `T_k = inf{t > 0 : K(t) = k}` on `[0, horizon]`.
///
/// Only landing exactly on `k` at a jump counts as a hit; a path that moves
/// past `k` is recorded as jumped over. For the iterated birth process a
/// random initial value equal to `k` is not a hit either.
pub fn estimate_fpt(process: &Process, k: u64, cfg: &SimConfig, bins: usize) -> Result<FptEstimate> {
    cfg.validate()?;
    process.validate()?;
    if bins == 0 {
        return Err(invalid("at least one histogram bin is required"));
    }
    let up = process.is_increasing();
    let width = cfg.horizon / bins as f64;
    let init = || FptAcc {
        hist: vec![0; bins],
        ..Default::default()
    };
    let acc = fold_paths(
        cfg,
        init,
        |acc, _, rng| {
            let mut stop = |s: u64| if up { s >= k } else { s <= k };
            match sample_process(process, cfg.horizon, rng, &mut stop) {
                Ok(path) => match path.first_hit(k) {
                    Some(t) => {
                        acc.hits += 1;
                        acc.hist[((t / width) as usize).min(bins - 1)] += 1;
                    }
                    None => {
                        let last = path.final_value();
                        let passed = if up { last >= k } else { last <= k };
                        if passed {
                            acc.over += 1;
                        } else {
                            acc.censored += 1;
                        }
                    }
                },
                Err(e) => {
                    if absorb_error(&mut acc.error, e) {
                        acc.aborted += 1;
                    }
                }
            }
        },
        |out, part| {
            for (a, b) in out.hist.iter_mut().zip(part.hist) {
                *a += b;
            }
            out.hits += part.hits;
            out.over += part.over;
            out.censored += part.censored;
            out.aborted += part.aborted;
            if out.error.is_none() {
                out.error = part.error;
            }
        },
    );
    if let Some(e) = acc.error {
        return Err(e);
    }
    let n = acc.hits + acc.over + acc.censored;
    let bins = acc
        .hist
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let p = EmpiricalEstimate::proportion(c, n);
            FptBin {
                lo: i as f64 * width,
                hi: (i + 1) as f64 * width,
                count: c,
                density: EmpiricalEstimate {
                    value: p.value / width,
                    stderr: p.stderr / width,
                    n,
                },
            }
        })
        .collect();
    Ok(FptEstimate {
        k,
        horizon: cfg.horizon,
        cdf_at_horizon: EmpiricalEstimate::proportion(acc.hits, n),
        hits: acc.hits,
        jumped_over: acc.over,
        censored: acc.censored,
        aborted: acc.aborted,
        bins,
    })
}

/// Survival `Pr{V_k > t}` of the downcrossing time `V_k = inf{s : K(s) ≤ k}`
/// at each `cfg.eval_times`, for a process with nonincreasing paths.
pub fn estimate_downcrossing(process: &Process, k: u64, cfg: &SimConfig) -> Result<Vec<(f64, EmpiricalEstimate)>> {
    cfg.validate()?;
    process.validate()?;
    if process.is_increasing() {
        return Err(invalid("downcrossing times need a process with decreasing paths"));
    }
    let times = &cfg.eval_times;
    let t_end = times.last().copied().unwrap_or(cfg.horizon);
    let nt = times.len();
    let init = || (vec![0u64; nt], 0u64, 0u64, None::<Error>);
    let acc = fold_paths(
        cfg,
        init,
        |acc, _, rng| match sample_process(process, t_end, rng, &mut |s| s <= k) {
            Ok(path) => {
                acc.1 += 1;
                let v = path.first_at_or_below(k).unwrap_or(f64::INFINITY);
                for (i, &t) in times.iter().enumerate() {
                    if v > t {
                        acc.0[i] += 1;
                    }
                }
            }
            Err(e) => {
                if absorb_error(&mut acc.3, e) {
                    acc.2 += 1;
                }
            }
        },
        |out, part| {
            for (a, b) in out.0.iter_mut().zip(part.0) {
                *a += b;
            }
            out.1 += part.1;
            out.2 += part.2;
            if out.3.is_none() {
                out.3 = part.3;
            }
        },
    );
    if let Some(e) = acc.3 {
        return Err(e);
    }
    Ok(times
        .iter()
        .zip(acc.0)
        .map(|(&t, c)| (t, EmpiricalEstimate::proportion(c, acc.1)))
        .collect())
}

/// Writes every path as tab-separated `path_id, time, state` lines: one line
/// at time 0 with the initial state, then one per jump.
pub fn write_paths(process: &Process, cfg: &SimConfig, out: &mut dyn Write) -> Result<()> {
    cfg.validate()?;
    process.validate()?;
    let io = |e: std::io::Error| invalid(format!("path dump failed: {e}"));
    for i in 0..cfg.n_paths {
        let mut rng = path_rng(cfg.seed, i);
        let path = match sample_process(process, cfg.horizon, &mut rng, &mut |_| false) {
            Ok(p) => p,
            Err(Error::Explosion { .. }) => continue,
            Err(e) => return Err(e),
        };
        writeln!(out, "{i}\t0\t{}", path.initial_value).map_err(io)?;
        for (t, v) in path.jump_times.iter().zip(&path.values) {
            writeln!(out, "{i}\t{t}\t{v}").map_err(io)?;
        }
    }
    Ok(())
}
