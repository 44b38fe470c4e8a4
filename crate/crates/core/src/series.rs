//! Truncation policy and summation helpers shared by every series in the crate.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::error::{invalid, Error, Result};

/// Largest argument accepted by [`guarded_exp`].
pub const EXP_GUARD: f64 = 700.0;

/// Condition number above which a finite alternating sum is abandoned in
/// favour of a positive-term series.
pub const CANCELLATION_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesControl {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_terms: usize,
}

impl Default for SeriesControl {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            abs_tol: 1e-15,
            max_terms: 1_000_000,
        }
    }
}

impl SeriesControl {
    pub fn new(rel_tol: f64, abs_tol: f64, max_terms: usize) -> Result<Self> {
        let ctl = Self {
            rel_tol,
            abs_tol,
            max_terms,
        };
        ctl.validate()?;
        Ok(ctl)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return Err(invalid(format!("rel_tol must be positive, got {}", self.rel_tol)));
        }
        if !(self.abs_tol > 0.0 && self.abs_tol.is_finite()) {
            return Err(invalid(format!("abs_tol must be positive, got {}", self.abs_tol)));
        }
        if self.max_terms == 0 {
            return Err(invalid("max_terms must be at least 1"));
        }
        Ok(())
    }

    /// Condition number beyond which a finite alternating sum can no longer
    /// meet `rel_tol`, capped at [`CANCELLATION_LIMIT`].
    pub fn cancellation_limit(&self) -> f64 {
        CANCELLATION_LIMIT.min(self.rel_tol / (4.0 * f64::EPSILON))
    }
}

/// Keeps a finite alternating sum unless it is too ill-conditioned for `ctl`.
pub fn prefer_finite(
    ctl: &SeriesControl,
    finite: Evaluation,
    series: impl FnOnce() -> Result<Evaluation>,
) -> Result<Evaluation> {
    if finite.condition <= ctl.cancellation_limit() && finite.value.is_finite() {
        Ok(finite)
    } else {
        series()
    }
}

/// True when a lower bound on the condition number of a finite sum, given
/// as its logarithm, already rules that sum out.
pub(crate) fn finite_is_hopeless(ctl: &SeriesControl, ln_condition_bound: f64) -> bool {
    ln_condition_bound > ctl.cancellation_limit().ln()
}

/// How a quantity was evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Series,
    FiniteSum,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Series => "series",
            Method::FiniteSum => "finite_sum",
        })
    }
}

/// A value together with the route used to obtain it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub method: Method,
    pub terms_used: usize,
    /// `max |term| / |value|` for finite sums, 1 for positive series.
    pub condition: f64,
}

/// `exp(x)` that refuses arguments above [`EXP_GUARD`].
pub fn guarded_exp(x: f64) -> Result<f64> {
    if x > EXP_GUARD {
        Err(Error::Overflow {
            exponent: x,
            limit: EXP_GUARD,
        })
    } else {
        Ok(x.exp())
    }
}

/// Neumaier-compensated accumulator that also tracks the largest term seen.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
    max_abs: f64,
    count: usize,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
        self.max_abs = self.max_abs.max(x.abs());
        self.count += 1;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Ratio of the largest term to the result; about `10^d` means `d` digits lost.
    pub fn condition(&self) -> f64 {
        let v = self.value().abs();
        if self.max_abs == 0.0 {
            1.0
        } else if v == 0.0 {
            f64::INFINITY
        } else {
            self.max_abs / v
        }
    }

    pub fn evaluation(&self) -> Evaluation {
        Evaluation {
            value: self.value(),
            method: Method::FiniteSum,
            terms_used: self.count,
            condition: self.condition(),
        }
    }
}

impl Extend<f64> for CompensatedSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.add(x);
        }
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::new();
        s.extend(iter);
        s
    }
}

/// Sums a series of nonnegative terms `term(j)`, `j = start, start+1, ...`.
///
/// `tail(j)` must bound the sum of all terms after `j`. Summation stops once
/// that bound drops below `abs_tol` times the running sum.
pub fn sum_positive_series(
    ctl: &SeriesControl,
    start: usize,
    mut term: impl FnMut(usize) -> f64,
    mut tail: impl FnMut(usize) -> f64,
) -> Result<Evaluation> {
    let mut acc = CompensatedSum::new();
    for j in start..start.saturating_add(ctl.max_terms) {
        acc.add(term(j));
        let bound = tail(j);
        let s = acc.value();
        if bound <= ctl.abs_tol * s || bound < 1e-300 {
            return Ok(Evaluation {
                value: s,
                method: Method::Series,
                terms_used: acc.count(),
                condition: 1.0,
            });
        }
    }
    Err(Error::NonConvergence {
        max_terms: ctl.max_terms,
    })
}

/// `Σ_{j>last} j r^j` for `0 ≤ r < 1`.
pub fn weighted_geometric_tail(r: f64, last: usize) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let n = last as f64;
    r.powf(n + 1.0) * ((n + 1.0) - n * r) / ((1.0 - r) * (1.0 - r))
}

/// `Σ_{j>last} r^j` for `0 ≤ r < 1`.
pub fn geometric_tail(r: f64, last: usize) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    r.powf(last as f64 + 1.0) / (1.0 - r)
}

/// Poisson probabilities `Pr{N = j}` for mean `m`, `j = 0..=J*`.
///
/// `J*` is the first index past the mode whose probability is below
/// `ctl.abs_tol`; the omitted tail is then at most `2·abs_tol`.
pub fn poisson_weights(m: f64, ctl: &SeriesControl) -> Result<Vec<f64>> {
    if !(m >= 0.0 && m.is_finite()) {
        return Err(invalid(format!("Poisson mean must be finite and nonnegative, got {m}")));
    }
    if m == 0.0 {
        return Ok(vec![1.0]);
    }
    let ln_m = m.ln();
    let mut out = Vec::new();
    for j in 0..ctl.max_terms {
        let p = (-m + j as f64 * ln_m - ln_factorial(j as u64)).exp();
        out.push(p);
        // Past 2m the ratio of successive terms is below 1/2.
        if (j as f64) > 2.0 * m && p < ctl.abs_tol {
            return Ok(out);
        }
    }
    Err(Error::NonConvergence {
        max_terms: ctl.max_terms,
    })
}
