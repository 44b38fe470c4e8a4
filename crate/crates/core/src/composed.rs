//! State probabilities, generating functions and moments of the four
//! time-changed processes.
//!
//! Each pmf has two routes. The finite alternating sums are exact but can
//! cancel badly for large populations or large `λt`; they are evaluated with
//! compensated summation and abandoned for the positive conditioning series
//! `Σ_j Pr{outer at integer time j = k} Pr{inner = j}` once more than six
//! digits would be lost.

use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Error, Result};
use crate::laws::{
    binomial, check_n0, check_rate, check_time, linear_death_pmf, sublinear_death_pmf,
    sublinear_mean_at, yule_pmf, BirthParams, DeathParams,
};
use crate::series::{
    geometric_tail, guarded_exp, poisson_weights, sum_positive_series, CompensatedSum, Evaluation,
    Method, SeriesControl, finite_is_hopeless, prefer_finite,
};

/// Largest state enumerated when tabulating an unbounded support.
pub const SUPPORT_CAP: u64 = 100_000;

/// `Z(t) = B_α(B_λ(t))`, both birth processes started from one progenitor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IteratedBirth {
    pub alpha: f64,
    pub lambda: f64,
}

/// `X(t) = B_α(N_λ(t))` started from `n0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BirthAtPoisson {
    pub alpha: f64,
    pub lambda: f64,
    pub n0: u64,
}

/// `Y(t) = D_μ(N_λ(t))` started from `n0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeathAtPoisson {
    pub mu: f64,
    pub lambda: f64,
    pub n0: u64,
}

/// `Ỹ(t) = D̃_μ(N_λ(t))` started from `n0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SublinearDeathAtPoisson {
    pub mu: f64,
    pub lambda: f64,
    pub n0: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum ComposedModel {
    IteratedBirth(IteratedBirth),
    BirthAtPoisson(BirthAtPoisson),
    DeathAtPoisson(DeathAtPoisson),
    SublinearDeathAtPoisson(SublinearDeathAtPoisson),
}

/// Any process the crate can evaluate or simulate: a composed model or one
/// of the plain base processes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "process", rename_all = "kebab-case")]
pub enum Process {
    Composed(ComposedModel),
    Yule(BirthParams),
    LinearDeath(DeathParams),
    SublinearDeath(DeathParams),
}

impl From<ComposedModel> for Process {
    fn from(m: ComposedModel) -> Self {
        Process::Composed(m)
    }
}

impl Process {
    pub fn validate(&self) -> Result<()> {
        match self {
            Process::Composed(m) => m.validate(),
            Process::Yule(p) => p.validate(),
            Process::LinearDeath(p) | Process::SublinearDeath(p) => p.validate(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Process::Composed(m) => m.name(),
            Process::Yule(_) => "yule",
            Process::LinearDeath(_) => "linear-death",
            Process::SublinearDeath(_) => "sublinear-death",
        }
    }

    /// Nondecreasing paths (birth models) versus nonincreasing (death models).
    pub fn is_increasing(&self) -> bool {
        match self {
            Process::Composed(m) => m.is_increasing(),
            Process::Yule(_) => true,
            _ => false,
        }
    }
}

/// A distribution snapshot at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmfTable {
    pub t: f64,
    /// `(k, Pr{K(t) = k})`, strictly increasing in `k`.
    pub entries: Vec<(u64, f64)>,
    /// Mass beyond the listed support.
    pub truncation_mass: f64,
}

impl PmfTable {
    pub fn total(&self) -> f64 {
        let s: CompensatedSum = self.entries.iter().map(|e| e.1).collect();
        s.value() + self.truncation_mass
    }

    pub fn mean(&self) -> f64 {
        let s: CompensatedSum = self.entries.iter().map(|&(k, p)| k as f64 * p).collect();
        s.value()
    }

    pub fn prob(&self, k: u64) -> f64 {
        self.entries
            .binary_search_by_key(&k, |e| e.0)
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }
}


/// `Σ_j w_j f(j)` over truncated Poisson weights.
fn poisson_mixture(
    lt: f64,
    ctl: &SeriesControl,
    mut f: impl FnMut(u64) -> Result<f64>,
) -> Result<Evaluation> {
    let w = poisson_weights(lt, ctl)?;
    let mut acc = CompensatedSum::new();
    for (j, wj) in w.iter().enumerate() {
        if *wj > 0.0 {
            acc.add(wj * f(j as u64)?);
        }
    }
    Ok(Evaluation {
        value: acc.value(),
        method: Method::Series,
        terms_used: w.len(),
        condition: 1.0,
    })
}

impl IteratedBirth {
    pub fn new(alpha: f64, lambda: f64) -> Result<Self> {
        let m = Self { alpha, lambda };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        check_rate("alpha", self.alpha)?;
        check_rate("lambda", self.lambda)
    }

    fn check(&self, t: f64, k: u64) -> Result<()> {
        self.validate()?;
        check_time(t)?;
        if k == 0 {
            return Err(domain("the iterated birth process lives on k ≥ 1"));
        }
        Ok(())
    }

    /// `q_k^Z(t)`: finite sum by default, positive series when it cancels.
    pub fn pmf(&self, t: f64, k: u64, ctl: &SeriesControl) -> Result<f64> {
        Ok(self.pmf_eval(t, k, ctl)?.value)
    }

    pub fn pmf_eval(&self, t: f64, k: u64, ctl: &SeriesControl) -> Result<Evaluation> {
        self.check(t, k)?;
        // The largest term is at least (1 + e^{−α})^{k−1} / k times the prefactor.
        let bound = -self.lambda * t - self.alpha + (k - 1) as f64 * (-self.alpha).exp().ln_1p() - (k as f64).ln();
        if finite_is_hopeless(ctl, bound) {
            return self.pmf_series(t, k, ctl);
        }
        let finite = self.pmf_finite(t, k)?;
        prefer_finite(ctl, finite, || self.pmf_series(t, k, ctl))
    }

    /// `e^{−λt−α} Σ_{l<k} C(k−1,l) (−e^{−α})^l / (1 − e^{−α(l+1)}(1 − e^{−λt}))`.
    pub fn pmf_finite(&self, t: f64, k: u64) -> Result<Evaluation> {
        self.check(t, k)?;
        let p = -(-self.lambda * t).exp_m1();
        let a = (-self.alpha).exp();
        let mut acc = CompensatedSum::new();
        for l in 0..k {
            let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
            let num = binomial(k - 1, l) * a.powf(l as f64);
            let den = 1.0 - (-self.alpha * (l + 1) as f64).exp() * p;
            acc.add(sign * num / den);
        }
        let mut e = acc.evaluation();
        e.value *= (-self.lambda * t - self.alpha).exp();
        Ok(e)
    }

    /// `e^{−λt} Σ_{j≥1} e^{−αj} (1 − e^{−αj})^{k−1} (1 − e^{−λt})^{j−1}`.
    pub fn pmf_series(&self, t: f64, k: u64, ctl: &SeriesControl) -> Result<Evaluation> {
        self.check(t, k)?;
        let lead = (-self.lambda * t).exp();
        let p = -(-self.lambda * t).exp_m1();
        if p == 0.0 {
            let v = yule_pmf(&BirthParams { alpha: self.alpha, n0: 1 }, 1.0, k)?;
            return Ok(Evaluation {
                value: v,
                method: Method::Series,
                terms_used: 1,
                condition: 1.0,
            });
        }
        let alpha = self.alpha;
        let ln_p = p.ln();
        let r = (-alpha).exp() * p;
        sum_positive_series(
            ctl,
            1,
            |j| {
                let jf = j as f64;
                let grow = -(-alpha * jf).exp_m1();
                lead * (-alpha * jf + (k - 1) as f64 * grow.ln() + (jf - 1.0) * ln_p).exp()
            },
            |j| lead * (-alpha).exp() * geometric_tail(r, j - 1),
        )
    }
}

impl BirthAtPoisson {
    pub fn new(alpha: f64, lambda: f64, n0: u64) -> Result<Self> {
        let m = Self { alpha, lambda, n0 };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        check_rate("alpha", self.alpha)?;
        check_rate("lambda", self.lambda)?;
        check_n0(self.n0)
    }

    fn check(&self, t: f64, k: u64) -> Result<()> {
        self.validate()?;
        check_time(t)?;
        if k < self.n0 {
            return Err(domain(format!("state {k} is below the initial population {}", self.n0)));
        }
        Ok(())
    }

    /// `q_{k,n0}^X(t)`.
    pub fn pmf(&self, t: f64, k: u64, ctl: &SeriesControl) -> Result<f64> {
        Ok(self.pmf_eval(t, k, ctl)?.value)
    }

    pub fn pmf_eval(&self, t: f64, k: u64, ctl: &SeriesControl) -> Result<Evaluation> {
        self.check(t, k)?;
        let d = (k - self.n0) as f64;
        if finite_is_hopeless(ctl, d * std::f64::consts::LN_2 - self.lambda * t - (d + 1.0).ln()) {
            return self.pmf_series(t, k, ctl);
        }
        let finite = self.pmf_finite(t, k)?;
        prefer_finite(ctl, finite, || self.pmf_series(t, k, ctl))
    }

    /// `C(k−1, k−n0) Σ_{l=0}^{k−n0} C(k−n0, l) (−1)^l exp{−λt(1 − e^{−α(n0+l)})}`.
    pub fn pmf_finite(&self, t: f64, k: u64) -> Result<Evaluation> {
        self.check(t, k)?;
        let d = k - self.n0;
        let lt = self.lambda * t;
        let mut acc = CompensatedSum::new();
        for l in 0..=d {
            let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
            let rate = -(-self.alpha * (self.n0 + l) as f64).exp_m1();
            acc.add(sign * binomial(d, l) * (-lt * rate).exp());
        }
        let mut e = acc.evaluation();
        e.value *= binomial(k - 1, d);
        Ok(e)
    }

    /// `Σ_j Pr{B_α(j) = k} Pr{N_λ(t) = j}`.
    pub fn pmf_series(&self, t: f64, k: u64, ctl: &SeriesControl) -> Result<Evaluation> {
        self.check(t, k)?;
        let outer = BirthParams {
            alpha: self.alpha,
            n0: self.n0,
        };
        poisson_mixture(self.lambda * t, ctl, |j| yule_pmf(&outer, j as f64, k))
    }

    /// `E X(t) = n0 e^{λt(e^α − 1)}`.
    pub fn mean(&self, t: f64) -> Result<f64> {
        self.validate()?;
        check_time(t)?;
        Ok(self.n0 as f64 * guarded_exp(self.lambda * t * self.alpha.exp_m1())?)
    }

    /// `n0(n0+1) e^{λt(e^{2α}−1)} − n0² e^{2λt(e^α−1)} − n0 e^{λt(e^α−1)}`.
    pub fn variance(&self, t: f64) -> Result<f64> {
        self.validate()?;
        check_time(t)?;
        let lt = self.lambda * t;
        let n = self.n0 as f64;
        let e2 = guarded_exp(lt * (2.0 * self.alpha).exp_m1())?;
        let e1 = guarded_exp(lt * self.alpha.exp_m1())?;
        let v = n * (n + 1.0) * e2 - n * n * e1 * e1 - n * e1;
        Ok(v.max(0.0))
    }

    /// `E[X(X−1)…(X−r+1)] = r! Σ_{m<r} C(r−1,m) (−1)^m exp{−λt(1 − e^{α(r−m)})}`, for `n0 = 1`.
    pub fn factorial_moment(&self, t: f64, r: u32) -> Result<f64> {
        self.validate()?;
        check_time(t)?;
        if self.n0 != 1 {
            return Err(invalid("factorial moments are available for n0 = 1 only"));
        }
        if r == 0 {
            return Err(invalid("factorial moment order must be at least 1"));
        }
        let lt = self.lambda * t;
        let mut acc = CompensatedSum::new();
        for m in 0..r {
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            let x = lt * (self.alpha * (r - m) as f64).exp_m1();
            acc.add(sign * binomial((r - 1) as u64, m as u64) * guarded_exp(x)?);
        }
        let fact: f64 = (1..=r).map(f64::from).product();
        Ok((fact * acc.value()).max(0.0))
    }
}

impl DeathAtPoisson {
    pub fn new(mu: f64, lambda: f64, n0: u64) -> Result<Self> {
        let m = Self { mu, lambda, n0 };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        check_rate("mu", self.mu)?;
        check_rate("lambda", self.lambda)?;
        check_n0(self.n0)
    }

    fn check(&self, t: f64, k: u64) -> Result<()> {
        self.validate()?;
        check_time(t)?;
        if k > self.n0 {
            return Err(domain(format!("state {k} exceeds n0 = {}", self.n0)));
        }
        Ok(())
    }

    pub fn outer(&self) -> DeathParams {
        DeathParams {
            mu: self.mu,
            n0: self.n0,
        }
    }

    /// `q_k^Y(t)`.
    pub fn pmf(&self, t: f64, k: u64, ctl: &SeriesControl) -> Result<f64> {
        Ok(self.pmf_eval(t, k, ctl)?.value)
    }

    pub fn pmf_eval(&self, t: f64, k: u64, ctl: &SeriesControl) -> Result<Evaluation> {
        let finite = self.pmf_finite(t, k)?;
        prefer_finite(ctl, finite, || self.pmf_series(t, k, ctl))
    }

    /// `C(n0,k) Σ_{j=0}^{n0−k} C(n0−k,j) (−1)^j exp{−λt(1 − e^{−μ(k+j)})}`.
    pub fn pmf_finite(&self, t: f64, k: u64) -> Result<Evaluation> {
        self.check(t, k)?;
        let n = self.n0 - k;
        let lt = self.lambda * t;
        let mut acc = CompensatedSum::new();
        for j in 0..=n {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            let rate = -(-self.mu * (k + j) as f64).exp_m1();
            acc.add(sign * binomial(n, j) * (-lt * rate).exp());
        }
        let mut e = acc.evaluation();
        e.value *= binomial(self.n0, k);
        Ok(e)
    }

    /// `Σ_l Pr{D_μ(l) = k} Pr{N_λ(t) = l}`.
    pub fn pmf_series(&self, t: f64, k: u64, ctl: &SeriesControl) -> Result<Evaluation> {
        self.check(t, k)?;
        let outer = self.outer();
        poisson_mixture(self.lambda * t, ctl, |l| linear_death_pmf(&outer, l as f64, k))
    }

    /// `G(u,t) = Σ_{m=0}^{n0} C(n0,m) (−1)^m (1−u)^m exp{−λt(1 − e^{−μm})}`.
    pub fn pgf(&self, t: f64, u: f64, ctl: &SeriesControl) -> Result<f64> {
        self.validate()?;
        check_time(t)?;
        if !(0.0..=1.0).contains(&u) {
            return Err(domain(format!("pgf argument must lie in [0, 1], got {u}")));
        }
        let lt = self.lambda * t;
        let mut acc = CompensatedSum::new();
        for m in 0..=self.n0 {
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            let rate = -(-self.mu * m as f64).exp_m1();
            acc.add(sign * binomial(self.n0, m) * (1.0 - u).powf(m as f64) * (-lt * rate).exp());
        }
        let finite = acc.evaluation();
        let n0 = self.n0 as f64;
        let mu = self.mu;
        Ok(prefer_finite(ctl, finite, || {
            poisson_mixture(lt, ctl, |l| {
                Ok((1.0 - (-mu * l as f64).exp() * (1.0 - u)).powf(n0))
            })
        })?
        .value)
    }

    /// `E Y(t) = n0 e^{λt(e^{−μ} − 1)}`.
    pub fn mean(&self, t: f64) -> Result<f64> {
        self.validate()?;
        check_time(t)?;
        Ok(self.n0 as f64 * (self.lambda * t * (-self.mu).exp_m1()).exp())
    }

    /// `n0(n0−1) e^{λt(e^{−2μ}−1)} − n0² e^{2λt(e^{−μ}−1)} + n0 e^{λt(e^{−μ}−1)}`.
    pub fn variance(&self, t: f64) -> Result<f64> {
        self.validate()?;
        check_time(t)?;
        let lt = self.lambda * t;
        let n = self.n0 as f64;
        let e1 = (lt * (-self.mu).exp_m1()).exp();
        let e2 = (lt * (-2.0 * self.mu).exp_m1()).exp();
        Ok((n * (n - 1.0) * e2 - n * n * e1 * e1 + n * e1).max(0.0))
    }
}

impl SublinearDeathAtPoisson {
    pub fn new(mu: f64, lambda: f64, n0: u64) -> Result<Self> {
        let m = Self { mu, lambda, n0 };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        check_rate("mu", self.mu)?;
        check_rate("lambda", self.lambda)?;
        check_n0(self.n0)
    }

    fn check(&self, t: f64, k: u64) -> Result<()> {
        self.validate()?;
        check_time(t)?;
        if k > self.n0 {
            return Err(domain(format!("state {k} exceeds n0 = {}", self.n0)));
        }
        Ok(())
    }

    pub fn outer(&self) -> DeathParams {
        DeathParams {
            mu: self.mu,
            n0: self.n0,
        }
    }

    /// `q_k^Ỹ(t)`.
    pub fn pmf(&self, t: f64, k: u64, ctl: &SeriesControl) -> Result<f64> {
        Ok(self.pmf_eval(t, k, ctl)?.value)
    }

    pub fn pmf_eval(&self, t: f64, k: u64, ctl: &SeriesControl) -> Result<Evaluation> {
        let finite = self.pmf_finite(t, k)?;
        prefer_finite(ctl, finite, || self.pmf_series(t, k, ctl))
    }

    /// For `k ≥ 1`: `e^{−λt} Σ_{j=0}^{n0−k} C(n0−k,j) (−1)^j exp{λt e^{−μ(1+j)}}`;
    /// for `k = 0`: `e^{−λt} Σ_{j=0}^{n0} C(n0,j) (−1)^j exp{λt e^{−μj}}`.
    pub fn pmf_finite(&self, t: f64, k: u64) -> Result<Evaluation> {
        self.check(t, k)?;
        let lt = self.lambda * t;
        let (n, shift) = if k == 0 { (self.n0, 0) } else { (self.n0 - k, 1) };
        let mut acc = CompensatedSum::new();
        for j in 0..=n {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            // e^{−λt} folded into the exponent.
            let rate = -(-self.mu * (j + shift) as f64).exp_m1();
            acc.add(sign * binomial(n, j) * (-lt * rate).exp());
        }
        Ok(acc.evaluation())
    }

    /// `Σ_l Pr{D̃_μ(l) = k} Pr{N_λ(t) = l}`.
    pub fn pmf_series(&self, t: f64, k: u64, ctl: &SeriesControl) -> Result<Evaluation> {
        self.check(t, k)?;
        let outer = self.outer();
        poisson_mixture(self.lambda * t, ctl, |l| sublinear_death_pmf(&outer, l as f64, k))
    }

    /// `e^{−λt} Σ_j {n0 + 1 − e^{μj}[1 − (1 − e^{−μj})^{n0+1}]} (λt)^j / j!`.
    pub fn mean(&self, t: f64, ctl: &SeriesControl) -> Result<f64> {
        self.validate()?;
        check_time(t)?;
        let mu = self.mu;
        let n0 = self.n0;
        Ok(poisson_mixture(self.lambda * t, ctl, |j| Ok(sublinear_mean_at(mu * j as f64, n0)))?.value)
    }

    /// `n0 − (1 − e^{−λt(1−e^{−μ})})`, an upper bound on the mean.
    pub fn mean_upper_bound(&self, t: f64) -> Result<f64> {
        self.validate()?;
        check_time(t)?;
        Ok(self.n0 as f64 + (-self.lambda * t * -(-self.mu).exp_m1()).exp_m1())
    }
}

impl ComposedModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            ComposedModel::IteratedBirth(m) => m.validate(),
            ComposedModel::BirthAtPoisson(m) => m.validate(),
            ComposedModel::DeathAtPoisson(m) => m.validate(),
            ComposedModel::SublinearDeathAtPoisson(m) => m.validate(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ComposedModel::IteratedBirth(_) => "iterated-birth",
            ComposedModel::BirthAtPoisson(_) => "birth-at-poisson",
            ComposedModel::DeathAtPoisson(_) => "death-at-poisson",
            ComposedModel::SublinearDeathAtPoisson(_) => "sublinear-death-at-poisson",
        }
    }

    pub fn lambda(&self) -> f64 {
        match self {
            ComposedModel::IteratedBirth(m) => m.lambda,
            ComposedModel::BirthAtPoisson(m) => m.lambda,
            ComposedModel::DeathAtPoisson(m) => m.lambda,
            ComposedModel::SublinearDeathAtPoisson(m) => m.lambda,
        }
    }

    /// Smallest state in the support.
    pub fn min_state(&self) -> u64 {
        match self {
            ComposedModel::IteratedBirth(_) => 1,
            ComposedModel::BirthAtPoisson(m) => m.n0,
            _ => 0,
        }
    }

    /// Largest state, `None` for the birth models.
    pub fn max_state(&self) -> Option<u64> {
        match self {
            ComposedModel::DeathAtPoisson(m) => Some(m.n0),
            ComposedModel::SublinearDeathAtPoisson(m) => Some(m.n0),
            _ => None,
        }
    }

    /// True for the birth models (nondecreasing paths).
    pub fn is_increasing(&self) -> bool {
        self.max_state().is_none()
    }

    pub fn pmf(&self, t: f64, k: u64, ctl: &SeriesControl) -> Result<f64> {
        match self {
            ComposedModel::IteratedBirth(m) => m.pmf(t, k, ctl),
            ComposedModel::BirthAtPoisson(m) => m.pmf(t, k, ctl),
            ComposedModel::DeathAtPoisson(m) => m.pmf(t, k, ctl),
            ComposedModel::SublinearDeathAtPoisson(m) => m.pmf(t, k, ctl),
        }
    }

    /// Full table. Unbounded supports are enumerated until the cumulative
    /// mass reaches `1 − rel_tol` or `k` reaches [`SUPPORT_CAP`].
    pub fn pmf_table(&self, t: f64, ctl: &SeriesControl) -> Result<PmfTable> {
        self.validate()?;
        check_time(t)?;
        ctl.validate()?;
        let lo = self.min_state();
        let mut entries = Vec::new();
        let mut acc = CompensatedSum::new();
        match self.max_state() {
            Some(hi) => {
                for k in lo..=hi {
                    let p = self.pmf(t, k, ctl)?.max(0.0);
                    acc.add(p);
                    entries.push((k, p));
                }
            }
            None => {
                let mut k = lo;
                while k <= SUPPORT_CAP {
                    let p = self.pmf(t, k, ctl)?.max(0.0);
                    acc.add(p);
                    entries.push((k, p));
                    if acc.value() >= 1.0 - ctl.rel_tol {
                        break;
                    }
                    k += 1;
                }
            }
        }
        let truncation_mass = match self.max_state() {
            Some(_) => 0.0,
            None => (1.0 - acc.value()).max(0.0),
        };
        Ok(PmfTable {
            t,
            entries,
            truncation_mass,
        })
    }

    /// Table restricted to `k ∈ [kmin, kmax]` (clipped to the support).
    pub fn pmf_table_range(&self, t: f64, kmin: u64, kmax: u64, ctl: &SeriesControl) -> Result<PmfTable> {
        self.validate()?;
        check_time(t)?;
        if kmin > kmax {
            return Err(invalid(format!("empty state range {kmin}..={kmax}")));
        }
        let lo = kmin.max(self.min_state());
        let hi = self.max_state().map_or(kmax, |h| kmax.min(h));
        let mut entries = Vec::new();
        let mut acc = CompensatedSum::new();
        for k in lo..=hi {
            let p = self.pmf(t, k, ctl)?.max(0.0);
            acc.add(p);
            entries.push((k, p));
        }
        Ok(PmfTable {
            t,
            entries,
            truncation_mass: (1.0 - acc.value()).max(0.0),
        })
    }

    pub fn mean(&self, t: f64, ctl: &SeriesControl) -> Result<f64> {
        match self {
            ComposedModel::BirthAtPoisson(m) => m.mean(t),
            ComposedModel::DeathAtPoisson(m) => m.mean(t),
            ComposedModel::SublinearDeathAtPoisson(m) => m.mean(t, ctl),
            ComposedModel::IteratedBirth(m) => {
                // E Z(t) = E e^{α B_λ(t)}, a geometric mixture.
                m.validate()?;
                check_time(t)?;
                let q = (-m.lambda * t).exp();
                let ea = m.alpha.exp();
                let r = ea * (1.0 - q);
                if r >= 1.0 {
                    return Err(Error::Overflow {
                        exponent: f64::INFINITY,
                        limit: crate::series::EXP_GUARD,
                    });
                }
                Ok(q * ea / (1.0 - r))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;
    use crate::series::CANCELLATION_LIMIT;

    fn ctl() -> SeriesControl {
        SeriesControl::default()
    }

    #[test]
    fn q1z_closed_form() {
        let m = IteratedBirth::new(LN_2, LN_2).unwrap();
        let q = m.pmf(1.0, 1, &ctl()).unwrap();
        assert!((q - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn q2z_ratio_and_bound() {
        for &(a, l, t) in &[(0.3, 1.0, 0.5), (1.2, 0.4, 2.0), (LN_2, 2.0, 1.0)] {
            let m = IteratedBirth::new(a, l).unwrap();
            let q1 = m.pmf(t, 1, &ctl()).unwrap();
            let q2 = m.pmf(t, 2, &ctl()).unwrap();
            let p = 1.0 - (-l * t).exp();
            let want = q1 * (1.0 - (-a).exp()) / (1.0 - (-2.0 * a).exp() * p);
            assert!((q2 - want).abs() < 1e-14);
            assert!(q2 <= q1);
        }
    }

    #[test]
    fn iterated_birth_starts_at_b_alpha_one() {
        let m = IteratedBirth::new(0.7, 1.2).unwrap();
        let b = BirthParams::new(0.7, 1).unwrap();
        for k in 1..30 {
            let q = m.pmf(0.0, k, &ctl()).unwrap();
            let w = yule_pmf(&b, 1.0, k).unwrap();
            assert!((q - w).abs() <= 1e-12 * w, "k={k}");
        }
    }

    #[test]
    fn iterated_birth_forms_agree() {
        for &(a, l, t) in &[(0.5, 1.0, 1.0), (1.5, 0.3, 2.0), (0.2, 2.0, 0.1)] {
            let m = IteratedBirth::new(a, l).unwrap();
            for k in 1..=12 {
                let f = m.pmf_finite(t, k).unwrap();
                let s = m.pmf_series(t, k, &ctl()).unwrap();
                if f.condition < 1e4 {
                    assert!((f.value - s.value).abs() <= 1e-12 * s.value.max(1e-3), "{a} {l} {t} {k}");
                }
            }
        }
    }

    #[test]
    fn iterated_birth_falls_back_when_cancelling() {
        let m = IteratedBirth::new(0.3, 1.0).unwrap();
        let e = m.pmf_eval(1.0, 60, &ctl()).unwrap();
        assert_eq!(e.method, Method::Series);
        assert!(m.pmf_finite(1.0, 60).unwrap().condition > CANCELLATION_LIMIT);
    }

    #[test]
    fn birth_at_poisson_first_state() {
        let m = BirthAtPoisson::new(0.6, 1.3, 3).unwrap();
        let q = m.pmf(0.8, 3, &ctl()).unwrap();
        let want = (-1.3 * 0.8 * (1.0 - (-0.6f64 * 3.0).exp())).exp();
        assert!((q - want).abs() < 1e-15);
        assert_eq!(m.pmf(0.0, 3, &ctl()).unwrap(), 1.0);
        assert!(m.pmf(0.0, 4, &ctl()).unwrap().abs() < 1e-15);
        assert!(m.pmf(1.0, 2, &ctl()).is_err());
    }

    #[test]
    fn birth_at_poisson_forms_agree() {
        let m = BirthAtPoisson::new(0.5, 1.0, 1).unwrap();
        let f = m.pmf_finite(2.0, 4).unwrap().value;
        let s = m.pmf_series(2.0, 4, &ctl()).unwrap().value;
        assert!((f - s).abs() < 1e-10);
        let m3 = BirthAtPoisson::new(0.8, 0.7, 3).unwrap();
        for k in 3..15 {
            let f = m3.pmf_finite(1.5, k).unwrap().value;
            let s = m3.pmf_series(1.5, k, &ctl()).unwrap().value;
            assert!((f - s).abs() < 1e-10, "k={k}");
        }
    }

    #[test]
    fn birth_at_poisson_moments() {
        let m = BirthAtPoisson::new(0.3, 1.0, 1).unwrap();
        assert_eq!(BirthAtPoisson::new(0.3, 1.0, 4).unwrap().mean(0.0).unwrap(), 4.0);
        assert_eq!(BirthAtPoisson::new(0.3, 1.0, 4).unwrap().variance(0.0).unwrap(), 0.0);
        let f1 = m.factorial_moment(1.0, 1).unwrap();
        let f2 = m.factorial_moment(1.0, 2).unwrap();
        let mean = m.mean(1.0).unwrap();
        assert!((f1 - mean).abs() < 1e-12);
        assert!((f2 + f1 - f1 * f1 - m.variance(1.0).unwrap()).abs() < 1e-10);
        for r in 2..6 {
            assert!(m.factorial_moment(0.0, r).unwrap().abs() < 1e-12);
        }
        assert_eq!(m.factorial_moment(0.0, 1).unwrap(), 1.0);
        assert!(BirthAtPoisson::new(0.3, 1.0, 2).unwrap().factorial_moment(1.0, 2).is_err());
    }

    #[test]
    fn birth_at_poisson_variance_for_larger_populations() {
        // Direct summation against the pmf distinguishes the n0² and n0 terms.
        let m = BirthAtPoisson::new(0.2, 1.0, 3).unwrap();
        let t = 0.7;
        let (mut s1, mut s2) = (CompensatedSum::new(), CompensatedSum::new());
        for k in 3..4000 {
            let q = m.pmf(t, k, &ctl()).unwrap();
            s1.add(k as f64 * q);
            s2.add((k * k) as f64 * q);
        }
        let mean = s1.value();
        let var = s2.value() - mean * mean;
        assert!((mean - m.mean(t).unwrap()).abs() < 1e-9);
        assert!((var - m.variance(t).unwrap()).abs() < 1e-8, "{var} vs {}", m.variance(t).unwrap());
    }

    #[test]
    fn variance_overflow_guard() {
        let m = BirthAtPoisson::new(3.0, 10.0, 1).unwrap();
        assert!(matches!(m.variance(2.0), Err(Error::Overflow { .. })));
    }

    #[test]
    fn death_at_poisson_basics() {
        let m = DeathAtPoisson::new(0.5, 1.0, 10).unwrap();
        let top = m.pmf(1.5, 10, &ctl()).unwrap();
        assert!((top - (-1.5 * (1.0 - (-5.0f64).exp())).exp()).abs() < 1e-15);
        let s: f64 = (0..=10).map(|k| m.pmf(1.5, k, &ctl()).unwrap()).sum();
        assert!((s - 1.0).abs() < 1e-11);
        for k in 0..10 {
            assert!(m.pmf(0.0, k, &ctl()).unwrap().abs() < 1e-15);
        }
        assert_eq!(m.pmf(0.0, 10, &ctl()).unwrap(), 1.0);
        assert!(m.pmf(1.0, 11, &ctl()).is_err());
    }

    #[test]
    fn death_at_poisson_large_population_switches_route() {
        let m = DeathAtPoisson::new(0.5, 1.0, 60).unwrap();
        let e = m.pmf_eval(3.0, 5, &ctl()).unwrap();
        assert_eq!(e.method, Method::Series);
        let t = ComposedModel::DeathAtPoisson(m).pmf_table(3.0, &ctl()).unwrap();
        assert!((t.total() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn death_at_poisson_pgf() {
        let m = DeathAtPoisson::new(0.5, 1.0, 4).unwrap();
        assert!((m.pgf(1.0, 1.0, &ctl()).unwrap() - 1.0).abs() < 1e-15);
        let m2 = DeathAtPoisson::new(0.5, 1.0, 2).unwrap();
        assert!((m2.pgf(0.0, 0.3, &ctl()).unwrap() - 0.09).abs() < 1e-15);
        for &u in &[0.0f64, 0.25, 0.5, 0.75, 1.0] {
            let direct: f64 = (0..=4)
                .map(|k| u.powi(k as i32) * m.pmf(1.0, k, &ctl()).unwrap())
                .sum();
            assert!((m.pgf(1.0, u, &ctl()).unwrap() - direct).abs() < 1e-12);
        }
        // d/du at u = 1 equals the mean.
        let h = 1e-6;
        let slope = (m.pgf(1.0, 1.0, &ctl()).unwrap() - m.pgf(1.0, 1.0 - h, &ctl()).unwrap()) / h;
        assert!((slope - m.mean(1.0).unwrap()).abs() < 1e-5);
    }

    #[test]
    fn death_at_poisson_moments() {
        let m = DeathAtPoisson::new(0.7, 1.4, 1).unwrap();
        for &t in &[0.0, 0.5, 2.0] {
            let mean = m.mean(t).unwrap();
            assert!((m.variance(t).unwrap() - (mean - mean * mean)).abs() < 1e-15);
        }
        let m5 = DeathAtPoisson::new(0.5, 1.0, 5).unwrap();
        let table = ComposedModel::DeathAtPoisson(m5).pmf_table(2.0, &ctl()).unwrap();
        let mean = table.mean();
        let second: f64 = table.entries.iter().map(|&(k, p)| (k * k) as f64 * p).sum();
        assert!((mean - m5.mean(2.0).unwrap()).abs() < 1e-12);
        assert!((second - mean * mean - m5.variance(2.0).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn sublinear_at_poisson_against_conditioning() {
        let m = SublinearDeathAtPoisson::new(0.7, 1.0, 5).unwrap();
        for k in 0..=5 {
            let f = m.pmf_finite(1.0, k).unwrap().value;
            let s = m.pmf_series(1.0, k, &ctl()).unwrap().value;
            assert!((f - s).abs() < 1e-10, "k={k}");
        }
        assert_eq!(m.pmf(0.0, 5, &ctl()).unwrap(), 1.0);
    }

    #[test]
    fn sublinear_extinction_behaviour() {
        let mut prev = 0.0;
        for &t in &[0.5, 1.0, 2.0, 5.0, 20.0, 100.0] {
            let q0 = SublinearDeathAtPoisson::new(0.5, 1.0, 4).unwrap().pmf(t, 0, &ctl()).unwrap();
            assert!(q0 > prev);
            prev = q0;
            let q0_big = SublinearDeathAtPoisson::new(0.5, 1.0, 6).unwrap().pmf(t, 0, &ctl()).unwrap();
            assert!(q0_big < q0 || (t >= 100.0 && q0_big <= q0));
        }
        assert!(prev > 0.999);
    }

    #[test]
    fn sublinear_at_poisson_mean() {
        let m = SublinearDeathAtPoisson::new(0.5, 1.0, 3).unwrap();
        assert_eq!(m.mean(0.0, &ctl()).unwrap(), 3.0);
        let direct: f64 = (0..=3).map(|k| k as f64 * m.pmf(2.0, k, &ctl()).unwrap()).sum();
        assert!((m.mean(2.0, &ctl()).unwrap() - direct).abs() < 1e-10);
        for i in 0..40 {
            let t = 0.25 * i as f64;
            assert!(m.mean(t, &ctl()).unwrap() <= m.mean_upper_bound(t).unwrap() + 1e-12);
        }
    }

    #[test]
    fn tables_are_normalised() {
        let models = [
            ComposedModel::IteratedBirth(IteratedBirth::new(0.5, 1.0).unwrap()),
            ComposedModel::BirthAtPoisson(BirthAtPoisson::new(0.5, 1.0, 2).unwrap()),
            ComposedModel::DeathAtPoisson(DeathAtPoisson::new(0.5, 1.0, 8).unwrap()),
            ComposedModel::SublinearDeathAtPoisson(SublinearDeathAtPoisson::new(0.5, 1.0, 8).unwrap()),
        ];
        for m in &models {
            let t = m.pmf_table(1.0, &ctl()).unwrap();
            assert!((t.total() - 1.0).abs() < 1e-10, "{}", m.name());
            assert!(t.entries.windows(2).all(|w| w[0].0 < w[1].0));
        }
    }

    #[test]
    fn iterated_birth_mean_matches_table() {
        let m = ComposedModel::IteratedBirth(IteratedBirth::new(0.2, 1.0).unwrap());
        let table = m.pmf_table(0.5, &ctl()).unwrap();
        let want = m.mean(0.5, &ctl()).unwrap();
        assert!(table.truncation_mass < 1e-10);
        assert!((table.mean() - want).abs() / want < 1e-6);
    }

    #[test]
    fn serde_tagging() {
        let m = ComposedModel::DeathAtPoisson(DeathAtPoisson::new(0.5, 1.0, 5).unwrap());
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"model":"death-at-poisson","mu":0.5,"lambda":1.0,"n0":5}"#);
        let back: ComposedModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }
}
