//! Runtime certification of the closed forms: forward equations, jump
//! kernels and structural identities.

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::composed::{DeathAtPoisson, IteratedBirth};
use crate::error::{invalid, Result};
use crate::laws::{binomial, linear_death_pmf, sublinear_death_pmf, yule_pmf, BirthParams, DeathParams};
use crate::passage::{birth_at_poisson_g, birth_at_poisson_hitprob, birth_power_series, iterated_birth_hitprob};
use crate::series::{geometric_tail, sum_positive_series, SeriesControl};
use crate::sim::kernel::{birth_step_pmf, linear_death_step_pmf, sublinear_death_step_pmf};

/// Result of checking a closed-form law against its forward equations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeCheckReport {
    pub model: String,
    pub params: serde_json::Value,
    pub grid: Vec<f64>,
    /// Largest `|d/dt closed form − right-hand side|`, derivative taken analytically.
    pub max_residual: f64,
    /// Largest gap between the integrated system and the closed form.
    pub max_solution_gap: f64,
    pub pass: bool,
    /// Offending `(t, k)` pairs.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<String>,
    /// Ratio of finite-difference residuals at steps `h` and `h/2` (≈ 4).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fd_ratio: Option<f64>,
    /// Largest absolute column sum of the generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_column_sum: Option<f64>,
}

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub pass: bool,
    pub max_deviation: f64,
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<OdeCheckReport>,
}

impl CheckOutcome {
    fn new(name: impl Into<String>, max_deviation: f64, tolerance: f64, failures: Vec<String>) -> Self {
        Self {
            name: name.into(),
            pass: max_deviation <= tolerance && failures.is_empty(),
            max_deviation,
            tolerance,
            failures,
            report: None,
        }
    }
}

pub const RESIDUAL_TOL: f64 = 1e-8;
pub const LINEAR_DEATH_GAP_TOL: f64 = 1e-8;
pub const SUBORDINATED_GAP_TOL: f64 = 1e-7;
pub const KERNEL_TOL: f64 = 1e-13;
pub const IDENTITY_TOL: f64 = 1e-10;

/// `n` equally spaced points in `(0, t_max]`.
pub fn uniform_grid(t_max: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|i| t_max * i as f64 / n as f64).collect()
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.iter().any(|&t| !(t.is_finite() && t > 0.0)) {
        return Err(invalid("grid points must be positive and finite"));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("grid must be strictly increasing"));
    }
    Ok(())
}

fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(r, v)| r * v).sum()).collect()
}

fn axpy(x: &[f64], a: f64, y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(u, v)| u + a * v).collect()
}

/// Classical RK4 for `q' = A q`, returning the solution at each grid point.
fn rk4_linear(a: &[Vec<f64>], q0: &[f64], grid: &[f64], steps_per_unit: usize) -> Vec<Vec<f64>> {
    let mut q = q0.to_vec();
    let mut t0 = 0.0;
    let mut out = Vec::with_capacity(grid.len());
    for &t1 in grid {
        let n = (((t1 - t0) * steps_per_unit as f64).ceil() as usize).max(1);
        let h = (t1 - t0) / n as f64;
        for _ in 0..n {
            let k1 = mat_vec(a, &q);
            let k2 = mat_vec(a, &axpy(&q, h / 2.0, &k1));
            let k3 = mat_vec(a, &axpy(&q, h / 2.0, &k2));
            let k4 = mat_vec(a, &axpy(&q, h, &k3));
            for i in 0..q.len() {
                q[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        out.push(q.clone());
        t0 = t1;
    }
    out
}

/// Halves the RK4 step until the grid solution moves by less than 1e−10.
fn converged_rk4(a: &[Vec<f64>], q0: &[f64], grid: &[f64]) -> Vec<Vec<f64>> {
    let mut steps = 32;
    let mut prev = rk4_linear(a, q0, grid, steps);
    while steps < 1 << 16 {
        steps *= 2;
        let next = rk4_linear(a, q0, grid, steps);
        let change = prev
            .iter()
            .flatten()
            .zip(next.iter().flatten())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        prev = next;
        if change < 1e-10 {
            break;
        }
    }
    prev
}

fn indicator(n0: u64) -> Vec<f64> {
    let mut q = vec![0.0; n0 as usize + 1];
    q[n0 as usize] = 1.0;
    q
}

/// Checks the linear death law against
/// `dp_k/dt = −μk p_k + μ(k+1) p_{k+1}`, `dp_{n0}/dt = −μ n0 p_{n0}`.
pub fn check_linear_death_ode(p: &DeathParams, grid: &[f64]) -> Result<OdeCheckReport> {
    p.validate()?;
    check_grid(grid)?;
    let n0 = p.n0;
    let mu = p.mu;
    let law = |t: f64, k: u64| linear_death_pmf(p, t, k);
    let rhs = |t: f64, k: u64| -> Result<f64> {
        let up = if k < n0 { mu * (k + 1) as f64 * law(t, k + 1)? } else { 0.0 };
        Ok(-mu * k as f64 * law(t, k)? + up)
    };
    let mut max_residual: f64 = 0.0;
    let mut failures = Vec::new();
    for &t in grid {
        let e = (-mu * t).exp();
        for k in 0..=n0 {
            let pk = law(t, k)?;
            let d = pk * (-mu * k as f64 + (n0 - k) as f64 * mu * e / -(-mu * t).exp_m1());
            let r = (d - rhs(t, k)?).abs();
            if r > 1e-10 {
                failures.push(format!("residual {r:.3e} at t={t}, k={k}"));
            }
            max_residual = max_residual.max(r);
        }
    }
    let fd = |h: f64| -> Result<f64> {
        let mut m: f64 = 0.0;
        for &t in grid {
            if t <= h {
                continue;
            }
            for k in 0..=n0 {
                let d = (law(t + h, k)? - law(t - h, k)?) / (2.0 * h);
                m = m.max((d - rhs(t, k)?).abs());
            }
        }
        Ok(m)
    };
    let h = 1e-2;
    let (r1, r2) = (fd(h)?, fd(h / 2.0)?);
    let fd_ratio = if r2 > 0.0 { r1 / r2 } else { 4.0 };

    let dim = n0 as usize + 1;
    let mut a = vec![vec![0.0; dim]; dim];
    for k in 0..dim {
        a[k][k] = -mu * k as f64;
        if k + 1 < dim {
            a[k][k + 1] = mu * (k + 1) as f64;
        }
    }
    let sol = converged_rk4(&a, &indicator(n0), grid);
    let mut gap: f64 = 0.0;
    for (q, &t) in sol.iter().zip(grid) {
        for k in 0..=n0 {
            let g = (q[k as usize] - law(t, k)?).abs();
            if g > LINEAR_DEATH_GAP_TOL {
                failures.push(format!("solution gap {g:.3e} at t={t}, k={k}"));
            }
            gap = gap.max(g);
        }
    }
    let pass = failures.is_empty() && (3.5..=4.5).contains(&fd_ratio);
    Ok(OdeCheckReport {
        model: "linear-death".into(),
        params: json!({ "mu": mu, "n0": n0 }),
        grid: grid.to_vec(),
        max_residual,
        max_solution_gap: gap,
        pass,
        failures,
        fd_ratio: Some(fd_ratio),
        generator_column_sum: None,
    })
}

/// Generator of the composed death chain:
/// `G[k][s] = λ C(s,k) (1−e^{−μ})^{s−k} e^{−μk}` for `s ≥ k`, minus `λ` on the diagonal.
pub fn death_at_poisson_generator(m: &DeathAtPoisson) -> Vec<Vec<f64>> {
    let dim = m.n0 as usize + 1;
    let q = -(-m.mu).exp_m1();
    let mut g = vec![vec![0.0; dim]; dim];
    for (k, row) in g.iter_mut().enumerate() {
        for (s, cell) in row.iter_mut().enumerate().skip(k) {
            *cell = m.lambda * binomial(s as u64, k as u64) * q.powi((s - k) as i32) * (-m.mu * k as f64).exp();
        }
        row[k] -= m.lambda;
    }
    g
}

/// Checks the finite alternating form of `q_k^Y` against
/// `dq_k/dt = λ e^{−μk} Σ_r C(r+k,r) q_{r+k} (1−e^{−μ})^r − λ q_k`.
pub fn check_death_at_poisson_ode(m: &DeathAtPoisson, grid: &[f64]) -> Result<OdeCheckReport> {
    m.validate()?;
    check_grid(grid)?;
    if m.n0 > 30 {
        return Err(invalid("the alternating closed form is only certified for n0 ≤ 30"));
    }
    let n0 = m.n0;
    let g = death_at_poisson_generator(m);
    let col_sum = (0..=n0 as usize)
        .map(|s| g.iter().map(|row| row[s]).sum::<f64>().abs())
        .fold(0.0, f64::max);
    let mut failures = Vec::new();
    for (k, row) in g.iter().enumerate() {
        for (s, &v) in row.iter().enumerate() {
            if s != k && v < 0.0 {
                failures.push(format!("negative off-diagonal entry G[{k}][{s}] = {v}"));
            }
        }
    }
    let closed = |t: f64| -> Result<Vec<f64>> { (0..=n0).map(|k| Ok(m.pmf_finite(t, k)?.value)).collect() };
    // Term-by-term derivative of C(n0,k) Σ_j C(n0−k,j)(−1)^j exp{−λt c_j}, c_j = 1 − e^{−μ(k+j)}.
    let deriv = |t: f64, k: u64| -> f64 {
        let n = n0 - k;
        let mut s = 0.0;
        for j in 0..=n {
            let c = -(-m.mu * (k + j) as f64).exp_m1();
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            s += sign * binomial(n, j) * -m.lambda * c * (-m.lambda * t * c).exp();
        }
        binomial(n0, k) * s
    };
    let mut max_residual: f64 = 0.0;
    for &t in grid {
        let q = closed(t)?;
        let rhs = mat_vec(&g, &q);
        for k in 0..=n0 {
            let r = (deriv(t, k) - rhs[k as usize]).abs();
            if r > RESIDUAL_TOL {
                failures.push(format!("residual {r:.3e} at t={t}, k={k}"));
            }
            max_residual = max_residual.max(r);
        }
    }
    let sol = converged_rk4(&g, &indicator(n0), grid);
    let mut gap: f64 = 0.0;
    for (q, &t) in sol.iter().zip(grid) {
        let c = closed(t)?;
        for k in 0..=n0 as usize {
            let d = (q[k] - c[k]).abs();
            if d > SUBORDINATED_GAP_TOL {
                failures.push(format!("solution gap {d:.3e} at t={t}, k={k}"));
            }
            gap = gap.max(d);
        }
    }
    let pass = failures.is_empty() && col_sum <= 1e-12;
    Ok(OdeCheckReport {
        model: "death-at-poisson".into(),
        params: json!({ "mu": m.mu, "lambda": m.lambda, "n0": n0 }),
        grid: grid.to_vec(),
        max_residual,
        max_solution_gap: gap,
        pass,
        failures,
        fd_ratio: None,
        generator_column_sum: Some(col_sum),
    })
}

/// Compares the one-event landing law of the composed death chain,
/// `C(r+k,r)(1−e^{−μ})^r e^{−μk}`, with the simulator's binomial step kernel
/// from every start state `s ≤ n0`.
pub fn check_jump_kernel(m: &DeathAtPoisson) -> Result<CheckOutcome> {
    m.validate()?;
    let q = -(-m.mu).exp_m1();
    let mut dev: f64 = 0.0;
    let mut failures = Vec::new();
    for s in 0..=m.n0 {
        let mut total = 0.0;
        for k in 0..=s {
            let r = s - k;
            // Coefficient of λ dt, with the "no event" part removed from r = 0.
            let coef = if r == 0 {
                (-m.mu * s as f64).exp()
            } else {
                let mut c = 1.0;
                for i in 0..r {
                    c = c * (s - i) as f64 / (i + 1) as f64;
                }
                c * q.powi(r as i32) * (-m.mu * k as f64).exp()
            };
            total += coef;
            let d = (coef - linear_death_step_pmf(m.mu, s, k)?).abs();
            if d > KERNEL_TOL {
                failures.push(format!("landing {s} -> {k} differs by {d:.3e}"));
            }
            dev = dev.max(d);
        }
        dev = dev.max((total - 1.0).abs());
    }
    Ok(CheckOutcome::new(format!("jump-kernel(mu={}, n0={})", m.mu, m.n0), dev, KERNEL_TOL, failures))
}

/// The birth step kernel against the direct negative-binomial product, and
/// the sublinear step from the top state against the unit-time law.
pub fn check_step_kernels(alpha: f64, mu: f64, n0: u64) -> Result<CheckOutcome> {
    let mut dev: f64 = 0.0;
    let pa = (-alpha).exp();
    for m in 1..=n0 {
        for k in m..m + 40 {
            let mut c = 1.0;
            for i in 0..k - m {
                c = c * (k - 1 - i) as f64 / (i + 1) as f64;
            }
            let direct = c * pa.powi(m as i32) * (1.0 - pa).powi((k - m) as i32);
            dev = dev.max((birth_step_pmf(alpha, m, k)? - direct).abs());
        }
    }
    let p = DeathParams::new(mu, n0)?;
    for k in 0..=n0 {
        dev = dev.max((sublinear_death_step_pmf(mu, n0, n0, k)? - sublinear_death_pmf(&p, 1.0, k)?).abs());
    }
    Ok(CheckOutcome::new(
        format!("step-kernels(alpha={alpha}, mu={mu}, n0={n0})"),
        dev,
        KERNEL_TOL,
        Vec::new(),
    ))
}

/// `q_1^Z(t) = E e^{−α B_λ(t)} = Σ_j e^{−αj} Pr{B_λ(t) = j}` on a grid.
pub fn check_q1z_identity(alpha: f64, lambda: f64, grid: &[f64], ctl: &SeriesControl) -> Result<CheckOutcome> {
    let z = IteratedBirth::new(alpha, lambda)?;
    let inner = BirthParams::new(lambda, 1)?;
    let mut dev: f64 = 0.0;
    for &t in grid {
        let closed = (-lambda * t - alpha).exp() / (1.0 - (-alpha).exp() * -(-lambda * t).exp_m1());
        let r = (-alpha).exp() * -(-lambda * t).exp_m1();
        let lead = (-lambda * t - alpha).exp();
        let series = sum_positive_series(
            ctl,
            1,
            |j| (-alpha * j as f64).exp() * yule_pmf(&inner, t, j as u64).unwrap_or(f64::NAN),
            |j| lead * geometric_tail(r, j - 1),
        )?;
        dev = dev.max((closed - series.value).abs());
        dev = dev.max((closed - z.pmf(t, 1, ctl)?).abs());
    }
    Ok(CheckOutcome::new(
        format!("q1-iterated-birth(alpha={alpha}, lambda={lambda})"),
        dev,
        IDENTITY_TOL,
        Vec::new(),
    ))
}

/// `Pr{T_k^X < ∞} − Pr{T_k^Z < ∞} = Pr{B_α(1) = k}`, and the difference
/// decreases strictly in `k`.
pub fn check_difference_identity(alpha: f64, kmax: u64, ctl: &SeriesControl) -> Result<CheckOutcome> {
    let mut dev: f64 = 0.0;
    let mut failures = Vec::new();
    let mut prev = f64::INFINITY;
    for k in 2..=kmax {
        let diff = birth_at_poisson_hitprob(alpha, k, ctl)?.prob - iterated_birth_hitprob(alpha, k, ctl)?.prob;
        let want = (-alpha).exp() * (-(-alpha).exp_m1()).powi(k as i32 - 1);
        dev = dev.max((diff - want).abs());
        if diff >= prev {
            failures.push(format!("difference not decreasing at k={k}"));
        }
        prev = diff;
    }
    Ok(CheckOutcome::new(format!("difference-identity(alpha={alpha})"), dev, IDENTITY_TOL, failures))
}

/// `g_k − g_{k−1} = −Σ_m e^{−2αm}(1−e^{−αm})^{k−2}` and
/// `g_k − g_{k−2} = 2(g_{k−1} − g_{k−2}) + Σ_m e^{−3αm}(1−e^{−αm})^{k−3}`.
pub fn check_g_identities(alpha: f64, kmax: u64, ctl: &SeriesControl) -> Result<CheckOutcome> {
    let mut dev: f64 = 0.0;
    for k in 3..=kmax {
        let gk = birth_at_poisson_g(alpha, k, ctl)?;
        let g1 = birth_at_poisson_g(alpha, k - 1, ctl)?;
        let g2 = birth_at_poisson_g(alpha, k - 2, ctl)?;
        let first = birth_power_series(alpha, 2, k - 2, ctl)?.value;
        let second = birth_power_series(alpha, 3, k - 3, ctl)?.value;
        dev = dev.max((gk - g1 + first).abs());
        dev = dev.max((gk - g2 - 2.0 * (g1 - g2) - second).abs());
    }
    Ok(CheckOutcome::new(format!("g-identities(alpha={alpha})"), dev, IDENTITY_TOL, Vec::new()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    All,
    Ode,
    Identities,
    Kernels,
}

impl FromStr for Suite {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Suite::All),
            "ode" => Ok(Suite::Ode),
            "identities" => Ok(Suite::Identities),
            "kernels" => Ok(Suite::Kernels),
            _ => Err(invalid(format!("unknown suite '{s}' (expected all, ode, identities or kernels)"))),
        }
    }
}

/// Parameters of the ODE checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub mu: f64,
    pub lambda: f64,
    pub n0: u64,
    pub grid_points: usize,
    pub t_max: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            mu: 0.5,
            lambda: 1.0,
            n0: 6,
            grid_points: 50,
            t_max: 3.0,
        }
    }
}

const ALPHA_GRID: [f64; 4] = [0.25, 0.5, 1.0, 2.0];

fn ode_outcome(r: OdeCheckReport, tol: f64) -> CheckOutcome {
    CheckOutcome {
        name: format!("{}-ode", r.model),
        pass: r.pass,
        max_deviation: r.max_solution_gap.max(r.max_residual),
        tolerance: tol,
        failures: Vec::new(),
        report: Some(r),
    }
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions, ctl: &SeriesControl) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    let grid = uniform_grid(opts.t_max, opts.grid_points);
    if matches!(suite, Suite::All | Suite::Ode) {
        let d = DeathParams::new(opts.mu, opts.n0)?;
        out.push(ode_outcome(check_linear_death_ode(&d, &grid)?, LINEAR_DEATH_GAP_TOL));
        let y = DeathAtPoisson::new(opts.mu, opts.lambda, opts.n0)?;
        out.push(ode_outcome(check_death_at_poisson_ode(&y, &grid)?, SUBORDINATED_GAP_TOL));
    }
    if matches!(suite, Suite::All | Suite::Identities) {
        for &a in &ALPHA_GRID {
            out.push(check_difference_identity(a, 20, ctl)?);
            out.push(check_g_identities(a, 20, ctl)?);
        }
        let mut g0 = vec![0.0];
        g0.extend(uniform_grid(5.0, 20));
        out.push(check_q1z_identity(0.3, 2.0, &g0, ctl)?);
        out.push(check_q1z_identity(std::f64::consts::LN_2, 1.0, &[0.0, std::f64::consts::LN_2], ctl)?);
    }
    if matches!(suite, Suite::All | Suite::Kernels) {
        for &(mu, n0) in &[(std::f64::consts::LN_2, 1), (0.7, 4), (0.5, 3), (opts.mu, opts.n0)] {
            out.push(check_jump_kernel(&DeathAtPoisson::new(mu, opts.lambda, n0)?)?);
        }
        out.push(check_step_kernels(0.5, opts.mu, opts.n0)?);
    }
    Ok(out)
}
