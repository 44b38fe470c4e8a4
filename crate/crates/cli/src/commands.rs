use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use popproc_core::composed::{BirthAtPoisson, DeathAtPoisson, IteratedBirth, Process, SublinearDeathAtPoisson};
use popproc_core::laws::{linear_death_pmf, sublinear_death_mean, sublinear_death_pmf, yule_pmf};
use popproc_core::passage::{
    birth_at_poisson_hitprob, death_at_poisson_hitprob, iterated_birth_hitprob, sublinear_downcrossing_survival,
    FptQuery,
};
use popproc_core::sim::{estimate_downcrossing, estimate_fpt, estimate_states, write_paths};
use popproc_core::verify::{run_suite, Suite, VerifyOptions};
use popproc_core::{BirthParams, ComposedModel, DeathParams, Error, HitProbResult, SeriesControl, SimConfig};

use crate::output::{Cell, OutputRecord};

#[derive(Debug)]
pub enum Failure {
    /// Bad flags or parameters (exit 2).
    Input(String),
    /// A check or computation failed (exit 1).
    Check(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Check(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Check(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonConvergence { .. } | Error::Explosion { .. } => Failure::Check(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Check(format!("i/o error: {e}"))
    }
}

pub type CmdResult<T> = Result<T, Failure>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModelKind {
    IteratedBirth,
    BirthAtPoisson,
    DeathAtPoisson,
    SublinearDeathAtPoisson,
    Yule,
    LinearDeath,
    SublinearDeath,
}

#[derive(Debug, Clone, clap::Args)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub model: ModelKind,
    /// Birth rate of the outer Yule process
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    /// Rate of the inner (time-giving) process
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    /// Death rate
    #[arg(long, allow_negative_numbers = true)]
    pub mu: Option<f64>,
    /// Initial population
    #[arg(long, default_value_t = 1)]
    pub n0: u64,
}

fn need(v: Option<f64>, flag: &str, m: ModelKind) -> CmdResult<f64> {
    v.ok_or_else(|| Failure::Input(format!("--{flag} is required for model {}", model_name(m))))
}

fn model_name(m: ModelKind) -> &'static str {
    match m {
        ModelKind::IteratedBirth => "iterated-birth",
        ModelKind::BirthAtPoisson => "birth-at-poisson",
        ModelKind::DeathAtPoisson => "death-at-poisson",
        ModelKind::SublinearDeathAtPoisson => "sublinear-death-at-poisson",
        ModelKind::Yule => "yule",
        ModelKind::LinearDeath => "linear-death",
        ModelKind::SublinearDeath => "sublinear-death",
    }
}

impl ModelArgs {
    pub fn process(&self) -> CmdResult<Process> {
        let m = self.model;
        let p = match m {
            ModelKind::IteratedBirth => Process::Composed(ComposedModel::IteratedBirth(IteratedBirth::new(
                need(self.alpha, "alpha", m)?,
                need(self.lambda, "lambda", m)?,
            )?)),
            ModelKind::BirthAtPoisson => Process::Composed(ComposedModel::BirthAtPoisson(BirthAtPoisson::new(
                need(self.alpha, "alpha", m)?,
                need(self.lambda, "lambda", m)?,
                self.n0,
            )?)),
            ModelKind::DeathAtPoisson => Process::Composed(ComposedModel::DeathAtPoisson(DeathAtPoisson::new(
                need(self.mu, "mu", m)?,
                need(self.lambda, "lambda", m)?,
                self.n0,
            )?)),
            ModelKind::SublinearDeathAtPoisson => Process::Composed(ComposedModel::SublinearDeathAtPoisson(
                SublinearDeathAtPoisson::new(need(self.mu, "mu", m)?, need(self.lambda, "lambda", m)?, self.n0)?,
            )),
            ModelKind::Yule => Process::Yule(BirthParams::new(need(self.alpha, "alpha", m)?, self.n0)?),
            ModelKind::LinearDeath => Process::LinearDeath(DeathParams::new(need(self.mu, "mu", m)?, self.n0)?),
            ModelKind::SublinearDeath => Process::SublinearDeath(DeathParams::new(need(self.mu, "mu", m)?, self.n0)?),
        };
        Ok(p)
    }

    fn echo(&self, r: &mut OutputRecord) {
        r.param("model", model_name(self.model));
        for (name, v) in [("alpha", self.alpha), ("lambda", self.lambda), ("mu", self.mu)] {
            if let Some(v) = v {
                r.param(name, v);
            }
        }
        r.param("n0", self.n0);
    }
}

fn min_state(p: &Process) -> u64 {
    match p {
        Process::Composed(m) => m.min_state(),
        Process::Yule(b) => b.n0,
        Process::LinearDeath(_) | Process::SublinearDeath(_) => 0,
    }
}

fn max_state(p: &Process) -> Option<u64> {
    match p {
        Process::Composed(m) => m.max_state(),
        Process::Yule(_) => None,
        Process::LinearDeath(d) | Process::SublinearDeath(d) => Some(d.n0),
    }
}

fn exact_pmf(p: &Process, t: f64, k: u64, ctl: &SeriesControl) -> popproc_core::Result<f64> {
    match p {
        Process::Composed(m) => m.pmf(t, k, ctl),
        Process::Yule(b) if k < b.n0 => Ok(0.0),
        Process::Yule(b) => yule_pmf(b, t, k),
        Process::LinearDeath(_) | Process::SublinearDeath(_) if Some(k) > max_state(p) => Ok(0.0),
        Process::LinearDeath(d) => linear_death_pmf(d, t, k),
        Process::SublinearDeath(d) => sublinear_death_pmf(d, t, k),
    }
}

fn exact_mean(p: &Process, t: f64, ctl: &SeriesControl) -> Option<f64> {
    match p {
        Process::Composed(m) => m.mean(t, ctl).ok().filter(|x| x.is_finite()),
        Process::Yule(b) => Some(b.n0 as f64 * (b.alpha * t).exp()),
        Process::LinearDeath(d) => Some(d.n0 as f64 * (-d.mu * t).exp()),
        Process::SublinearDeath(d) => sublinear_death_mean(d, t).ok(),
    }
}

pub fn pmf(
    cmd: &str,
    model: &ModelArgs,
    t: f64,
    kmin: Option<u64>,
    kmax: Option<u64>,
    ctl: &SeriesControl,
) -> CmdResult<OutputRecord> {
    let p = model.process()?;
    let mut r = OutputRecord::new(cmd, &["k", "prob"]);
    model.echo(&mut r);
    r.param("t", t);
    r.tolerances(ctl);
    let (entries, truncation) = match (&p, kmin, kmax) {
        (Process::Composed(m), None, None) => {
            let table = m.pmf_table(t, ctl)?;
            (table.entries, table.truncation_mass)
        }
        _ => {
            let lo = kmin.unwrap_or(0).max(min_state(&p));
            let hi = match (kmax, max_state(&p)) {
                (Some(k), Some(h)) => k.min(h),
                (Some(k), None) => k,
                (None, Some(h)) => h,
                (None, None) => return Err(Failure::Input("--kmax is required for an unbounded support".into())),
            };
            if lo > hi {
                return Err(Failure::Input(format!("empty state range {lo}..={hi}")));
            }
            let entries = (lo..=hi)
                .map(|k| Ok((k, exact_pmf(&p, t, k, ctl)?)))
                .collect::<popproc_core::Result<Vec<_>>>()?;
            let listed: f64 = entries.iter().map(|e| e.1).sum();
            (entries, (1.0 - listed).max(0.0))
        }
    };
    for (k, prob) in entries {
        r.push(vec![k.into(), prob.into()]);
    }
    if max_state(&p).is_none() {
        r.footer.push(("truncation_mass".into(), truncation.into()));
    }
    Ok(r)
}

/// Parses `2,3,4`, `0..19` (inclusive) or a mix such as `2..5,8`.
pub fn parse_levels(text: &str) -> CmdResult<Vec<u64>> {
    let bad = || Failure::Input(format!("invalid level list '{text}'"));
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match part.split_once("..") {
            Some((a, b)) => {
                let a: u64 = a.trim().parse().map_err(|_| bad())?;
                let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

pub fn parse_times(text: &str) -> CmdResult<Vec<f64>> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| Failure::Input(format!("invalid time list '{text}'")))
}

/// `alpha=0.25,0.5,1` or `n0=5,10,20`.
pub fn parse_sweep(text: &str) -> CmdResult<(String, Vec<f64>)> {
    let (name, values) = text
        .split_once('=')
        .ok_or_else(|| Failure::Input(format!("--sweep expects name=v1,v2,..., got '{text}'")))?;
    let name = name.trim();
    if !["alpha", "mu", "n0"].contains(&name) {
        return Err(Failure::Input(format!("cannot sweep '{name}'; use alpha, mu or n0")));
    }
    let values = parse_times(values)?;
    if name == "n0" && values.iter().any(|v| v.fract() != 0.0 || *v < 1.0) {
        return Err(Failure::Input("n0 sweep values must be positive integers".into()));
    }
    Ok((name.to_string(), values))
}

fn hitprob_one(m: &ModelArgs, k: u64, ctl: &SeriesControl) -> CmdResult<HitProbResult> {
    let kind = m.model;
    let r = match kind {
        ModelKind::IteratedBirth => iterated_birth_hitprob(need(m.alpha, "alpha", kind)?, k, ctl)?,
        ModelKind::BirthAtPoisson => {
            if m.n0 != 1 {
                return Err(Failure::Input("hitting probabilities of birth-at-poisson need --n0 1".into()));
            }
            birth_at_poisson_hitprob(need(m.alpha, "alpha", kind)?, k, ctl)?
        }
        ModelKind::DeathAtPoisson => death_at_poisson_hitprob(need(m.mu, "mu", kind)?, m.n0, k, ctl)?,
        _ => return Err(Failure::Input(format!("no hitting probability for model {}", model_name(kind)))),
    };
    Ok(r)
}

fn default_levels(m: &ModelArgs) -> Vec<u64> {
    match m.model {
        ModelKind::DeathAtPoisson => (0..m.n0).collect(),
        _ => (2..=30).collect(),
    }
}

pub fn hitprob(
    cmd: &str,
    model: &ModelArgs,
    levels: Option<&str>,
    sweep: Option<&str>,
    ctl: &SeriesControl,
) -> CmdResult<OutputRecord> {
    let levels = levels.map(parse_levels).transpose()?;
    let sweep = sweep.map(parse_sweep).transpose()?;
    let mut cols = vec!["k", "prob", "method", "terms_used"];
    if let Some((name, _)) = &sweep {
        cols.insert(0, name.as_str());
    }
    let mut r = OutputRecord::new(cmd, &cols);
    model.echo(&mut r);
    r.tolerances(ctl);
    let points: Vec<(Option<f64>, ModelArgs)> = match &sweep {
        None => vec![(None, model.clone())],
        Some((name, values)) => values
            .iter()
            .map(|&v| {
                let mut m = model.clone();
                match name.as_str() {
                    "alpha" => m.alpha = Some(v),
                    "mu" => m.mu = Some(v),
                    _ => m.n0 = v as u64,
                }
                (Some(v), m)
            })
            .collect(),
    };
    let is_n0 = matches!(&sweep, Some((n, _)) if n == "n0");
    for (v, m) in points {
        let ks = levels.clone().unwrap_or_else(|| default_levels(&m));
        for k in ks {
            let h = hitprob_one(&m, k, ctl)?;
            let mut row: Vec<Cell> = vec![k.into(), h.prob.into(), h.method.to_string().into(), (h.terms_used as u64).into()];
            if let Some(v) = v {
                row.insert(0, if is_n0 { Cell::Int(v as u64) } else { Cell::Num(v) });
            }
            r.push(row);
        }
    }
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Estimate {
    States,
    Fpt,
    Downcross,
}

pub struct SimulateArgs {
    pub seed: u64,
    pub paths: u64,
    pub tmax: Option<f64>,
    pub eval_times: Vec<f64>,
    pub estimate: Estimate,
    pub k: Option<u64>,
    pub bins: usize,
    pub dump: Option<std::path::PathBuf>,
}

fn check_aborted(aborted: u64, n: u64) -> CmdResult<()> {
    if aborted * 1000 > n {
        return Err(Failure::Check(format!(
            "{aborted} of {n} paths aborted by the explosion guard (more than 0.1%)"
        )));
    }
    Ok(())
}

/// Runs a simulation. On too many aborted paths the record is still
/// returned alongside the failure so that it can be written.
pub fn simulate(
    cmd: &str,
    model: &ModelArgs,
    a: &SimulateArgs,
    ctl: &SeriesControl,
) -> CmdResult<(OutputRecord, CmdResult<()>)> {
    let p = model.process()?;
    let horizon = a
        .tmax
        .or_else(|| a.eval_times.last().copied())
        .ok_or_else(|| Failure::Input("--tmax, --t or --eval-times is required".into()))?;
    let eval = if a.eval_times.is_empty() && a.estimate != Estimate::Fpt {
        vec![horizon]
    } else {
        a.eval_times.clone()
    };
    let cfg = SimConfig::new(a.seed, a.paths, horizon, eval)?;
    if let Some(path) = &a.dump {
        let mut w = BufWriter::new(File::create(path)?);
        write_paths(&p, &cfg, &mut w)?;
        w.flush()?;
    }
    let level = || a.k.ok_or_else(|| Failure::Input("--k is required for this estimate".into()));
    let (mut r, status) = match a.estimate {
        Estimate::States => {
            let est = estimate_states(&p, &cfg)?;
            let mut r = OutputRecord::new(
                cmd,
                &["t", "k", "count", "freq", "freq_stderr", "exact", "mean", "mean_stderr", "exact_mean"],
            );
            for s in &est.snapshots {
                let exact_m = exact_mean(&p, s.t, ctl);
                for (&k, &c) in &s.counts {
                    let f = s.frequency(k);
                    let exact = exact_pmf(&p, s.t, k, ctl).ok();
                    r.push(vec![
                        s.t.into(),
                        k.into(),
                        c.into(),
                        f.value.into(),
                        f.stderr.into(),
                        Cell::opt(exact),
                        s.mean.value.into(),
                        s.mean.stderr.into(),
                        Cell::opt(exact_m),
                    ]);
                }
            }
            r.meta("aborted", est.aborted);
            (r, check_aborted(est.aborted, a.paths))
        }
        Estimate::Fpt => {
            let k = level()?;
            let est = estimate_fpt(&p, k, &cfg, a.bins)?;
            let q = FptQuery::new(p, k).ok();
            let cdf = |t: f64| q.as_ref().and_then(|q| q.cdf(t, 1e-10, ctl).ok()).map(|i| i.value);
            let mut r = OutputRecord::new(cmd, &["quantity", "lo", "hi", "count", "value", "stderr", "exact"]);
            let mut prev = Some(0.0);
            for b in &est.bins {
                let hi = cdf(b.hi);
                let exact = prev.zip(hi).map(|(lo, hi)| (hi - lo) / (b.hi - b.lo));
                prev = hi;
                r.push(vec![
                    "density".into(),
                    b.lo.into(),
                    b.hi.into(),
                    b.count.into(),
                    b.density.value.into(),
                    b.density.stderr.into(),
                    Cell::opt(exact),
                ]);
            }
            r.push(vec![
                "cdf".into(),
                0.0.into(),
                horizon.into(),
                est.hits.into(),
                est.cdf_at_horizon.value.into(),
                est.cdf_at_horizon.stderr.into(),
                Cell::opt(prev),
            ]);
            r.meta("k", k)
                .meta("hits", est.hits)
                .meta("jumped_over", est.jumped_over)
                .meta("censored", est.censored)
                .meta("aborted", est.aborted);
            (r, check_aborted(est.aborted, a.paths))
        }
        Estimate::Downcross => {
            let k = level()?;
            if p.is_increasing() {
                return Err(Failure::Input("downcrossing needs a death model".into()));
            }
            let est = estimate_downcrossing(&p, k, &cfg)?;
            let mut r = OutputRecord::new(cmd, &["t", "survival", "stderr", "exact"]);
            for (t, e) in est {
                let exact = match &p {
                    Process::Composed(ComposedModel::SublinearDeathAtPoisson(m)) => {
                        sublinear_downcrossing_survival(m.mu, m.lambda, m.n0, k, t, ctl).ok()
                    }
                    _ => max_state(&p).and_then(|hi| {
                        (k + 1..=hi).map(|j| exact_pmf(&p, t, j, ctl)).sum::<popproc_core::Result<f64>>().ok()
                    }),
                };
                r.push(vec![t.into(), e.value.into(), e.stderr.into(), Cell::opt(exact)]);
            }
            r.meta("k", k);
            (r, Ok(()))
        }
    };
    model.echo(&mut r);
    r.param("paths", a.paths).param("tmax", horizon);
    r.meta("seed", a.seed);
    r.tolerances(ctl);
    Ok((r, status))
}

pub fn verify(cmd: &str, suite: Suite, opts: &VerifyOptions, ctl: &SeriesControl) -> CmdResult<(OutputRecord, Vec<String>)> {
    let outcomes = run_suite(suite, opts, ctl)?;
    let mut r = OutputRecord::new(cmd, &["check", "pass", "max_deviation", "tolerance", "failures"]);
    r.param("suite", format!("{suite:?}").to_lowercase())
        .param("mu", opts.mu)
        .param("lambda", opts.lambda)
        .param("n0", opts.n0)
        .param("grid_points", opts.grid_points as u64)
        .param("t_max", opts.t_max);
    r.tolerances(ctl);
    let mut failed = Vec::new();
    for o in &outcomes {
        if !o.pass {
            failed.push(o.name.clone());
        }
        r.push(vec![
            o.name.clone().into(),
            o.pass.into(),
            o.max_deviation.into(),
            o.tolerance.into(),
            o.failures.join("; ").into(),
        ]);
    }
    r.details = Some(serde_json::to_value(&outcomes).map_err(|e| Failure::Check(e.to_string()))?);
    Ok((r, failed))
}

pub const FIGURE_ALPHAS: [f64; 4] = [0.25, 0.5, 1.0, 2.0];
pub const FIGURE_N0: [u64; 4] = [5, 10, 20, 50];

/// Hitting-probability curves behind the three figures.
pub fn figures(kmax: u64, ctl: &SeriesControl) -> CmdResult<Vec<(&'static str, OutputRecord)>> {
    if kmax < 2 {
        return Err(Failure::Input("--kmax must be at least 2".into()));
    }
    let alphas = FIGURE_ALPHAS.map(|a| a.to_string()).join(",");
    let levels = format!("2..{kmax}");
    let birth = |kind| ModelArgs {
        model: kind,
        alpha: None,
        lambda: None,
        mu: None,
        n0: 1,
    };
    let fig1 = hitprob(
        &format!("figures fig1: hitprob --model iterated-birth --sweep alpha={alphas} --k {levels}"),
        &birth(ModelKind::IteratedBirth),
        Some(&levels),
        Some(&format!("alpha={alphas}")),
        ctl,
    )?;
    let fig2 = hitprob(
        &format!("figures fig2: hitprob --model birth-at-poisson --sweep alpha={alphas} --k {levels}"),
        &birth(ModelKind::BirthAtPoisson),
        Some(&levels),
        Some(&format!("alpha={alphas}")),
        ctl,
    )?;
    let n0s = FIGURE_N0.map(|n| n.to_string()).join(",");
    let death = ModelArgs {
        model: ModelKind::DeathAtPoisson,
        alpha: None,
        lambda: None,
        mu: Some(0.5),
        n0: 1,
    };
    let fig3 = hitprob(
        &format!("figures fig3: hitprob --model death-at-poisson --mu 0.5 --sweep n0={n0s}"),
        &death,
        None,
        Some(&format!("n0={n0s}")),
        ctl,
    )?;
    Ok(vec![("fig1", fig1), ("fig2", fig2), ("fig3", fig3)])
}

pub fn ensure_dir(dir: &Path) -> CmdResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Input(format!("cannot create {}: {e}", dir.display())))
}
