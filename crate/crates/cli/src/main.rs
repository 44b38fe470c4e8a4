//! `popproc`: exact laws, hitting probabilities, simulation and verification
//! for population processes observed at random times.
//!
//! Exit codes: 0 on success, 1 when a check or computation fails, 2 on bad
//! input.

mod commands;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use popproc_core::verify::{Suite, VerifyOptions};
use popproc_core::SeriesControl;

use commands::{CmdResult, Estimate, Failure, ModelArgs, SimulateArgs};
use output::{Format, OutputRecord};

#[derive(Debug, Parser)]
#[command(name = "popproc", version, about, long_about = None)]
struct Cli {
    /// Relative tolerance for series truncation
    #[arg(long, global = true, default_value = "1e-12")]
    tol: f64,
    /// Absolute tolerance for series truncation
    #[arg(long, global = true, default_value = "1e-15")]
    abs_tol: f64,
    /// Maximum number of series terms
    #[arg(long, global = true, default_value_t = 1_000_000)]
    max_terms: usize,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Worker threads for simulation
    #[arg(long, global = true, env = "POPPROC_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Probability mass function at time t
    Pmf {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_negative_numbers = true)]
        t: f64,
        #[arg(long)]
        kmin: Option<u64>,
        #[arg(long)]
        kmax: Option<u64>,
    },
    /// Hitting probabilities Pr{T_k < inf}
    Hitprob {
        #[command(flatten)]
        model: ModelArgs,
        /// Levels, e.g. 2,3,4 or 0..19
        #[arg(long)]
        k: Option<String>,
        /// Sweep one parameter, e.g. alpha=0.25,0.5,1,2 or n0=5,10,20
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Exact Monte Carlo simulation
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        paths: u64,
        /// Simulation horizon
        #[arg(long, allow_negative_numbers = true)]
        tmax: Option<f64>,
        /// Single observation time
        #[arg(long, conflicts_with = "eval_times", allow_negative_numbers = true)]
        t: Option<f64>,
        /// Comma-separated observation times
        #[arg(long)]
        eval_times: Option<String>,
        #[arg(long, value_enum, default_value_t = Estimate::States)]
        estimate: Estimate,
        /// Level for fpt and downcross estimates
        #[arg(long)]
        k: Option<u64>,
        /// Histogram bins for fpt estimates
        #[arg(long, default_value_t = 20)]
        bins: usize,
        /// Write every path as tab-separated (path_id, time, state) lines
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// ODE, identity and kernel checks
    Verify {
        #[arg(long, default_value = "all")]
        suite: Suite,
        #[arg(long, default_value_t = 6)]
        n0: u64,
        #[arg(long, default_value_t = 0.5)]
        mu: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 50)]
        grid_points: usize,
        #[arg(long, default_value_t = 3.0)]
        t_max: f64,
    },
    /// Write the hitting-probability curves fig1, fig2 and fig3
    Figures {
        #[arg(long)]
        out: PathBuf,
        /// Largest level for the birth-model curves
        #[arg(long, default_value_t = 30)]
        kmax: u64,
    },
}

fn emit(r: &OutputRecord, format: Format) -> CmdResult<()> {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    r.write(format, &mut lock)?;
    lock.flush()?;
    Ok(())
}

fn run(cli: Cli) -> CmdResult<()> {
    let ctl = SeriesControl::new(cli.tol, cli.abs_tol, cli.max_terms)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Input("thread count must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Check(e.to_string()))?;
    }
    let echo = std::env::args().skip(1).collect::<Vec<_>>().join(" ");
    match cli.command {
        Command::Pmf { model, t, kmin, kmax } => emit(&commands::pmf(&echo, &model, t, kmin, kmax, &ctl)?, cli.format),
        Command::Hitprob { model, k, sweep } => {
            emit(&commands::hitprob(&echo, &model, k.as_deref(), sweep.as_deref(), &ctl)?, cli.format)
        }
        Command::Simulate {
            model,
            seed,
            paths,
            tmax,
            t,
            eval_times,
            estimate,
            k,
            bins,
            dump,
        } => {
            let eval_times = match (t, eval_times) {
                (Some(t), _) => vec![t],
                (None, Some(s)) => commands::parse_times(&s)?,
                (None, None) => Vec::new(),
            };
            let args = SimulateArgs {
                seed,
                paths,
                tmax,
                eval_times,
                estimate,
                k,
                bins,
                dump,
            };
            let (r, status) = commands::simulate(&echo, &model, &args, &ctl)?;
            emit(&r, cli.format)?;
            status
        }
        Command::Verify {
            suite,
            n0,
            mu,
            lambda,
            grid_points,
            t_max,
        } => {
            let opts = VerifyOptions {
                mu,
                lambda,
                n0,
                grid_points,
                t_max,
            };
            let (r, failed) = commands::verify(&echo, suite, &opts, &ctl)?;
            emit(&r, cli.format)?;
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Failure::Check(format!("failed checks: {}", failed.join(", "))))
            }
        }
        Command::Figures { out, kmax } => {
            commands::ensure_dir(&out)?;
            let figs = commands::figures(kmax, &ctl)?;
            let mut index = OutputRecord::new(&echo, &["file", "rows"]);
            index.tolerances(&ctl);
            for (name, r) in figs {
                let path = out.join(format!("{name}.{}", cli.format.extension()));
                let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
                r.write(cli.format, &mut w)?;
                w.flush()?;
                index.push(vec![path.display().to_string().into(), (r.rows.len() as u64).into()]);
            }
            emit(&index, cli.format)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("popproc: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
