use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use pendulum_balance::clik::ClikError;
use pendulum_balance::dynamics::natural_period;
use pendulum_balance::io::{self as files, FormatError};
use pendulum_balance::par::Execution;
use pendulum_balance::rl::{self, TerminalReason};
use pendulum_balance::sysid::{
    fit_parameters, generate_synthetic_encoder_data, Candidate, EncoderSpec, FitConfig,
    FitWarning, FixedConstants, SysidError,
};
use pendulum_balance::{ConfigError, RunConfig};

#[derive(Parser)]
#[command(name = "pendulum-balance", version, about = "Pendulum identification and balance training")]
struct Cli {
    /// key=value configuration file
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// RNG seed, overrides `seed` in the config
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output file
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Override a config key, e.g. `--set episodes=2000`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a free oscillation and write the `t,theta_rad` trace
    Oscillate,
    /// Fit inertia and damping to a `t,theta_rad` trace
    Fit { data: PathBuf },
    /// Train a Q-table from scratch
    Train {
        /// Also write the per-episode training curve
        #[arg(long, value_name = "PATH")]
        curve: Option<PathBuf>,
    },
    /// Evaluate a Q-table greedily over `trials` episodes
    Eval { table: PathBuf },
    /// Record one greedy episode step by step
    Rollout { table: PathBuf },
}

#[derive(Debug, Error)]
enum AppError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Sysid(#[from] SysidError),
    #[error(transparent)]
    Clik(#[from] ClikError),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{0}")]
    Usage(String),
    #[error("fit did not converge")]
    NotConverged,
}

impl AppError {
    fn code(&self) -> u8 {
        const VALIDATION: u8 = 3;
        const IO: u8 = 4;
        const PARSE: u8 = 5;
        const NOT_CONVERGED: u8 = 6;
        const SHAPE: u8 = 7;
        match self {
            Self::Config(ConfigError::Io { .. }) | Self::Io { .. } => IO,
            Self::Config(ConfigError::Parse { .. } | ConfigError::UnknownKey { .. }) => PARSE,
            Self::Config(ConfigError::Invalid { .. }) => VALIDATION,
            Self::Format(FormatError::Io(_)) => IO,
            Self::Format(FormatError::Parse { .. }) => PARSE,
            Self::Format(FormatError::Shape(_)) => SHAPE,
            Self::Sysid(SysidError::Empty | SysidError::NonMonotonic(_)) => SHAPE,
            Self::Sysid(_) | Self::Clik(_) => VALIDATION,
            Self::Usage(_) => 2,
            Self::NotConverged => NOT_CONVERGED,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> AppError + '_ {
    move |source| AppError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, AppError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn open(path: &Path) -> Result<BufReader<File>, AppError> {
    File::open(path).map(BufReader::new).map_err(io_err(path))
}

/// Writes to `path`, or to stdout when absent.
fn with_output<F>(path: Option<&Path>, write: F) -> Result<(), AppError>
where
    F: FnOnce(&mut dyn Write) -> Result<(), FormatError>,
{
    match path {
        Some(p) => {
            let mut w = create(p)?;
            write(&mut w)?;
            w.flush().map_err(io_err(p))
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            write(&mut w)?;
            Ok(())
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, AppError> {
    let base = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    let mut cfg = base.with_overrides(&cli.overrides)?;
    if let Some(seed) = cli.seed {
        cfg.learning.seed = seed;
    }
    Ok(cfg)
}

fn load_table(path: &Path) -> Result<rl::QTable, AppError> {
    Ok(files::read_qtable(open(path)?)?)
}

fn oscillate(cli: &Cli, cfg: &RunConfig) -> Result<(), AppError> {
    let o = &cfg.oscillation;
    let spec = EncoderSpec {
        duration: o.duration,
        sample_rate: 1.0 / o.h,
        noise_std: o.noise_std,
        counts_per_rev: o.counts_per_rev,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.learning.seed);
    let trace = generate_synthetic_encoder_data(&cfg.params, o.theta0, o.theta_dot0, &spec, &mut rng)?;
    println!("natural_period_s={}", files::fmt_sig(natural_period(&cfg.params)));

    let crossings: Vec<f64> = trace
        .windows(2)
        .filter(|w| w[0].theta.signum() != w[1].theta.signum() && w[1].theta != 0.0)
        .map(|w| w[0].t + w[0].theta / (w[0].theta - w[1].theta) * (w[1].t - w[0].t))
        .collect();
    if crossings.len() >= 2 {
        let spacing = (crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64;
        println!("zero_crossing_spacing_s={}", files::fmt_sig(spacing));
    }
    match cli.out.as_deref() {
        Some(path) => with_output(Some(path), |w| files::write_trace(w, &trace)),
        None => Ok(()),
    }
}

fn fit(cli: &Cli, cfg: &RunConfig, data: &Path) -> Result<(), AppError> {
    let trace = files::read_trace(open(data)?)?;
    let (theta0, theta_dot0) = match trace.as_slice() {
        [] => return Err(SysidError::Empty.into()),
        [only] => (only.theta, 0.0),
        [a, b, ..] => (a.theta, (b.theta - a.theta) / (b.t - a.t)),
    };
    let fit_cfg = FitConfig {
        initial_guess: Candidate {
            inertia: cfg.params.inertia,
            damping: cfg.params.damping,
            theta0,
            theta_dot0: if theta_dot0.is_finite() { theta_dot0 } else { 0.0 },
        },
        max_iterations: cfg.fit.max_iterations,
        tolerance: cfg.fit.tolerance,
        h: None,
    };
    let result = fit_parameters(&trace, &FixedConstants::of(&cfg.params), &fit_cfg)?;
    for w in &result.warnings {
        match w {
            FitWarning::FewSamples => eprintln!("warning: few samples, the fit may be ill-posed"),
            FitWarning::ShortTrace => eprintln!("warning: trace spans under two periods"),
        }
    }
    with_output(cli.out.as_deref(), |w| files::write_fit(w, &result))?;
    if result.converged {
        Ok(())
    } else {
        Err(AppError::NotConverged)
    }
}

fn train(cli: &Cli, cfg: &RunConfig, curve_path: Option<&Path>) -> Result<(), AppError> {
    let out = cli
        .out
        .as_deref()
        .ok_or_else(|| AppError::Usage("train needs --out for the Q-table".into()))?;
    let started = Instant::now();
    let outcome = rl::train(&cfg.params, &cfg.arm, &cfg.learning)?;
    let elapsed = started.elapsed().as_secs_f64();

    with_output(Some(out), |w| files::write_qtable(w, &outcome.table))?;
    if let Some(path) = curve_path {
        with_output(Some(path), |w| files::write_curve(w, &outcome.curve))?;
    }
    let tail = &outcome.curve[outcome.curve.len().saturating_sub(1000)..];
    println!("episodes={}", outcome.curve.len());
    println!("train_time_s={}", files::fmt_sig(elapsed));
    println!(
        "final_1000_median_steps={}",
        files::fmt_sig(rl::median_steps(tail).unwrap_or(0.0))
    );
    match outcome.selected {
        Some(c) => println!(
            "selected_episode={}\nselected_median_steps={}",
            c.episode,
            files::fmt_sig(c.median_steps)
        ),
        None => println!("selected_episode={}", outcome.curve.len()),
    }
    Ok(())
}

fn eval(cli: &Cli, cfg: &RunConfig, table: &Path) -> Result<(), AppError> {
    let table = load_table(table)?;
    let summary = rl::evaluate(
        &table,
        cfg.trials,
        &cfg.params,
        &cfg.arm,
        &cfg.learning,
        Execution::default(),
    )?;
    let show = |v: Option<f64>| v.map_or("nan".to_string(), files::fmt_sig);
    println!("trials={}", summary.trials.len());
    println!("median_survival_s={}", show(summary.median_survival()));
    println!("mean_survival_s={}", show(summary.mean_survival()));
    for reason in [
        TerminalReason::Failure,
        TerminalReason::Timeout,
        TerminalReason::Singularity,
    ] {
        println!("{reason}={}", summary.count(reason));
    }
    match cli.out.as_deref() {
        Some(path) => with_output(Some(path), |w| {
            files::write_trials(w, &summary.trials, summary.h)
        }),
        None => Ok(()),
    }
}

fn rollout(cli: &Cli, cfg: &RunConfig, table: &Path) -> Result<(), AppError> {
    let table = load_table(table)?;
    let (records, stats) = rl::rollout(&table, &cfg.params, &cfg.arm, &cfg.learning)?;
    with_output(cli.out.as_deref(), |w| files::write_rollout(w, &records))?;
    eprintln!(
        "steps_survived={} terminal={}",
        stats.steps_survived, stats.terminal_reason
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<(), AppError> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Oscillate => oscillate(cli, &cfg),
        Command::Fit { data } => fit(cli, &cfg, data),
        Command::Train { curve } => train(cli, &cfg, curve.as_deref()),
        Command::Eval { table } => eval(cli, &cfg, table),
        Command::Rollout { table } => rollout(cli, &cfg, table),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
