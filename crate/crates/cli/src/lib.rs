//! Command-line experiment runner for `varigame`.
//!
//! Every subcommand reads a JSON [`ExperimentConfig`](config::ExperimentConfig)
//! (except `reproduce`, which builds its own) and writes CSV to `--out` or
//! stdout. Column layouts are listed in the repository README.

pub mod analysis;
pub mod commands;
pub mod config;
pub mod output;
pub mod recipes;

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::ExperimentConfig;
use crate::recipes::FigureId;

static INTERRUPTED: AtomicBool = AtomicBool::new(false);

/// Routes Ctrl-C to a flag polled between sweep points, so finished rows
/// stay on disk and the run stops cleanly.
pub fn install_interrupt_handler() -> Result<()> {
    ctrlc::set_handler(|| INTERRUPTED.store(true, Ordering::SeqCst)).context("installing Ctrl-C handler")
}

pub fn interrupted() -> bool {
    INTERRUPTED.load(Ordering::SeqCst)
}

#[derive(Debug, Parser)]
#[command(name = "varigame", version, about = "Evolutionary dynamics with variable games on regular networks")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON experiment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `sim.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "VARIGAME_THREADS")]
    pub threads: Option<usize>,
    /// Output CSV path (a directory for `reproduce`); stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides `sim.runs` (seeds per curve for trajectory figures).
    #[arg(long, global = true)]
    pub runs: Option<u64>,
    /// Omit the timestamp comment line so reruns are byte-identical.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Also write an SVG line plot next to each trajectory or theory CSV.
    #[arg(long, global = true)]
    pub svg: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Invader {
    C,
    D,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    /// The configured stationary distribution.
    Configured,
    MaxGradient,
    MinFitnessDiff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    MaxGradient,
    MinFitnessDiff,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo fixation probabilities with the theory alongside.
    Fixation {
        #[arg(long, value_enum, default_value = "both")]
        invader: Invader,
    },
    /// Cooperator fraction over time: per-seed runs, their mean, and
    /// optionally the pair-approximation ODE.
    Trajectory {
        #[arg(long)]
        ode: bool,
        /// Game distribution of the ODE.
        #[arg(long, value_enum, default_value = "configured")]
        policy: PolicyArg,
    },
    /// Closed-form fixation probabilities, conditions and thresholds over a
    /// swept parameter.
    Theory {
        /// `PATH FROM:TO:STEPS`, e.g. `--sweep dg1 0:1:50`; defaults to the
        /// config's sweep block.
        #[arg(long, num_args = 2, value_names = ["PATH", "RANGE"])]
        sweep: Option<Vec<String>>,
        /// Emit selection-gradient curves over p_A instead.
        #[arg(long)]
        curve: bool,
    },
    /// Optimal game distribution as a function of p_A.
    Optimize {
        #[arg(long, value_enum, default_value = "both")]
        objective: ObjectiveArg,
        /// Cross-check against a brute-force grid.
        #[arg(long)]
        verify: bool,
        #[arg(long, default_value_t = 1000)]
        resolution: usize,
    },
    /// Exact fixation probabilities from the full Markov chain (N <= 20).
    Oracle {
        /// Also write the absorption probability of every configuration.
        #[arg(long)]
        absorption: Option<PathBuf>,
    },
    /// Fixation estimates over the cross product of the config's sweep axes.
    Sweep,
    /// Regenerate the data behind a published figure.
    Reproduce {
        #[arg(value_enum)]
        figure: FigureId,
    },
}

/// Runs a parsed command on a thread pool of the requested size.
pub fn run(cli: Cli) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.common.threads {
        anyhow::ensure!(n > 0, "--threads must be positive");
        builder = builder.num_threads(n);
    }
    let pool = builder.build().context("building thread pool")?;
    pool.install(|| dispatch(&cli.common, &cli.command))
}

/// Parses `args` (program name first) and runs them.
pub fn run_from_args<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run(Cli::try_parse_from(args)?)
}

fn dispatch(common: &CommonArgs, command: &Command) -> Result<()> {
    match command {
        Command::Reproduce { figure } => commands::reproduce(common, *figure),
        other => {
            let config = load_config(common)?;
            match other {
                Command::Fixation { invader } => commands::fixation(common, &config, *invader),
                Command::Trajectory { ode, policy } => commands::trajectory(common, &config, *ode, *policy),
                Command::Theory { sweep, curve } => commands::theory(common, &config, sweep.as_deref(), *curve),
                Command::Optimize { objective, verify, resolution } => {
                    commands::optimize(common, &config, *objective, *verify, *resolution)
                }
                Command::Oracle { absorption } => commands::oracle(common, &config, absorption.as_deref()),
                Command::Sweep => commands::sweep(common, &config),
                Command::Reproduce { .. } => unreachable!(),
            }
        }
    }
}

/// Reads the config and applies `--seed` / `--runs`.
pub fn load_config(common: &CommonArgs) -> Result<ExperimentConfig> {
    let path = common.config.as_ref().context("--config is required for this subcommand")?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut config = ExperimentConfig::from_json_str(&text)?;
    if let Some(seed) = common.seed {
        config.sim.seed = seed;
    }
    if let Some(runs) = common.runs {
        config.sim.runs = runs;
        config.validate()?;
    }
    Ok(config)
}
