use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use config::ExperimentConfig;

/// Stability analysis and simulation of random-access protocols with
/// success/failure feedback.
///
/// Exit status: 0 on success, 1 when a check fails, 2 on usage or
/// configuration errors.
#[derive(Debug, Parser)]
#[command(name = "binfeed", version)]
struct Cli {
    /// JSON experiment configuration; defaults are used when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Base seed; overrides `run.seed`.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

/// Overrides of the analysis block.
#[derive(Debug, Clone, Default, Args)]
pub struct BandArgs {
    #[arg(long = "l0")]
    pub lambda0: Option<f64>,
    #[arg(long = "l1")]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub d: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Derive (C, beta, D) for a rate band and print them as JSON.
    DeriveParams(BandArgs),
    /// Check the root structure of the drift functions over the band.
    VerifyLemma(BandArgs),
    /// Integrate fluid trajectories from the unit simplex.
    Fluid {
        #[command(flatten)]
        band: BandArgs,
        /// Arrival rate of the fluid model.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Sample the limiting drift field on a grid.
    DriftField {
        #[command(flatten)]
        band: BandArgs,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Replicated simulation of one configuration and its stability verdict.
    Simulate,
    /// Stability verdicts over a grid of rates, D and beta.
    Sweep,
    /// Validator-gated rate sweep for class-2 and class-3 protocols.
    Explore,
    /// Print the default configuration.
    PrintDefaultConfig,
}

/// How a command ended when it did not hit an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    CheckFailed,
}

fn load(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.run.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output.dir = o.clone();
    }
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> anyhow::Result<Status> {
    if let Command::PrintDefaultConfig = cli.cmd {
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&ExperimentConfig::default())?);
        return Ok(Status::Ok);
    }
    let cfg = load(cli)?;
    let jobs = cli
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    let ctx = commands::Context {
        out_given: cli.out.is_some(),
        jobs,
    };
    match &cli.cmd {
        Command::DeriveParams(b) => commands::derive_params(&ctx, cfg, b),
        Command::VerifyLemma(b) => commands::verify_lemma(&ctx, cfg, b),
        Command::Fluid { band, lambda } => commands::fluid(&ctx, cfg, band, *lambda),
        Command::DriftField { band, lambda } => commands::drift_field(&ctx, cfg, band, *lambda),
        Command::Simulate => commands::simulate(&ctx, cfg),
        Command::Sweep => commands::sweep(&ctx, cfg),
        Command::Explore => commands::explore(&ctx, cfg),
        Command::PrintDefaultConfig => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::CheckFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
