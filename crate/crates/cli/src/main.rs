use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use commands::Run;
use config::{Config, ConfigError};

/// Multitask Bayesian models for fleets of assets.
#[derive(Parser)]
#[command(name = "fleet", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a synthetic fleet; writes data.csv and truth.csv.
    Simulate(Common),
    /// Fit the multitask model; writes draws.csv and diagnostics.json.
    Fit(Common),
    /// Posterior predictive curves per task and per group.
    Predict(Common),
    /// Score CP, CRL, STL and MTL on a held-out split.
    Benchmark(Common),
    /// Correlation between task parameters and spread reduction against single-task fits.
    Analyze(Common),
    /// Pick a power commitment level and value perfect wind information.
    Decide(Common),
    /// Choose the number of splines by cross-validated BIC.
    Select(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration; defaults apply to anything left out.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Fleet CSV with columns x, y, k, l. Simulated from the config's scenario when omitted.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the seeds used by this command.
    #[arg(long)]
    seed: Option<u64>,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (cmd, common): (fn(&Run) -> anyhow::Result<()>, Common) = match cli.command {
        Command::Simulate(c) => (commands::simulate, c),
        Command::Fit(c) => (commands::fit, c),
        Command::Predict(c) => (commands::predict, c),
        Command::Benchmark(c) => (commands::benchmark, c),
        Command::Analyze(c) => (commands::analyze, c),
        Command::Decide(c) => (commands::decide, c),
        Command::Select(c) => (commands::select, c),
    };
    let config = match &common.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    cmd(&Run {
        config,
        data: common.data,
        out: common.out,
        seed: common.seed,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
