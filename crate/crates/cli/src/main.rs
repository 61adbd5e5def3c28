use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use splinept::tuner::Method;
use splinept_cli::commands::{cmd_benchmark, cmd_run, cmd_snr, cmd_tune, oracle_report};
use splinept_cli::config::RunConfig;
use splinept_cli::{parse_seed_range, CliError};

#[derive(Parser)]
#[command(name = "splinept", version, about = "Parallel tempering with tuned spline annealing paths")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config file.
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory; overrides [output].directory.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SeedArgs {
    /// Independent runs over seeds a..b (inclusive), one subdirectory each.
    #[arg(long, value_parser = parse_seed_range)]
    seeds: Option<(u64, u64)>,
}

#[derive(Args)]
struct ComparatorArgs {
    /// Baselines to run with the same budget, comma separated.
    #[arg(long, value_delimiter = ',')]
    comparators: Vec<Method>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample on a fixed path and uniform schedule.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        seeds: SeedArgs,
    },
    /// Tune schedule and path.
    Tune {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        seeds: SeedArgs,
        #[command(flatten)]
        comparators: ComparatorArgs,
    },
    /// Gradient signal-to-noise table for the two objectives.
    Snr {
        #[command(flatten)]
        common: Common,
    },
    /// Closed-form barrier and rate references as JSON on stdout.
    Oracle {
        #[command(flatten)]
        common: Common,
    },
    /// Cumulative round trips of the tuned spline against baselines.
    Benchmark {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        seeds: SeedArgs,
        #[command(flatten)]
        comparators: ComparatorArgs,
    },
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(out) = &common.out {
        cfg.output.directory = out.clone();
    }
    Ok(cfg)
}

fn default_comparators(c: &ComparatorArgs) -> Vec<Method> {
    if c.comparators.is_empty() {
        vec![Method::NrptLinear, Method::ReversibleLinear]
    } else {
        c.comparators.clone()
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { common, seeds } => cmd_run(&load(&common)?, seeds.seeds),
        Command::Tune { common, seeds, comparators } => cmd_tune(&load(&common)?, seeds.seeds, &comparators.comparators),
        Command::Snr { common } => cmd_snr(&load(&common)?),
        Command::Oracle { common } => {
            let report = oracle_report(&load(&common)?)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            Ok(())
        }
        Command::Benchmark { common, seeds, comparators } => {
            cmd_benchmark(&load(&common)?, seeds.seeds, &default_comparators(&comparators))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
