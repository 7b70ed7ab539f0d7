use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use riesz::commands::{run_benchmark_command, run_estimate, run_fit, run_verify};
use riesz::config::{Overrides, RunConfig};
use riesz::CliError;

/// Riesz representer estimation by Bregman divergence minimization.
#[derive(Parser)]
#[command(name = "riesz", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a representer; writes model.json and balance.csv to --out DIR.
    Fit(Common),
    /// Cross-fitted DM, IPW, AIPW and TMLE estimates as CSV.
    Estimate(Common),
    /// Monte Carlo benchmark on the synthetic ATE design.
    Benchmark {
        #[command(flatten)]
        common: Common,
        /// Number of replications.
        #[arg(long)]
        reps: Option<usize>,
        /// Worker threads (0 uses every core).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Run the oracle checks of the library.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file, or directory for `fit`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn config(common: &Common, reps: Option<usize>) -> Result<RunConfig, CliError> {
    let o = Overrides {
        seed: common.seed,
        out: common.out.clone(),
        reps,
    };
    RunConfig::load(common.config.as_deref(), &o)
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Fit(c) => run_fit(&config(&c, None)?),
        Command::Estimate(c) => run_estimate(&config(&c, None)?),
        Command::Benchmark { common, reps, jobs } => run_benchmark_command(&config(&common, reps)?, jobs),
        Command::Verify(c) => {
            let (text, failed) = run_verify(&config(&c, None)?)?;
            if failed.is_empty() {
                Ok(text)
            } else {
                print!("{text}");
                Err(CliError::Other(format!("failed checks: {}", failed.join(", "))))
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(text) => {
            let mut out = std::io::stdout().lock();
            if out.write_all(text.as_bytes()).and_then(|_| out.flush()).is_err() {
                return ExitCode::from(5);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
