use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use p2pdeploy::cli::{self, CliError};

#[derive(Parser)]
#[command(
    name = "p2pdeploy",
    version,
    about = "Simulated peer-to-peer component deployment"
)]
struct Args {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario file and emit its metrics document.
    Run {
        scenario: PathBuf,
        /// Overrides the environment and the scenario's `seed` line.
        #[arg(long, env = cli::SEED_ENV)]
        seed: Option<u64>,
        /// Where to write the metrics document (default: stdout).
        #[arg(long)]
        metrics_out: Option<PathBuf>,
    },
    /// Summarize a metrics document.
    Stats { metrics: PathBuf },
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = match args.command {
        Cmd::Run {
            scenario,
            seed,
            metrics_out,
        } => run(&scenario, seed, metrics_out.as_deref()),
        Cmd::Stats { metrics } => cli::stats_file(&metrics).map(|s| print!("{s}")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("p2pdeploy: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(
    scenario: &std::path::Path,
    seed: Option<u64>,
    out: Option<&std::path::Path>,
) -> Result<(), CliError> {
    let (doc, outcome) = cli::run_file(scenario, seed)?;
    cli::write_document(&doc, out)?;
    outcome
}
