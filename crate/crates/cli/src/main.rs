use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fluxlab::commands::{self, Outcome};
use fluxlab::{parse_config, CliError, Experiment, Overrides};

/// Simulate independent lattice walkers and check their current
/// fluctuations against the Gaussian limit.
#[derive(Parser, Debug)]
#[command(name = "fluxlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (TOML, or JSON with a .json extension).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Seed; overrides the configuration and FLUXLAB_SEED.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Number of replicas per ladder rung.
    #[arg(long, global = true, value_name = "G")]
    replicas: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the drift v, second moment a and its factor kappa.
    KernelInfo,
    /// Write every replica's current to simulate.jsonl.
    Simulate,
    /// Write the limit covariance table to analytic.csv.
    Analytic,
    /// Compare ensembles with the limit law; exit 1 if a check fails.
    Verify {
        /// Draw samples from the exact limit law instead of simulating.
        #[arg(long)]
        mock_limit: bool,
    },
    /// Convergence table and covariance curves across the n ladder.
    Report {
        #[arg(long)]
        mock_limit: bool,
    },
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    let path = cli
        .config
        .ok_or_else(|| CliError::Usage("--config PATH is required".into()))?;
    let over = Overrides {
        seed: cli.seed,
        replicas: cli.replicas,
        out: cli.out,
        env_seed: std::env::var("FLUXLAB_SEED").ok(),
    };
    let exp = Experiment::from_config(parse_config(&path)?, &over)?;
    match cli.command {
        Command::KernelInfo => commands::kernel_info(&exp, &mut std::io::stdout())?,
        Command::Simulate => {
            let path = commands::simulate(&exp)?;
            println!("wrote {}", path.display());
        }
        Command::Analytic => {
            let path = commands::analytic(&exp)?;
            println!("wrote {}", path.display());
        }
        Command::Verify { mock_limit } => return commands::verify(&exp, mock_limit),
        Command::Report { mock_limit } => commands::report(&exp, mock_limit)?,
    }
    Ok(Outcome::Pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
