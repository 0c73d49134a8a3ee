use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tomo2d_cli::{run, CliError, RunConfig};

/// Two-dimensional Fourier-transform state tomography of spin-1/2 registers.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pulse sequences and export signals, spectra and cross-sections.
    Simulate(Common),
    /// Simulate, reconstruct the state and score it against the input.
    Tomograph(Common),
    /// Build (or load from cache) the design matrix and report its rank.
    Basis(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides options.output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Noise and gradient seed; overrides options.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Log progress and cache activity.
    #[arg(long, short)]
    verbose: bool,
}

type Runner = fn(&RunConfig, &std::path::Path) -> Result<String, CliError>;

fn execute(cli: Cli) -> Result<String, CliError> {
    let (common, f): (Common, Runner) = match cli.command {
        Command::Simulate(c) => (c, run::simulate),
        Command::Tomograph(c) => (c, run::tomograph),
        Command::Basis(c) => (c, run::basis),
    };
    env_logger::Builder::new()
        .filter_level(if common.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .parse_default_env()
        .init();
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.options.seed = seed;
    }
    let out = common
        .out
        .clone()
        .unwrap_or_else(|| cfg.options.output_dir.clone());
    f(&cfg, &out)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            if let CliError::Rank { report, .. } = &e {
                print!("{report}");
            }
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
