use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sffmon::runner::{self, Overrides, RunConfig};
use sffmon::Error;

/// Spectral form factors of continuously monitored chaotic systems.
///
/// Settings are resolved as: flag, then config file, then default.
/// Exit status: 0 success, 2 config error, 3 resource limit, 4 feature not
/// found (data are still written).
#[derive(Parser)]
#[command(name = "sffmon", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write a run directory.
    Run {
        /// JSON config, or a manifest.json from an earlier run.
        #[arg(long)]
        config: PathBuf,
        /// Master seed for every random stream.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; results do not depend on this.
        #[arg(long)]
        workers: Option<usize>,
        /// Output root; the run gets its own subdirectory. Without this flag
        /// or an `output_dir` in the config, $SFFMON_OUT_DIR, then ./runs.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config and print a cost estimate without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run {
            config,
            seed,
            workers,
            out,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            cfg.apply(&Overrides { seed, workers, out });
            let outcome = runner::run(&cfg)?;
            println!("{}", outcome.run_dir.display());
            for f in &outcome.manifest.files {
                log::info!("{} {}", f.sha256, f.path);
            }
            if let Some(e) = outcome.feature_error() {
                return Err(e);
            }
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = RunConfig::load(&config)?;
            let report = runner::validate(&cfg)?;
            println!("{report}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
