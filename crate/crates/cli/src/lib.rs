//! Command-line front end: `train`, `eval`, `spheres` and `diagnose`.
//!
//! Exit codes: 0 on success, 1 for command-line usage errors, 2 for any
//! failure while running a command (bad config, unreadable data, mismatched
//! checkpoint, I/O).

pub mod config;
pub mod diagnose;
pub mod metrics;
pub mod spheres;
pub mod train;

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use tnn_core::data::Split;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "tnn",
    version,
    about = "Train and inspect tensor neural networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a network described by a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Evaluate a checkpoint written by `train`.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Directory holding the dataset files.
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Evaluate the first N samples instead of the limit recorded at training time.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Run the three-spheres stability experiment.
    Spheres {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Report eigenvalue diagnostics of a checkpoint's weights.
    Diagnose {
        #[arg(long)]
        checkpoint: PathBuf,
        /// CSV destination; defaults to `diagnose.csv` next to the checkpoint.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn execute(command: Command) -> Result<()> {
    let log = |s: &str| println!("{s}");
    match command {
        Command::Train { config, output } => {
            let mut cfg = config::RunConfig::read(&config)?;
            if let Some(o) = output {
                cfg.output_dir = o;
            }
            let out = train::train(&cfg, log)?;
            println!("metrics: {}", out.metrics_path.display());
            println!("checkpoint: {}", out.checkpoint_path.display());
        }
        Command::Eval {
            checkpoint,
            dataset,
            split,
            limit,
        } => {
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            };
            let r = train::eval(&checkpoint, &dataset, split, limit)?;
            println!(
                "samples {} loss {:?} accuracy {:?}",
                r.samples, r.loss, r.accuracy
            );
        }
        Command::Spheres { config, output } => {
            let mut cfg = config::SpheresConfig::read(&config)?;
            if let Some(o) = output {
                cfg.output_dir = o;
            }
            spheres::spheres(&cfg, log)?;
            println!(
                "summary: {}",
                cfg.output_dir.join(spheres::SUMMARY_FILE).display()
            );
        }
        Command::Diagnose { checkpoint, output } => {
            let rows = diagnose::diagnose(&checkpoint)?;
            for r in &rows {
                println!("{}", diagnose::format_row(r));
            }
            let path = output.unwrap_or_else(|| {
                checkpoint
                    .parent()
                    .map_or_else(|| PathBuf::from("diagnose.csv"), |p| p.join("diagnose.csv"))
            });
            diagnose::write_csv(&rows, &path)?;
            println!("csv: {}", path.display());
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_RUNTIME
        }
    }
}
