//! `rootsr` command-line pipeline: scene generation, burst datasets,
//! alignment reports, training, enhancement, baselines, quality evaluation
//! and trait analysis.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage error, 3 configuration
//! error. Failures print one line: `error: kind=<kind> msg=<message>`.

pub mod commands;
pub mod config;
pub mod scenes;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rootsr_core::Error;

pub use config::PipelineConfig;

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "rootsr", version, about = "Burst super-resolution pipeline for underground root imagery")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML configuration file (schema version 1).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed; also the network seed unless `network.seed` is set.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory; nothing is written outside it.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Override a config value, e.g. `--set train.epochs=2` (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic root scenes with ground-truth masks.
    GenData,
    /// Cut half-pixel shifted bursts from generated scenes.
    MakeBurst {
        #[arg(long, value_name = "DIR")]
        scenes: Option<PathBuf>,
    },
    /// Estimate frame shifts and compare them with the known ones.
    Align {
        #[arg(long, value_name = "DIR")]
        dataset: Option<PathBuf>,
    },
    /// Train the burst super-resolution network.
    Train {
        #[arg(long, value_name = "DIR")]
        dataset: Option<PathBuf>,
    },
    /// Super-resolve bursts (dataset or real capture groups) with a checkpoint.
    Enhance {
        #[arg(long, value_name = "DIR")]
        dataset: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
    /// Bilinear and bicubic x2 upsampling of each reference frame.
    Baseline {
        #[arg(long, value_name = "DIR")]
        dataset: Option<PathBuf>,
    },
    /// Quality report for a directory of PNG outputs.
    Eval {
        #[arg(long, value_name = "DIR")]
        outputs: Option<PathBuf>,
        /// PNG directory or dataset directory holding the HR references.
        #[arg(long, value_name = "DIR")]
        refs: Option<PathBuf>,
    },
    /// Root and root-hair traits from segmentation masks.
    Analyze {
        #[arg(long, value_name = "DIR")]
        dataset: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        root_mask: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        hair_mask: Option<PathBuf>,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli) {
        Ok(summary) => {
            if !summary.is_empty() {
                print!("{summary}");
            }
            0
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: kind=usage msg={}", one_line(&msg));
            EXIT_USAGE
        }
        Err(CliError::Core(e)) => {
            eprintln!("error: kind={} msg={}", e.kind(), one_line(&e.to_string()));
            if matches!(e, Error::Config(_)) {
                EXIT_CONFIG
            } else {
                EXIT_RUNTIME
            }
        }
    }
}
