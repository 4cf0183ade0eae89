//! `lensforge` command-line driver.
//!
//! Exit codes: 0 success, 1 configuration or load error, 2 partial data
//! failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{SplitArg, Status};
use config::{Overrides, ProviderKind};

#[derive(Parser, Debug)]
#[command(name = "lensforge", version, about = "Compile and run VLM artifact detectors")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "lensforge.toml")]
    config: PathBuf,
    /// Seed for every random choice; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Provider backend; overrides `provider.kind`.
    #[arg(long, global = true, value_enum)]
    provider: Option<ProviderKind>,
    /// Concurrent provider calls.
    #[arg(long, global = true, default_value_t = 8, value_parser = clap::value_parser!(u32).range(1..))]
    max_in_flight: u32,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Drop manifest images without a human and write the filtered manifest.
    Prepare,
    /// Compile a program (instructions and demonstrations) per specialist.
    Optimize,
    /// Score a program on a split and write the evaluation report.
    Evaluate {
        /// Program file [default: <output-dir>/program.json].
        #[arg(long)]
        program: Option<PathBuf>,
        /// Split to score.
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Manifest to evaluate instead of the configured one; repeat for a
        /// suite report.
        #[arg(long)]
        manifest: Vec<PathBuf>,
    },
    /// Classify images and write one trace per line.
    Predict {
        /// Program file [default: <output-dir>/program.json].
        #[arg(long)]
        program: Option<PathBuf>,
        /// Classify one image by id and print its verdict.
        #[arg(long)]
        image: Option<String>,
        /// Split to classify when no --image is given.
        #[arg(long, value_enum, default_value = "all")]
        split: SplitArg,
        /// Manifest to take images from instead of the configured one.
        #[arg(long)]
        manifest: Vec<PathBuf>,
    },
    /// Print the compile and evaluation reports found in the output directory.
    Report,
}

fn run(cli: &Cli) -> anyhow::Result<Status> {
    let overrides = Overrides {
        seed: cli.seed,
        provider: cli.provider,
        output_dir: cli.output_dir.clone(),
    };
    let resolved = config::load(&cli.config, &overrides)?;
    let threads = cli.max_in_flight as usize;
    match &cli.command {
        Command::Prepare => commands::prepare(&resolved, threads),
        Command::Optimize => {
            let created = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
            commands::optimize(&resolved, threads, created)
        }
        Command::Evaluate {
            program,
            split,
            manifest,
        } => commands::evaluate(&resolved, threads, program.as_deref(), *split, manifest),
        Command::Predict {
            program,
            image,
            split,
            manifest,
        } => commands::predict_cmd(&resolved, threads, program.as_deref(), image.as_deref(), *split, manifest),
        Command::Report => commands::report(&resolved, &mut std::io::stdout().lock()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Partial) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
