//! `walshnet`: transforms, parameter counts, gradient checks, training and
//! benchmarks for WHT layers.

mod commands;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{bench, gradcheck, paramcount, train, transform};
use error::{one_line, CliError, Result};
use output::Format;

#[derive(Debug, Parser)]
#[command(name = "walshnet", version, about = "Walsh-Hadamard transform layers: tools and experiments")]
struct Cli {
    /// Experiment, model or layer config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for data shuffling, initialization and random test points.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Output directory for training runs.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "human")]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Transform a vector read from a text file.
    Transform(transform::TransformArgs),
    /// Report per-layer and total parameter counts.
    Paramcount(paramcount::ParamcountArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(gradcheck::GradcheckArgs),
    /// Train the model of an experiment config.
    Train,
    /// Time layer forward passes and count their operations.
    Bench(bench::BenchArgs),
}

fn run(cli: Cli) -> Result<()> {
    if cli.threads == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot start {} threads: {e}", cli.threads)))?;
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Transform(args) => transform::run(args, cli.format),
        Command::Paramcount(args) => paramcount::run(args, cli.config.as_deref(), cli.format),
        Command::Gradcheck(args) => gradcheck::run(args, seed, cli.format),
        Command::Train => train::run(cli.config.as_deref(), cli.seed, cli.out.as_deref(), cli.threads, cli.format),
        Command::Bench(args) => bench::run(args, seed, cli.format),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", if first.starts_with("error:") { first.to_string() } else { format!("error: {first}") });
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::FAILURE
        }
    }
}
