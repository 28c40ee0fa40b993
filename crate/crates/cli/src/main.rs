//! `jdsep`: batch front end for separation, scene synthesis, benchmarking and
//! evaluation.

mod bench;
mod eval;
mod files;
mod separate;
mod synth;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Bad input that clap cannot catch, such as a mono recording.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Parser)]
#[command(name = "jdsep", version, about = "Multichannel blind source separation")]
struct Cli {
    /// Worker threads for the frequency-parallel loops (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Separate a multichannel WAV into source images.
    Separate(separate::SeparateArgs),
    /// Fit a model and write the estimate and run report without audio.
    Fit(separate::SeparateArgs),
    /// Draw a synthetic scene and write its WAVs and ground truth.
    Synth(synth::SynthArgs),
    /// Time methods over a grid of scene sizes.
    Bench(bench::BenchArgs),
    /// Score separated outputs against a synthetic scene.
    Eval(eval::EvalArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(UsageError("--workers must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Separate(args) => separate::run(&args, true),
        Command::Fit(args) => separate::run(&args, false),
        Command::Synth(args) => synth::run(&args),
        Command::Bench(args) => bench::run(&args),
        Command::Eval(args) => eval::run(&args),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
