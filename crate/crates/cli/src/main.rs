//! `freqest` command-line front end: environment/config wiring, training and
//! evaluation commands, model persistence, reproducible seeds.

mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};
use freqest_core::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "freqest", version, about = "Adaptive Bayesian frequency-estimation benchmark")]
struct Cli {
    /// JSON config file; explicit flags win over config values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for episode batches (default: available cores).
    /// Results are schedule-independent by the derived-seed design.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train NN heuristics with the cross-entropy method and keep the best.
    Train(commands::TrainArgs),
    /// Estimate the Bayes risk of a heuristic (by experiment or by time,
    /// depending on the environment's resource mode).
    Evaluate(commands::EvaluateArgs),
    /// Emit lower bounds for the Bayes risk.
    Bounds(commands::BoundsArgs),
    /// Tally the distribution of chosen design times.
    Designs(commands::DesignsArgs),
    /// Compare heuristics on one estimation with a pinned truth via
    /// credible regions.
    Credible(commands::CredibleArgs),
    /// Trace a single episode step by step.
    Episode(commands::EpisodeArgs),
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_) | Error::ModelFile(_) | Error::Io(_) => 2,
        Error::NumericFailure(_) => 3,
        Error::DegeneratePosterior(_) => 4,
        Error::ResampleFailure(_) | Error::InvalidState(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let file_config = match config::FileConfig::load(cli.config.as_deref()) {
        Ok(cfg) => cfg,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(exit_code_for(&err));
        }
    };

    if let Some(threads) = cli.threads.or(file_config.threads) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: could not configure {threads} worker threads: {e}");
            return ExitCode::from(2);
        }
    }

    let result = match cli.cmd {
        Cmd::Train(args) => commands::train(args, &file_config),
        Cmd::Evaluate(args) => commands::evaluate(args, &file_config),
        Cmd::Bounds(args) => commands::bounds(args, &file_config),
        Cmd::Designs(args) => commands::designs(args, &file_config),
        Cmd::Credible(args) => commands::credible(args, &file_config),
        Cmd::Episode(args) => commands::episode(args, &file_config),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
