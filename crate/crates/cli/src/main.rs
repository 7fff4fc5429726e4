//! `cnnlstm`: train, evaluate and query the CNN-LSTM daily temperature forecaster.

mod commands;
mod data;
mod manifest;

use std::fmt;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_DIVERGENCE: u8 = 4;
const EXIT_GRADCHECK: u8 = 5;

/// Invalid flag combination detected after parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "cnnlstm", version, about = "CNN-LSTM next-day temperature forecaster")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model and write checkpoint, training log and run manifest.
    Train(commands::train::TrainArgs),
    /// Score a checkpoint on the test split of a CSV.
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Forecast the days following the end of a CSV.
    Predict(commands::predict::PredictArgs),
    /// Compare analytic and finite-difference gradients on a small model.
    Gradcheck(commands::gradcheck::GradcheckArgs),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use cnnlstm::Error as E;
    if err.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    match err.downcast_ref::<E>() {
        Some(E::Config(_) | E::Parameter(_)) => EXIT_USAGE,
        Some(E::Divergence { .. } | E::NonFinite(_)) => EXIT_DIVERGENCE,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => commands::train::run(args),
        Command::Evaluate(args) => commands::evaluate::run(args),
        Command::Predict(args) => commands::predict::run(args),
        Command::Gradcheck(args) => commands::gradcheck::run(args),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_GRADCHECK),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
