//! `hdhgn`: build dataset caches, train and evaluate hypergraph code
//! classifiers, run trials and ablations, predict, and check gradients.

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

mod artifacts;
mod commands;
mod config;
mod error;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::build::BuildArgs;
use commands::gradcheck::GradcheckArgs;
use commands::predict::PredictArgs;
use commands::run::{AblateArgs, EvalArgs, RunArgs};
use error::{CliResult, Status};

const EXIT_CODES: &str = "Exit codes:
  0  success
  1  internal error
  2  input violates the canonical AST schema
  3  I/O error or unreadable cache/checkpoint file
  4  invalid configuration or arguments
  5  training aborted (non-finite loss)
  6  vocabulary mismatch
  7  verification failed (gradient check)";

#[derive(Debug, Parser)]
#[command(name = "hdhgn", version, about = "Hypergraph neural network code classifier", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the dataset cache and vocabulary from canonical ASTs.
    Build(BuildArgs),
    /// Train one model on the seed's split and save its best checkpoint.
    Train(RunArgs),
    /// Evaluate a checkpoint on a partition of the seed's split.
    Eval(EvalArgs),
    /// Repeat training over consecutive seeds and report mean and sd.
    Trials(RunArgs),
    /// Run trials for each variant and print a comparison table.
    Ablate(AblateArgs),
    /// Predict labels for canonical ASTs with a checkpoint.
    Predict(PredictArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Build(a) => commands::build::run(a),
        Command::Train(a) => commands::run::train(a),
        Command::Eval(a) => commands::run::eval(a),
        Command::Trials(a) => commands::run::trials(a),
        Command::Ablate(a) => commands::run::ablate(a),
        Command::Predict(a) => commands::predict::run(a),
        Command::Gradcheck(a) => commands::gradcheck::run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                Status::Config
            } else {
                Status::Ok
            }
            .into();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => Status::Ok.into(),
        Err(e) => {
            eprintln!("error: {e}");
            e.status().into()
        }
    }
}
