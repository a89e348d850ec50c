//! `rail`: command-line driver for highway imitation experiments.

mod commands;
mod config;
mod run;
mod train;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// An error caused by the caller's input; exits with status 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Parser)]
#[command(name = "rail", version, about = "Random-search adversarial imitation learning for highway driving")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Record scripted-expert demonstrations.
    GenExpert(commands::GenExpertArgs),
    /// Train a policy by behavior cloning or RAIL.
    Train(train::TrainArgs),
    /// Average driving statistics of a checkpoint or the expert.
    Eval(commands::EvalArgs),
    /// Write one weight layer as a CSV matrix plus a histogram.
    ExportWeights(commands::ExportArgs),
    /// Check a run directory against its manifest.
    Verify(commands::VerifyArgs),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let usage = err.chain().any(|e| {
        e.is::<Usage>() || e.downcast_ref::<rail_core::Error>().is_some_and(rail_core::Error::is_validation)
    });
    if usage {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenExpert(a) => commands::cmd_gen_expert(a),
        Command::Train(a) => train::cmd_train(a),
        Command::Eval(a) => commands::cmd_eval(a),
        Command::ExportWeights(a) => commands::cmd_export_weights(a),
        Command::Verify(a) => commands::cmd_verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
