//! `hecgcn`: train, evaluate and self-check the multi-behavior recommender.

mod config;
mod eval;
mod gradcheck;
mod run;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "hecgcn", version, about = "Hypergraph-enhanced cascading GCN for multi-behavior recommendation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a self-describing run directory.
    Train(train::TrainArgs),
    /// Re-score a run directory on the validation or test split.
    Eval(eval::EvalArgs),
    /// Check analytic gradients of the training loss on a built-in toy.
    Gradcheck(gradcheck::GradcheckArgs),
}

#[derive(clap::Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// TOML file with training hyperparameters.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override the random seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override one config key, e.g. `--set lr=0`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Enable an ablation, e.g. `--ablate no_hyper`. Repeatable.
    #[arg(long = "ablate", value_name = "NAME")]
    pub ablations: Vec<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => train::run(args),
        Command::Eval(args) => eval::run(args),
        Command::Gradcheck(args) => gradcheck::run(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
