//! `tactsort`: run grasp-and-sort episodes, generate tactile datasets, and
//! train or evaluate the classifier. Every file lands under `--out`.

mod config;
mod dataset;
mod inspect;
mod output;
mod plots;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "tactsort", version, about = "Tactile grasp, reorientation and sorting simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Output directory; nothing is written outside it.
    #[arg(long, env = "TACTSORT_OUT", default_value = "tactsort-out")]
    pub out: PathBuf,
    /// Worker threads (default: available cores).
    #[arg(long)]
    pub workers: Option<usize>,
}

/// Flags for commands that build a world.
#[derive(Args, Debug, Clone)]
pub struct WorldArgs {
    /// Scenario TOML file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Gripper model TOML (default: built-in geometry).
    #[arg(long)]
    pub gripper_model: Option<PathBuf>,
    /// Base seed (default: the scenario's seed).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run grasp, reorientation and classification episodes.
    Simulate {
        #[command(flatten)]
        world: WorldArgs,
        #[command(flatten)]
        common: Common,
        /// Controller parameters TOML (default: built-in values).
        #[arg(long)]
        controller_config: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        /// Trained model JSON; without it a classifier is trained on the
        /// scenario's synthetic dataset first.
        #[arg(long)]
        classifier: Option<PathBuf>,
        /// Also write PNG plots.
        #[arg(long)]
        plots: bool,
    },
    /// Generate a labelled tactile sample dataset.
    Dataset {
        #[command(flatten)]
        world: WorldArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Train the classifier on a generated dataset.
    Train {
        /// Dataset directory (or its manifest.json).
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Recorded in the model; defaults to the dataset's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a trained model on a dataset split.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        /// Model JSON (default: model.json in the output directory).
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        plots: bool,
    },
    /// Describe an artifact: frame container, JSON, JSONL or TOML.
    Inspect { path: PathBuf },
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitArg {
    Train,
    Test,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate {
            world,
            common,
            controller_config,
            episodes,
            classifier,
            plots,
        } => simulate::run(&simulate::SimulateArgs {
            world,
            common,
            controller_config,
            episodes,
            classifier,
            plots,
        }),
        Command::Dataset { world, common } => dataset::generate(&world, &common),
        Command::Train { dataset, common, seed } => dataset::train(&dataset, &common, seed),
        Command::Eval {
            dataset,
            model,
            split,
            common,
            plots,
        } => dataset::eval(&dataset, model.as_deref(), split, &common, plots),
        Command::Inspect { path } => inspect::run(&path),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
