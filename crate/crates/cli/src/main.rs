use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

mod commands;
mod io;

#[derive(Parser)]
#[command(name = "navfield", version, about = "Uncertainty-aware image-goal navigation in a raycast grid world")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug, Default)]
pub struct Common {
    /// Flat `key = value` config file; omitted keys keep their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Ablations such as `no-fu`, `no-at,no-cbam` or `none`.
    #[arg(long, global = true)]
    pub ablate: Option<String>,
    /// Concurrent evaluation episodes.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Write image dumps for this many episodes per configuration.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "3")]
    pub dump_viz: Option<usize>,
    /// Directory holding a generated scene manifest.
    #[arg(long, global = true)]
    pub scenes: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the train and validation scene splits plus a manifest.
    GenScenes {
        #[command(flatten)]
        common: Common,
    },
    /// Train one policy; resumes if the output directory holds a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate trained runs on shared validation episodes.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Run directories written by `train`.
        #[arg(long = "run", required = true)]
        runs: Vec<PathBuf>,
    },
    /// Train and evaluate the six ablation rows.
    Ablate {
        #[command(flatten)]
        common: Common,
    },
    /// Dump uncertainty, saliency, trajectory and map images for a run.
    Viz {
        #[command(flatten)]
        common: Common,
        #[arg(long = "run", required = true)]
        run: PathBuf,
    },
    /// Compare uncertainty-greedy and random-walk coverage over scene seeds.
    Explore {
        #[command(flatten)]
        common: Common,
        /// Number of paired scene seeds.
        #[arg(long, default_value_t = 20)]
        pairs: u64,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenScenes { common } => commands::gen_scenes(&common),
        Command::Train { common } => commands::train(&common),
        Command::Eval { common, runs } => commands::eval(&common, &runs),
        Command::Ablate { common } => commands::ablate(&common),
        Command::Viz { common, run } => commands::viz(&common, &run),
        Command::Explore { common, pairs } => commands::explore(&common, pairs),
    }
}
