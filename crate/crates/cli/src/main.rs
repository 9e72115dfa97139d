//! `medrl` — composite-reward scoring, toy group-RL training, and judge-based
//! benchmark evaluation from one binary.

mod commands;
mod config;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use config::RunConfig;
use medrl_core::grouprl::Algorithm;

#[derive(Parser)]
#[command(
    name = "medrl",
    version,
    about = "Composite-reward RL engine for structured medical completions",
    subcommand_required = true
)]
struct Cli {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Reward weight preset.
    #[arg(long, global = true, value_enum)]
    weights: Option<WeightsArg>,

    /// Group-RL objective.
    #[arg(long, global = true, value_enum)]
    algo: Option<AlgoArg>,

    /// Embedding similarity threshold.
    #[arg(long, global = true)]
    tau: Option<f64>,

    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Scripted judge fixture; forces the mock judge.
    #[arg(long, global = true, value_name = "PATH")]
    mock_judge: Option<PathBuf>,

    /// Embedder fixture; forces the mock embedder.
    #[arg(long, global = true, value_name = "PATH")]
    mock_embed: Option<PathBuf>,

    /// Run directory for artifacts.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightsArg {
    V1,
    V2,
    V3,
    Medix,
    /// Use the explicit [weights.custom] table from the config file.
    Custom,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Grpo,
    Dapo,
    Gspo,
}

impl From<AlgoArg> for Algorithm {
    fn from(value: AlgoArg) -> Self {
        match value {
            AlgoArg::Grpo => Algorithm::Grpo,
            AlgoArg::Dapo => Algorithm::Dapo,
            AlgoArg::Gspo => Algorithm::Gspo,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Score a file of completions against references; write per-completion
    /// breakdowns and signal means.
    Score {
        /// JSONL of {id, text}.
        #[arg(long, value_name = "PATH")]
        completions: PathBuf,
        /// JSONL of {id, reference} with references of the form "<TAG> answer".
        #[arg(long, value_name = "PATH")]
        references: PathBuf,
    },
    /// Train the tabular policy on the synthetic task with mock gateways.
    TrainToy {
        /// Override the number of training steps.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Run the generate → judge → score pipeline over a benchmark suite.
    Eval {
        /// Benchmark suite spec (JSON).
        #[arg(long, value_name = "PATH")]
        bench: PathBuf,
        /// Reuse completed stage artifacts in the run directory.
        #[arg(long)]
        resume: bool,
    },
    /// Compare analytic objective gradients against central finite
    /// differences on random instances.
    ObjectiveCheck {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 1e-6)]
        step: f64,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut config = RunConfig::load(cli.config.as_deref())?;

    // Flag overrides on top of file + environment.
    if let Some(weights) = cli.weights {
        config.weights.preset = match weights {
            WeightsArg::V1 => "v1",
            WeightsArg::V2 => "v2",
            WeightsArg::V3 => "v3",
            WeightsArg::Medix => "medix",
            WeightsArg::Custom => "custom",
        }
        .to_string();
    }
    if let Some(algo) = cli.algo {
        config.objective.algorithm = algo.into();
    }
    if let Some(tau) = cli.tau {
        config.reward.tau = tau;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(path) = cli.mock_judge {
        config.gateways.judge.mode = "mock".to_string();
        config.gateways.judge.fixture = Some(path);
    }
    if let Some(path) = cli.mock_embed {
        config.gateways.embedder.mode = "mock".to_string();
        config.gateways.embedder.fixture = Some(path);
    }

    let out = |purpose: &str| -> Result<PathBuf> {
        cli.out
            .clone()
            .with_context(|| format!("--out DIR is required for {purpose}"))
    };

    match cli.command {
        Command::Score {
            completions,
            references,
        } => commands::score(&config, &completions, &references, &out("score")?),
        Command::TrainToy { steps } => {
            if let Some(steps) = steps {
                config.train.steps = steps;
            }
            commands::train_toy(&config, &out("train-toy")?)
        }
        Command::Eval { bench, resume } => commands::eval(&config, &bench, resume, &out("eval")?),
        Command::ObjectiveCheck { instances, step } => {
            commands::objective_check(&config, instances, step)
        }
    }
}
