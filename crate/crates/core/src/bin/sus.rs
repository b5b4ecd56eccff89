use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use sus_core::harness::pipeline;
use sus_core::harness::ExperimentConfig;

#[derive(Parser)]
#[command(name = "sus", version, about = "Learned update selection for quadratic minimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the training and test problem sets.
    GenProblems(Common),
    /// Tune the baseline hyperparameters on the training set.
    Tune(Common),
    /// Train a Q-table and write the greedy policy.
    Train(Common),
    /// Compare the trained policy with the tuned baseline on the test set.
    Eval(Common),
    /// Performance against training length, per state resolution.
    SweepEpisodes(Common),
    /// Fixed-target runtime reduction per problem dimension.
    SweepDim(Common),
    /// Write the greedy policy of a stored Q-table.
    ExportPolicy(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Master seed; every random stream derives from it.
    #[arg(long)]
    seed: u64,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

type StageFn = fn(&ExperimentConfig, u64, &Path) -> sus_core::Result<Vec<PathBuf>>;

fn run(cli: Cli) -> anyhow::Result<()> {
    let (name, stage, common): (&str, StageFn, Common) = match cli.command {
        Command::GenProblems(c) => ("gen-problems", pipeline::run_gen_problems, c),
        Command::Tune(c) => ("tune", pipeline::run_tune, c),
        Command::Train(c) => ("train", pipeline::run_train, c),
        Command::Eval(c) => ("eval", pipeline::run_eval, c),
        Command::SweepEpisodes(c) => ("sweep-episodes", pipeline::run_sweep_episodes, c),
        Command::SweepDim(c) => ("sweep-dim", pipeline::run_sweep_dim, c),
        Command::ExportPolicy(c) => ("export-policy", pipeline::run_export_policy, c),
    };
    let cfg = ExperimentConfig::load(&common.config).context("loading configuration")?;
    let dir = common.out.unwrap_or_else(|| cfg.output.dir.clone());
    let outputs = stage(&cfg, common.seed, &dir).with_context(|| format!("{name} failed"))?;
    for path in outputs {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
