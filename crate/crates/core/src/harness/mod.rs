//! Experiment harness: agent training, paired evaluation against the tuned
//! baseline, summary metrics, parameter sweeps and the file-based pipeline
//! behind the CLI.

mod config;
mod eval;
mod metrics;
pub mod pipeline;
mod sweep;
mod train;

pub use config::{
    ActionsSection, EnvSection, EvalMode, EvaluationSection, ExperimentConfig, OutputSection, ProblemSection,
    SweepSection, TunerSection,
};
pub use eval::{
    compare, evaluate_nag, evaluate_policy, history_quantiles, EvalReport, HistoryRow, InstanceOutcome,
    MethodReport, PairedRecord,
};
pub use metrics::{quantile, relative_improvement, runtime_reduction, Summary};
pub use sweep::{sweep_dimension, sweep_training_length, DimensionRow, EpisodesRow};
pub use train::{train_agent, TrainingReport};
