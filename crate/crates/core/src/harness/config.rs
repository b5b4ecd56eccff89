use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::AgentConfig;
use crate::environment::{EnvConfig, MemoryMode, RewardKind, StateBounds, TargetRule};
use crate::problem::KappaSpec;
use crate::tuner::{Aggregation, NagHyperparams, Sampling, Score, TunerConfig};
use crate::updates::{ActionSet, ActionSetVariant, Lookahead, make_action_set};
use crate::{Error, Result};

/// Complete description of one experiment, read from a TOML file.
///
/// ```toml
/// [problem]
/// dim = 20
/// kappa = { uniform = { lo = 100.0, hi = 1000.0 } }
///
/// [env]
/// budget = 50
/// m1 = 10
/// m2 = 20
///
/// [actions]
/// variant = "H1"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSection,
    pub env: EnvSection,
    #[serde(default)]
    pub agent: AgentConfig,
    pub actions: ActionsSection,
    #[serde(default)]
    pub tuner: TunerSection,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub dim: usize,
    pub kappa: KappaSpec,
    #[serde(default = "default_set_size")]
    pub train_size: usize,
    #[serde(default = "default_set_size")]
    pub test_size: usize,
}

fn default_set_size() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub budget: usize,
    pub m1: usize,
    pub m2: usize,
    #[serde(default)]
    pub bounds: StateBounds,
    #[serde(default = "default_true")]
    pub log_state: bool,
    #[serde(default)]
    pub reward: RewardKind,
    #[serde(default = "default_true")]
    pub greedy_revert: bool,
    #[serde(default)]
    pub memory: MemoryMode,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionsSection {
    pub variant: ActionSetVariant,
    /// Evaluation point of every NAG operator, baseline included.
    #[serde(default)]
    pub lookahead: Lookahead,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TunerSection {
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_sample_size")]
    pub sample_size: usize,
    #[serde(default)]
    pub aggregation: Aggregation,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub score: Score,
    #[serde(default)]
    pub initial: Option<NagHyperparams>,
}

fn default_max_iters() -> usize {
    500
}

fn default_sample_size() -> usize {
    50
}

impl Default for TunerSection {
    fn default() -> Self {
        TunerSection {
            max_iters: default_max_iters(),
            sample_size: default_sample_size(),
            aggregation: Aggregation::default(),
            sampling: Sampling::default(),
            score: Score::default(),
            initial: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    #[default]
    FixedBudget,
    FixedTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSection {
    #[serde(default)]
    pub mode: EvalMode,
    /// Objective compared in fixed-budget mode.
    #[serde(default)]
    pub score: Score,
    #[serde(default = "default_target")]
    pub target: TargetRule,
    /// Evaluation cap in fixed-target mode, as a multiple of the budget.
    #[serde(default = "default_cap_factor")]
    pub cap_factor: usize,
}

fn default_target() -> TargetRule {
    TargetRule::Relative(1e-4)
}

fn default_cap_factor() -> usize {
    10
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection {
            mode: EvalMode::FixedBudget,
            score: Score::default(),
            target: default_target(),
            cap_factor: default_cap_factor(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default = "default_episode_grid")]
    pub episodes: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    /// `(m1, m2)` pairs; empty means the resolution of `[env]`.
    #[serde(default)]
    pub resolutions: Vec<[usize; 2]>,
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
}

fn default_episode_grid() -> Vec<usize> {
    vec![100, 400, 1600, 6400]
}

fn default_seeds() -> usize {
    5
}

fn default_dims() -> Vec<usize> {
    vec![10, 20, 50]
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            episodes: default_episode_grid(),
            seeds: default_seeds(),
            resolutions: Vec::new(),
            dims: default_dims(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: default_out_dir() }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.problem.dim < 1 {
            return Err(Error::Config("problem.dim must be at least 1".into()));
        }
        if self.problem.train_size < 1 || self.problem.test_size < 1 {
            return Err(Error::Config("problem set sizes must be at least 1".into()));
        }
        self.problem.kappa.validate()?;
        self.env_config().validate()?;
        self.agent.validate()?;
        self.tuner_config(0).validate(self.problem.train_size)?;
        if self.evaluation.cap_factor < 1 {
            return Err(Error::Config("evaluation.cap_factor must be at least 1".into()));
        }
        if self.sweep.seeds < 1 {
            return Err(Error::Config("sweep.seeds must be at least 1".into()));
        }
        Ok(())
    }

    /// Environment used for training and fixed-budget evaluation.
    pub fn env_config(&self) -> EnvConfig {
        let e = &self.env;
        EnvConfig {
            budget: e.budget,
            target: None,
            target_cap: None,
            m1: e.m1,
            m2: e.m2,
            bounds: e.bounds,
            log_state: e.log_state,
            reward: e.reward,
            greedy_revert: e.greedy_revert,
            memory: e.memory,
        }
    }

    /// Environment used for deployment in the configured evaluation mode.
    pub fn eval_env_config(&self) -> EnvConfig {
        let base = self.env_config();
        match self.evaluation.mode {
            EvalMode::FixedBudget => base,
            EvalMode::FixedTarget => {
                let cap = self.evaluation.cap_factor * base.budget;
                base.with_target(self.evaluation.target, cap)
            }
        }
    }

    pub fn tuner_config(&self, seed: u64) -> TunerConfig {
        TunerConfig {
            max_iters: self.tuner.max_iters,
            sample_size: self.tuner.sample_size,
            budget: self.env.budget,
            seed,
            aggregation: self.tuner.aggregation,
            sampling: self.tuner.sampling,
            score: self.tuner.score,
            initial: Some(NagHyperparams {
                lookahead: self.actions.lookahead,
                ..self.tuner.initial.unwrap_or_default()
            }),
        }
    }

    /// Action set of the configured variant around the tuned baseline.
    pub fn action_set(&self, tuned: Option<&NagHyperparams>) -> Result<ActionSet> {
        make_action_set(self.actions.variant, tuned, self.actions.lookahead)
    }

    /// Short content hash of the parsed configuration.
    pub fn hash_hex(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(&Sha256::digest(canonical.as_bytes())[..8])
    }
}
