//! Tuned NAG baseline: a fixed-parameter NAG runner plus Nelder-Mead over a
//! sampled training-set objective.

mod nelder_mead;

pub use nelder_mead::{nelder_mead, NelderMeadOptions, NelderMeadResult};

use std::fs;
use std::path::Path;

use nalgebra::DVector;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::EnvConfig;
use crate::problem::{ProblemSet, QuadraticProblem};
use crate::rng::{self, stream_rng};
use crate::updates::{nag_update, Lookahead, UpdateMemory, UpdateParams};
use crate::{Error, Result};

/// Initial learning rate, momentum and decay of exponential-decay NAG.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NagHyperparams {
    pub eta1: f64,
    pub mu: f64,
    pub delta: f64,
    /// Not tuned; carried through from the starting point.
    #[serde(default)]
    pub lookahead: Lookahead,
}

impl Default for NagHyperparams {
    /// Starting point of the tuner.
    fn default() -> Self {
        NagHyperparams {
            eta1: 1e-3,
            mu: 0.9,
            delta: 1e-2,
            lookahead: Lookahead::Standard,
        }
    }
}

impl NagHyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.eta1 > 0.0 && (0.0..1.0).contains(&self.mu) && self.delta >= 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid NAG parameters {self:?}")))
        }
    }

    pub fn update_params(&self) -> UpdateParams {
        UpdateParams {
            lookahead: self.lookahead,
            ..UpdateParams::nag(self.eta1, self.mu, self.delta)
        }
    }

    /// Map to the unconstrained search space `(ln η, logit μ, ln δ)`.
    pub fn to_unconstrained(&self) -> [f64; 3] {
        [
            self.eta1.ln(),
            (self.mu / (1.0 - self.mu)).ln(),
            self.delta.ln(),
        ]
    }

    pub fn from_unconstrained(p: &[f64], lookahead: Lookahead) -> Self {
        NagHyperparams {
            eta1: p[0].exp(),
            mu: 1.0 / (1.0 + (-p[1]).exp()),
            delta: p[2].exp(),
            lookahead,
        }
    }
}

/// Result of a fixed-parameter NAG run.
#[derive(Debug, Clone, PartialEq)]
pub struct NagRun {
    /// Objective at every evaluated point, starting with `f(x1)`.
    pub trace: Vec<f64>,
    pub best_y: f64,
    pub final_y: f64,
    pub evaluations: usize,
    pub reached_target: bool,
}

/// Plain NAG from the stored start point under the budget (and optional
/// target) of `cfg`. Counts evaluations the same way the environment does.
pub fn run_nag_fixed(problem: &QuadraticProblem, hp: &NagHyperparams, cfg: &EnvConfig) -> Result<NagRun> {
    hp.validate()?;
    let params = hp.update_params();
    let limit = cfg.evaluation_limit();
    let mut x: DVector<f64> = problem.x1().clone();
    let (mut y, mut g) = problem.value_and_gradient(&x)?;
    let target = cfg.target.map(|t| t.resolve(y));
    let hit = |best: f64| matches!(target, Some(t) if best <= t);

    let mut trace = Vec::with_capacity(limit.min(1 << 16));
    trace.push(y);
    let mut best_y = y;
    let mut memory = UpdateMemory::new(problem.dim());
    let mut k = 0;
    while !hit(best_y) && trace.len() < limit {
        k += 1;
        x = nag_update(&mut memory, &x, &g, k, &params);
        (y, g) = problem.value_and_gradient(&x)?;
        trace.push(y);
        best_y = best_y.min(y);
    }
    Ok(NagRun {
        evaluations: trace.len(),
        final_y: y,
        best_y,
        reached_target: hit(best_y),
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Mean of `ln y_K`.
    #[default]
    MeanLog,
    MeanRaw,
}

/// Which objective value of a fixed-budget run is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Score {
    /// Objective at the last evaluated point.
    #[default]
    Final,
    /// Lowest objective seen during the run.
    BestSoFar,
}

impl Score {
    pub fn pick(self, final_y: f64, best_y: f64) -> f64 {
        match self {
            Score::Final => final_y,
            Score::BestSoFar => best_y,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Fresh subsample on every objective call.
    #[default]
    Resample,
    /// One fixed subsample for all calls.
    Common,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TunerConfig {
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_sample_size")]
    pub sample_size: usize,
    /// Evaluation budget `K` of each run.
    pub budget: usize,
    #[serde(default)]
    pub seed: u64,
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

impl TunerConfig {
    pub fn new(budget: usize, seed: u64) -> Self {
        TunerConfig {
            max_iters: default_max_iters(),
            sample_size: default_sample_size(),
            budget,
            seed,
            aggregation: Aggregation::MeanLog,
            sampling: Sampling::Resample,
            score: Score::Final,
            initial: None,
        }
    }

    pub fn validate(&self, set_size: usize) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::InvalidArgument("tuner needs max_iters >= 1".into()));
        }
        if self.sample_size < 1 || self.sample_size > set_size {
            return Err(Error::InvalidArgument(format!(
                "sample size {} must be within 1..={set_size}",
                self.sample_size
            )));
        }
        if self.budget < 1 {
            return Err(Error::InvalidArgument("budget must be at least 1".into()));
        }
        Ok(())
    }

    fn run_config(&self) -> EnvConfig {
        EnvConfig::fixed_budget(self.budget, 1, 1)
    }
}

/// Aggregate per-instance final objectives.
pub fn aggregate(values: &[f64], how: Aggregation) -> f64 {
    let n = values.len() as f64;
    match how {
        Aggregation::MeanLog => values.iter().map(|y| y.max(1e-300).ln()).sum::<f64>() / n,
        Aggregation::MeanRaw => values.iter().sum::<f64>() / n,
    }
}

/// Sampled training-set performance of `hp`, as minimized by the tuner.
///
/// Draws `sample_size` instances with replacement from a stream keyed by the
/// master seed and `call`, runs NAG on each and aggregates the scored
/// objective of each run. Non-finite results count as `+inf`.
pub fn hyper_objective(hp: &NagHyperparams, set: &ProblemSet, cfg: &TunerConfig, call: u64) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let stream = match cfg.sampling {
        Sampling::Resample => call,
        Sampling::Common => 0,
    };
    let mut rng = stream_rng(rng::derive_seed(cfg.seed, rng::stream::TUNER), stream);
    let picks: Vec<usize> = (0..cfg.sample_size)
        .map(|_| rng.random_range(0..set.len()))
        .collect();
    let run_cfg = cfg.run_config();
    let results = picks
        .par_iter()
        .map(|&i| run_nag_fixed(&set.instances[i], hp, &run_cfg).map(|r| cfg.score.pick(r.final_y, r.best_y)))
        .collect::<Result<Vec<f64>>>()?;
    let value = aggregate(&results, cfg.aggregation);
    Ok(if value.is_nan() { f64::INFINITY } else { value })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOutcome {
    pub params: NagHyperparams,
    pub objective: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

/// Nelder-Mead over the unconstrained parameterization of [`NagHyperparams`].
pub fn tune_baseline(set: &ProblemSet, cfg: &TunerConfig) -> Result<TuneOutcome> {
    cfg.validate(set.len())?;
    let start = cfg.initial.unwrap_or_default();
    start.validate()?;
    let mut call = 0u64;
    let mut failure = None;
    let objective = |p: &[f64]| {
        let hp = NagHyperparams::from_unconstrained(p, start.lookahead);
        call += 1;
        if hp.validate().is_err() {
            return f64::INFINITY;
        }
        match hyper_objective(&hp, set, cfg, call) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::INFINITY
            }
        }
    };
    let opts = NelderMeadOptions {
        max_iters: cfg.max_iters,
        ..Default::default()
    };
    let result = nelder_mead(objective, &start.to_unconstrained(), &opts);
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(TuneOutcome {
        params: NagHyperparams::from_unconstrained(&result.x, start.lookahead),
        objective: result.value,
        iterations: result.iterations,
        evaluations: result.evaluations,
    })
}

/// Persisted tuning result, referenced by later pipeline stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TunedRecord {
    pub eta1: f64,
    pub mu: f64,
    pub delta: f64,
    #[serde(default)]
    pub lookahead: Lookahead,
    pub objective: f64,
    pub seed: u64,
    pub config_hash: String,
}

impl TunedRecord {
    pub fn new(outcome: &TuneOutcome, seed: u64, config_hash: String) -> Self {
        TunedRecord {
            eta1: outcome.params.eta1,
            mu: outcome.params.mu,
            delta: outcome.params.delta,
            lookahead: outcome.params.lookahead,
            objective: outcome.objective,
            seed,
            config_hash,
        }
    }

    pub fn params(&self) -> NagHyperparams {
        NagHyperparams {
            eta1: self.eta1,
            mu: self.mu,
            delta: self.delta,
            lookahead: self.lookahead,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.into(),
            reason: e.to_string(),
        })
    }
}
