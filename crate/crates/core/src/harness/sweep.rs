use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{EvalMode, ExperimentConfig};
use super::eval::{compare, evaluate_nag, evaluate_policy};
use super::metrics::Summary;
use super::pipeline::Prepared;
use super::train::train_agent;
use crate::agent::AgentConfig;
use crate::environment::EnvConfig;
use crate::rng::derive_seed;
use crate::{Error, Result};

/// One grid point of the training-length sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodesRow {
    pub m1: usize,
    pub m2: usize,
    pub episodes: usize,
    /// Mean and standard deviation over training seeds of the mean relative improvement.
    pub mean: f64,
    pub std: f64,
    pub seed_means: Vec<f64>,
}

/// One grid point of the dimension sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionRow {
    pub dim: usize,
    pub count: usize,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub mean: f64,
    pub censored_nag: usize,
    pub censored_sus: usize,
}

fn seed_for_run(seed: u64, run: usize) -> u64 {
    derive_seed(seed, 0x5eed_0000 + run as u64)
}

/// Mean relative improvement over the tuned baseline for every
/// `(resolution, episodes, training seed)` combination. Problem sets and the
/// baseline are shared by all grid points.
pub fn sweep_training_length(cfg: &ExperimentConfig, grid: &[usize], seed: u64) -> Result<Vec<EpisodesRow>> {
    let prepared = Prepared::build(cfg, seed)?;
    sweep_training_length_prepared(cfg, &prepared, grid, seed)
}

pub(crate) fn sweep_training_length_prepared(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    grid: &[usize],
    seed: u64,
) -> Result<Vec<EpisodesRow>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty episode grid".into()));
    }
    let actions = cfg.action_set(prepared.tuned.as_ref())?;
    let resolutions: Vec<(usize, usize)> = if cfg.sweep.resolutions.is_empty() {
        vec![(cfg.env.m1, cfg.env.m2)]
    } else {
        cfg.sweep.resolutions.iter().map(|r| (r[0], r[1])).collect()
    };
    let base_env = cfg.env_config();
    let nag = evaluate_nag(&prepared.test, &prepared.baseline(), &base_env)?;

    let seeds = cfg.sweep.seeds;
    let mut jobs = Vec::with_capacity(resolutions.len() * grid.len() * seeds);
    for &res in &resolutions {
        for &episodes in grid {
            for s in 0..seeds {
                jobs.push((res, episodes, s));
            }
        }
    }
    let means = jobs
        .par_iter()
        .map(|&((m1, m2), episodes, s)| {
            let env = EnvConfig { m1, m2, ..base_env.clone() };
            let agent = AgentConfig { episodes, ..cfg.agent.clone() };
            let (q, _) = train_agent(&prepared.train, &actions, &env, &agent, seed_for_run(seed, s))?;
            let sus = evaluate_policy(&prepared.test, &q, &actions, &env)?;
            let report = compare(&nag, &sus, EvalMode::FixedBudget, cfg.evaluation.score)?;
            let summary = report
                .summary
                .ok_or_else(|| Error::InvalidArgument("no comparable instances".into()))?;
            Ok(summary.mean)
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut rows = Vec::new();
    for (chunk, &((m1, m2), episodes, _)) in means.chunks(seeds).zip(jobs.iter().step_by(seeds)) {
        let s = Summary::of(chunk)?;
        rows.push(EpisodesRow {
            m1,
            m2,
            episodes,
            mean: s.mean,
            std: s.std,
            seed_means: chunk.to_vec(),
        });
    }
    Ok(rows)
}

/// Runtime reduction in fixed-target mode for each problem dimension.
///
/// Per dimension: fresh problem sets, a freshly tuned baseline, and
/// `sweep.seeds` agents trained in fixed-budget mode whose per-instance
/// reductions are pooled.
pub fn sweep_dimension(cfg: &ExperimentConfig, dims: &[usize], seed: u64) -> Result<Vec<DimensionRow>> {
    if dims.is_empty() {
        return Err(Error::InvalidArgument("empty dimension grid".into()));
    }
    dims.par_iter()
        .map(|&dim| {
            let mut local = cfg.clone();
            local.problem.dim = dim;
            local.evaluation.mode = EvalMode::FixedTarget;
            let dim_seed = derive_seed(seed, dim as u64);
            let prepared = Prepared::build(&local, dim_seed)?;
            dimension_row(&local, &prepared, dim_seed)
        })
        .collect()
}

pub(crate) fn dimension_row(cfg: &ExperimentConfig, prepared: &Prepared, seed: u64) -> Result<DimensionRow> {
    let actions = cfg.action_set(prepared.tuned.as_ref())?;
    let train_env = cfg.env_config();
    let eval_env = cfg.eval_env_config();
    let nag = evaluate_nag(&prepared.test, &prepared.baseline(), &eval_env)?;
    let reports = (0..cfg.sweep.seeds)
        .into_par_iter()
        .map(|s| {
            let (q, _) = train_agent(&prepared.train, &actions, &train_env, &cfg.agent, seed_for_run(seed, s))?;
            let sus = evaluate_policy(&prepared.test, &q, &actions, &eval_env)?;
            compare(&nag, &sus, EvalMode::FixedTarget, cfg.evaluation.score)
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = reports.iter().flat_map(|r| r.metrics()).collect();
    let s = Summary::of(&values)?;
    Ok(DimensionRow {
        dim: cfg.problem.dim,
        count: s.count,
        q25: s.q25,
        median: s.median,
        q75: s.q75,
        mean: s.mean,
        censored_nag: reports.iter().flat_map(|r| &r.records).filter(|r| r.censored_nag).count(),
        censored_sus: reports.iter().flat_map(|r| &r.records).filter(|r| r.censored_sus).count(),
    })
}
