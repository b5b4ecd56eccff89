use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::EvalMode;
use super::metrics::{quantile, relative_improvement, runtime_reduction, Summary};
use crate::agent::{greedy_policy, Fingerprint, QTable};
use crate::environment::{run_episode, EnvConfig, Termination};
use crate::problem::ProblemSet;
use crate::rng::{derive_seed, stream, stream_rng};
use crate::tuner::{run_nag_fixed, NagHyperparams, Score};
use crate::updates::ActionSet;
use crate::{Error, Result};

/// Outcome of one method on one test instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceOutcome {
    pub instance_id: usize,
    pub y1: f64,
    /// Best objective within the evaluation limit (`y_K` in fixed-budget mode).
    pub best_y: f64,
    pub final_y: f64,
    /// Evaluations used (`k_T` in fixed-target mode).
    pub evaluations: usize,
    /// Fixed-target run that hit the evaluation cap first.
    pub censored: bool,
    /// Best-so-far objective after each evaluation.
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodReport {
    pub method: String,
    pub fixed_target: bool,
    pub outcomes: Vec<InstanceOutcome>,
}

fn best_so_far(trace: impl IntoIterator<Item = f64>) -> Vec<f64> {
    trace
        .into_iter()
        .scan(f64::INFINITY, |best, y| {
            *best = best.min(y);
            Some(*best)
        })
        .collect()
}

/// Greedy deployment of a trained table: no exploration, no learning.
pub fn evaluate_policy(set: &ProblemSet, q: &QTable, actions: &ActionSet, env: &EnvConfig) -> Result<MethodReport> {
    env.validate()?;
    let expected = Fingerprint::new(env.m1, env.m2, actions, q.fingerprint().gamma);
    q.fingerprint().ensure_matches(&expected)?;
    let policy = greedy_policy(q);
    let base = derive_seed(set.seed, stream::EVALUATION);
    let outcomes = set
        .instances
        .par_iter()
        .enumerate()
        .map(|(id, p)| {
            let mut rng = stream_rng(base, id as u64);
            let trace = run_episode(p, |obs, _| policy.action(obs.state), actions, env, &mut rng)?;
            Ok(InstanceOutcome {
                instance_id: id,
                y1: trace.records[0].y,
                best_y: trace.best_y,
                final_y: trace.final_y,
                evaluations: trace.evaluations,
                censored: env.target.is_some() && trace.termination != Termination::Target,
                history: trace.records.iter().map(|r| r.best_y).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MethodReport {
        method: "sus".into(),
        fixed_target: env.target.is_some(),
        outcomes,
    })
}

/// The tuned baseline on every instance, from the same start points.
pub fn evaluate_nag(set: &ProblemSet, hp: &NagHyperparams, env: &EnvConfig) -> Result<MethodReport> {
    env.validate()?;
    let outcomes = set
        .instances
        .par_iter()
        .enumerate()
        .map(|(id, p)| {
            let run = run_nag_fixed(p, hp, env)?;
            Ok(InstanceOutcome {
                instance_id: id,
                y1: run.trace[0],
                best_y: run.best_y,
                final_y: run.final_y,
                evaluations: run.evaluations,
                censored: env.target.is_some() && !run.reached_target,
                history: best_so_far(run.trace),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MethodReport {
        method: "nag".into(),
        fixed_target: env.target.is_some(),
        outcomes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedRecord {
    pub instance_id: usize,
    pub y1: f64,
    pub y_nag: f64,
    pub y_sus: f64,
    /// Relative improvement (fixed budget) or runtime reduction (fixed target).
    pub metric: Option<f64>,
    pub k_nag: usize,
    pub k_sus: usize,
    pub censored_nag: bool,
    pub censored_sus: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub records: Vec<PairedRecord>,
    pub summary: Option<Summary>,
}

/// Pair baseline and agent outcomes instance by instance. `score` selects
/// the objective compared in fixed-budget mode.
pub fn compare(nag: &MethodReport, sus: &MethodReport, mode: EvalMode, score: Score) -> Result<EvalReport> {
    if nag.outcomes.len() != sus.outcomes.len() {
        return Err(Error::InvalidArgument("reports cover different instance counts".into()));
    }
    let records = nag
        .outcomes
        .iter()
        .zip(&sus.outcomes)
        .map(|(n, s)| {
            if n.instance_id != s.instance_id || n.y1 != s.y1 {
                return Err(Error::InvalidArgument(format!(
                    "unpaired records: instance {} vs {}",
                    n.instance_id, s.instance_id
                )));
            }
            let (y_nag, y_sus) = (score.pick(n.final_y, n.best_y), score.pick(s.final_y, s.best_y));
            let metric = match mode {
                EvalMode::FixedBudget => relative_improvement(y_nag, y_sus),
                EvalMode::FixedTarget => Some(runtime_reduction(n.evaluations, s.evaluations)),
            };
            Ok(PairedRecord {
                instance_id: n.instance_id,
                y1: n.y1,
                y_nag,
                y_sus,
                metric,
                k_nag: n.evaluations,
                k_sus: s.evaluations,
                censored_nag: n.censored,
                censored_sus: s.censored,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let metrics: Vec<f64> = records.iter().filter_map(|r| r.metric).collect();
    let summary = if metrics.is_empty() { None } else { Some(Summary::of(&metrics)?) };
    Ok(EvalReport { mode, records, summary })
}

const EVAL_HEADER: [&str; 9] = [
    "instance_id",
    "y1",
    "y_nag",
    "y_sus",
    "metric",
    "k_nag",
    "k_sus",
    "censored_nag",
    "censored_sus",
];

impl EvalReport {
    pub fn metrics(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.metric).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(EVAL_HEADER)?;
        for r in &self.records {
            w.write_record([
                r.instance_id.to_string(),
                r.y1.to_string(),
                r.y_nag.to_string(),
                r.y_sus.to_string(),
                r.metric.map(|m| m.to_string()).unwrap_or_default(),
                r.k_nag.to_string(),
                r.k_sus.to_string(),
                r.censored_nag.to_string(),
                r.censored_sus.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<eval report>", e))?;
        Ok(())
    }

    /// Metric column of a CSV written by [`EvalReport::write_csv`].
    pub fn read_metrics_csv<R: Read>(input: R) -> Result<Vec<f64>> {
        let mut r = csv::Reader::from_reader(input);
        let mut out = Vec::new();
        for row in r.records() {
            let row = row?;
            let field = row.get(4).unwrap_or("");
            if !field.is_empty() {
                out.push(field.parse().map_err(|e| Error::Config(format!("bad metric {field:?}: {e}")))?);
            }
        }
        Ok(out)
    }
}

/// Quartiles of the best-so-far objective per evaluation index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub k: usize,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

/// Per-iteration quartiles across instances. Shorter histories (finished
/// fixed-target runs) hold their last value.
pub fn history_quantiles(report: &MethodReport) -> Result<Vec<HistoryRow>> {
    let len = report.outcomes.iter().map(|o| o.history.len()).max().unwrap_or(0);
    (0..len)
        .map(|k| {
            let column: Vec<f64> = report
                .outcomes
                .iter()
                .map(|o| o.history[k.min(o.history.len() - 1)])
                .collect();
            Ok(HistoryRow {
                k,
                q25: quantile(&column, 0.25)?,
                median: quantile(&column, 0.5)?,
                q75: quantile(&column, 0.75)?,
            })
        })
        .collect()
}
