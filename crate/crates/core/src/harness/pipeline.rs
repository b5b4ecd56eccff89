//! Command-line stages. Each stage reads its inputs from the output
//! directory, writes its results there, and records a manifest.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{EvalMode, ExperimentConfig};
use super::eval::{compare, evaluate_nag, evaluate_policy, history_quantiles, MethodReport};
use super::metrics::Summary;
use super::sweep::{sweep_dimension, sweep_training_length_prepared, DimensionRow, EpisodesRow};
use super::train::train_agent;
use crate::agent::{greedy_policy, Fingerprint, PolicyTable, QTable};
use crate::problem::{sample_problem_set, ProblemSet, SetRole};
use crate::rng::{derive_seed, stream};
use crate::tuner::{tune_baseline, NagHyperparams, Score, TunedRecord};
use crate::updates::ActionSet;
use crate::{Error, Result};

pub const TRAIN_SET_FILE: &str = "problems_train.json";
pub const TEST_SET_FILE: &str = "problems_test.json";
pub const TUNED_FILE: &str = "tuned.json";
pub const QTABLE_FILE: &str = "qtable.json";
pub const POLICY_FILE: &str = "policy.json";

/// Problem sets and tuned baseline shared by the later stages.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: ProblemSet,
    pub test: ProblemSet,
    pub tuned: Option<NagHyperparams>,
}

impl Prepared {
    /// Generate both problem sets and tune the baseline in memory.
    pub fn build(cfg: &ExperimentConfig, seed: u64) -> Result<Prepared> {
        let (train, test) = generate_sets(cfg, seed)?;
        let outcome = tune_baseline(&train, &cfg.tuner_config(derive_seed(seed, stream::TUNER)))?;
        Ok(Prepared {
            train,
            test,
            tuned: Some(outcome.params),
        })
    }

    /// The tuned baseline, or the untuned starting point when none is available.
    pub fn baseline(&self) -> NagHyperparams {
        self.tuned.unwrap_or_default()
    }
}

fn generate_sets(cfg: &ExperimentConfig, seed: u64) -> Result<(ProblemSet, ProblemSet)> {
    let p = &cfg.problem;
    let train = sample_problem_set(p.dim, p.kappa, p.train_size, seed, SetRole::Training)?;
    let test = sample_problem_set(p.dim, p.kappa, p.test_size, seed, SetRole::Test)?;
    Ok((train, test))
}

/// Hash of the settings that determine the tuned baseline.
pub fn tuning_key(cfg: &ExperimentConfig) -> String {
    let canonical = serde_json::json!({
        "problem": cfg.problem,
        "budget": cfg.env.budget,
        "tuner": cfg.tuner,
        "lookahead": cfg.actions.lookahead,
    })
    .to_string();
    hex::encode(&Sha256::digest(canonical.as_bytes())[..8])
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config_hash: String,
    derived_seeds: DerivedSeeds,
    outputs: Vec<String>,
}

#[derive(Debug, Serialize)]
struct DerivedSeeds {
    tuner: u64,
    training: u64,
}

/// Writes stage outputs into one directory and remembers their names.
pub struct Stage<'a> {
    cfg: &'a ExperimentConfig,
    seed: u64,
    dir: PathBuf,
    command: &'static str,
    outputs: Vec<String>,
}

impl<'a> Stage<'a> {
    pub fn new(command: &'static str, cfg: &'a ExperimentConfig, seed: u64, dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Stage {
            cfg,
            seed,
            dir: dir.to_path_buf(),
            command,
            outputs: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn output(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.path(name)
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.output(name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(BufWriter::new(file))
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.output(name);
        let text = serde_json::to_string_pretty(value)?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    /// Write the manifest and return the paths of everything produced.
    fn finish(mut self) -> Result<Vec<PathBuf>> {
        let name = format!("{}_manifest.json", self.command);
        let manifest = Manifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            seed: self.seed,
            config_hash: self.cfg.hash_hex(),
            derived_seeds: DerivedSeeds {
                tuner: derive_seed(self.seed, stream::TUNER),
                training: self.seed,
            },
            outputs: self.outputs.clone(),
        };
        self.write_json(&name, &manifest)?;
        Ok(self.outputs.iter().map(|o| self.dir.join(o)).collect())
    }

    /// Problem sets from the output directory, generated when absent.
    fn problem_sets(&self) -> Result<(ProblemSet, ProblemSet)> {
        let (train_path, test_path) = (self.path(TRAIN_SET_FILE), self.path(TEST_SET_FILE));
        if !(train_path.exists() && test_path.exists()) {
            info!("problem sets not found in {}, generating", self.dir.display());
            return generate_sets(self.cfg, self.seed);
        }
        let train = ProblemSet::load(&train_path)?;
        let test = ProblemSet::load(&test_path)?;
        let p = &self.cfg.problem;
        for (set, path, size, role) in [
            (&train, &train_path, p.train_size, SetRole::Training),
            (&test, &test_path, p.test_size, SetRole::Test),
        ] {
            if set.dim != p.dim || set.kappa_spec != p.kappa || set.len() != size || set.role != role {
                return Err(Error::Format {
                    path: path.clone(),
                    reason: "problem set does not match the configuration".into(),
                });
            }
            if set.seed != self.seed {
                return Err(Error::Format {
                    path: path.clone(),
                    reason: format!("generated with seed {}, not {}", set.seed, self.seed),
                });
            }
        }
        Ok((train, test))
    }

    /// Tuned baseline from the output directory, tuned afresh when absent.
    fn tuned(&self, train: &ProblemSet) -> Result<NagHyperparams> {
        let path = self.path(TUNED_FILE);
        if !path.exists() {
            info!("{} not found, tuning the baseline", path.display());
            return Ok(tune(self.cfg, self.seed, train)?.params());
        }
        let record = TunedRecord::load(&path)?;
        let key = tuning_key(self.cfg);
        if record.config_hash != key || record.seed != self.seed {
            return Err(Error::Format {
                path,
                reason: format!(
                    "tuned for config {} seed {}, expected config {key} seed {}",
                    record.config_hash, record.seed, self.seed
                ),
            });
        }
        let hp = record.params();
        hp.validate()?;
        Ok(hp)
    }

    fn prepared(&self) -> Result<Prepared> {
        let (train, test) = self.problem_sets()?;
        let tuned = Some(self.tuned(&train)?);
        Ok(Prepared { train, test, tuned })
    }

    fn action_set(&self, prepared: &Prepared) -> Result<ActionSet> {
        self.cfg.action_set(prepared.tuned.as_ref())
    }

    fn fingerprint(&self, actions: &ActionSet) -> Fingerprint {
        Fingerprint::new(self.cfg.env.m1, self.cfg.env.m2, actions, self.cfg.agent.gamma)
    }
}

fn tune(cfg: &ExperimentConfig, seed: u64, train: &ProblemSet) -> Result<TunedRecord> {
    let outcome = tune_baseline(train, &cfg.tuner_config(derive_seed(seed, stream::TUNER)))?;
    info!(
        "tuned eta1={:.4e} mu={:.4} delta={:.4e} objective={:.4e} after {} iterations",
        outcome.params.eta1, outcome.params.mu, outcome.params.delta, outcome.objective, outcome.iterations
    );
    Ok(TunedRecord::new(&outcome, seed, tuning_key(cfg)))
}

pub fn run_gen_problems(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut stage = Stage::new("gen-problems", cfg, seed, dir)?;
    let (train, test) = generate_sets(cfg, seed)?;
    train.save(&stage.output(TRAIN_SET_FILE))?;
    test.save(&stage.output(TEST_SET_FILE))?;
    stage.finish()
}

pub fn run_tune(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut stage = Stage::new("tune", cfg, seed, dir)?;
    let (train, _) = stage.problem_sets()?;
    let record = tune(cfg, seed, &train)?;
    record.save(&stage.output(TUNED_FILE))?;
    stage.finish()
}

pub fn run_train(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut stage = Stage::new("train", cfg, seed, dir)?;
    let prepared = stage.prepared()?;
    let actions = stage.action_set(&prepared)?;
    let (q, report) = train_agent(&prepared.train, &actions, &cfg.env_config(), &cfg.agent, seed)?;
    q.save(&stage.output(QTABLE_FILE))?;
    greedy_policy(&q).save(&stage.output(POLICY_FILE))?;
    report.write_csv(stage.create("training.csv")?)?;
    stage.finish()
}

#[derive(Debug, Serialize)]
struct EvalSummaryFile {
    mode: EvalMode,
    score: Score,
    metric: &'static str,
    instances: usize,
    censored_nag: usize,
    censored_sus: usize,
    summary: Option<Summary>,
}

pub fn run_eval(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut stage = Stage::new("eval", cfg, seed, dir)?;
    let prepared = stage.prepared()?;
    let actions = stage.action_set(&prepared)?;
    let q = QTable::load(&stage.path(QTABLE_FILE), Some(&stage.fingerprint(&actions)))?;
    let env = cfg.eval_env_config();
    let nag = evaluate_nag(&prepared.test, &prepared.baseline(), &env)?;
    let sus = evaluate_policy(&prepared.test, &q, &actions, &env)?;
    let mode = cfg.evaluation.mode;
    let report = compare(&nag, &sus, mode, cfg.evaluation.score)?;

    report.write_csv(stage.create("eval.csv")?)?;
    let summary = EvalSummaryFile {
        mode,
        score: cfg.evaluation.score,
        metric: match mode {
            EvalMode::FixedBudget => "relative_improvement",
            EvalMode::FixedTarget => "runtime_reduction",
        },
        instances: report.records.len(),
        censored_nag: report.records.iter().filter(|r| r.censored_nag).count(),
        censored_sus: report.records.iter().filter(|r| r.censored_sus).count(),
        summary: report.summary,
    };
    if let Some(s) = &summary.summary {
        info!("{}: mean {:.4} median {:.4} over {} instances", summary.metric, s.mean, s.median, s.count);
    }
    stage.write_json("eval_summary.json", &summary)?;
    write_history(&mut stage, "history_nag.csv", &nag)?;
    write_history(&mut stage, "history_sus.csv", &sus)?;
    stage.finish()
}

fn write_history(stage: &mut Stage, name: &str, report: &MethodReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(stage.create(name)?);
    for row in history_quantiles(report)? {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(stage.path(name), e))
}

pub fn run_sweep_episodes(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut stage = Stage::new("sweep-episodes", cfg, seed, dir)?;
    let prepared = stage.prepared()?;
    let rows = sweep_training_length_prepared(cfg, &prepared, &cfg.sweep.episodes, seed)?;
    write_episode_rows(stage.create("sweep_episodes.csv")?, &rows)?;
    stage.finish()
}

pub fn write_episode_rows<W: std::io::Write>(out: W, rows: &[EpisodesRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["m1", "m2", "episodes", "mean", "std", "seed_means"])?;
    for r in rows {
        let per_seed: Vec<String> = r.seed_means.iter().map(f64::to_string).collect();
        w.write_record([
            r.m1.to_string(),
            r.m2.to_string(),
            r.episodes.to_string(),
            r.mean.to_string(),
            r.std.to_string(),
            per_seed.join(";"),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<sweep rows>", e))
}

pub fn run_sweep_dim(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut stage = Stage::new("sweep-dim", cfg, seed, dir)?;
    let rows = sweep_dimension(cfg, &cfg.sweep.dims, seed)?;
    write_dimension_rows(stage.create("sweep_dim.csv")?, &rows)?;
    stage.finish()
}

pub fn write_dimension_rows<W: std::io::Write>(out: W, rows: &[DimensionRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<sweep rows>", e))
}

pub fn run_export_policy(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut stage = Stage::new("export-policy", cfg, seed, dir)?;
    let actions = if cfg.actions.variant.needs_baseline() {
        let (train, _) = stage.problem_sets()?;
        cfg.action_set(Some(&stage.tuned(&train)?))?
    } else {
        cfg.action_set(None)?
    };
    let q = QTable::load(&stage.path(QTABLE_FILE), Some(&stage.fingerprint(&actions)))?;
    let policy: PolicyTable = greedy_policy(&q);
    policy.write_grid_csv(stage.create("policy.csv")?)?;
    policy.save(&stage.output(POLICY_FILE))?;
    stage.finish()
}
