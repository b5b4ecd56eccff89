//! Environment side of the agent-environment loop.
//!
//! Each cycle applies the selected update, evaluates objective and gradient
//! once, and hands a discretized state and an immediate reward back to the
//! agent. The first evaluation at the stored start point counts against the
//! budget, so a budget of `K` evaluations leaves `K − 1` update steps.

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::problem::QuadraticProblem;
use crate::rng::Rng;
use crate::updates::{self, ActionSet, UpdateKind, UpdateMemory};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    /// `r = y_prev − y`
    #[default]
    Difference,
    /// `r = ln(y_prev / y)`
    LogRatio,
}

/// Bounds `[l, u]` of the objective-level state dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum StateBounds {
    /// `u` is the (transformed) initial objective and `l = u − span`.
    /// With a log state the span is in decades.
    Relative { span: f64 },
    Fixed { l: f64, u: f64 },
}

impl Default for StateBounds {
    fn default() -> Self {
        StateBounds::Relative { span: 8.0 }
    }
}

/// How NAG entries of an action set keep their velocity and position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryMode {
    /// One state for all NAG entries, moved along after GD steps.
    #[default]
    Shared,
    /// Every NAG entry keeps its own state; an entry used for the first time
    /// starts with zero velocity at the current point.
    PerEntry,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetRule {
    Absolute(f64),
    /// Target is this fraction of the objective at the start point.
    Relative(f64),
}

impl TargetRule {
    pub fn resolve(&self, y1: f64) -> f64 {
        match *self {
            TargetRule::Absolute(t) => t,
            TargetRule::Relative(frac) => frac * y1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    /// Evaluation budget `K`; also the horizon of the budget-fraction state.
    pub budget: usize,
    /// Fixed-target mode when set.
    #[serde(default)]
    pub target: Option<TargetRule>,
    /// Evaluation cap in fixed-target mode.
    #[serde(default)]
    pub target_cap: Option<usize>,
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

impl EnvConfig {
    pub fn fixed_budget(budget: usize, m1: usize, m2: usize) -> Self {
        EnvConfig {
            budget,
            target: None,
            target_cap: None,
            m1,
            m2,
            bounds: StateBounds::default(),
            log_state: true,
            reward: RewardKind::Difference,
            greedy_revert: true,
            memory: MemoryMode::Shared,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget < 1 {
            return Err(Error::InvalidArgument("budget must be at least 1".into()));
        }
        if self.m1 < 1 || self.m2 < 1 {
            return Err(Error::InvalidArgument("bin counts must be at least 1".into()));
        }
        if let StateBounds::Fixed { l, u } = self.bounds {
            if !(l < u) {
                return Err(Error::InvalidArgument(format!("state bounds need l < u, got [{l}, {u}]")));
            }
        }
        if let StateBounds::Relative { span } = self.bounds {
            if !(span > 0.0) {
                return Err(Error::InvalidArgument("relative state span must be positive".into()));
            }
        }
        if let Some(TargetRule::Absolute(t) | TargetRule::Relative(t)) = self.target {
            if !(t >= 0.0) {
                return Err(Error::InvalidArgument("target must be nonnegative".into()));
            }
        }
        if self.target_cap == Some(0) {
            return Err(Error::InvalidArgument("target cap must be at least 1".into()));
        }
        Ok(())
    }

    /// Hard limit on evaluations per episode.
    pub fn evaluation_limit(&self) -> usize {
        match self.target {
            None => self.budget,
            Some(_) => self.target_cap.unwrap_or(10 * self.budget),
        }
    }

    /// Same config in fixed-target mode.
    pub fn with_target(&self, rule: TargetRule, cap: usize) -> Self {
        EnvConfig {
            target: Some(rule),
            target_cap: Some(cap),
            ..self.clone()
        }
    }

    pub fn without_target(&self) -> Self {
        EnvConfig {
            target: None,
            target_cap: None,
            ..self.clone()
        }
    }
}

/// Discretized state `(s¹, s²)`, both 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct State {
    pub s1: usize,
    pub s2: usize,
}

/// State discretization with resolved bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateMap {
    pub m1: usize,
    pub m2: usize,
    pub l: f64,
    pub u: f64,
    pub log_state: bool,
    pub budget: usize,
}

impl StateMap {
    pub fn new(cfg: &EnvConfig, y1: f64) -> Self {
        let (l, u) = match cfg.bounds {
            StateBounds::Fixed { l, u } => (l, u),
            StateBounds::Relative { span } => {
                let top = if cfg.log_state { log_level(y1) } else { y1 };
                (top - span, top)
            }
        };
        StateMap {
            m1: cfg.m1,
            m2: cfg.m2,
            l,
            u,
            log_state: cfg.log_state,
            budget: cfg.budget,
        }
    }

    /// Objective-level bin.
    pub fn s1(&self, y: f64) -> usize {
        if y.is_nan() {
            return self.m1;
        }
        let z = if self.log_state { log_level(y) } else { y };
        let frac = ((z - self.l) / (self.u - self.l)).clamp(0.0, 1.0);
        (frac * (self.m1 - 1) as f64).floor() as usize + 1
    }

    /// Budget-fraction bin for `k` executed iterations, clamped to `m2`.
    pub fn s2(&self, k: usize) -> usize {
        // floor(k / (K / m2)) in exact integer arithmetic
        (k * self.m2 / self.budget + 1).min(self.m2)
    }

    pub fn state(&self, y: f64, k: usize) -> State {
        State {
            s1: self.s1(y),
            s2: self.s2(k),
        }
    }
}

fn log_level(y: f64) -> f64 {
    y.max(1e-300).log10()
}

pub fn compute_reward(y_prev: f64, y: f64, kind: RewardKind) -> f64 {
    match kind {
        RewardKind::Difference => y_prev - y,
        RewardKind::LogRatio => {
            if y_prev <= 0.0 || y <= 0.0 {
                log::warn!("log-ratio reward with nonpositive objective ({y_prev}, {y}); clamping");
            }
            (y_prev.max(1e-300) / y.max(1e-300)).ln()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Budget,
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub state: State,
    pub reward: f64,
    pub terminated: Option<Termination>,
}

impl Observation {
    pub fn is_terminal(&self) -> bool {
        self.terminated.is_some()
    }
}

/// Iterate bookkeeping of one episode.
#[derive(Debug, Clone)]
pub struct EnvState {
    /// Update steps executed so far.
    pub k: usize,
    pub evaluations: usize,
    /// Working point for the next update, with its objective and gradient.
    pub x: DVector<f64>,
    pub y: f64,
    pub g: DVector<f64>,
    /// Most recently observed objective (differs from `y` after a reverted jump).
    pub y_observed: f64,
    pub best_x: DVector<f64>,
    pub best_y: f64,
    pub prev_kind: Option<UpdateKind>,
    /// Persistent NAG state: one per action-set entry, or a single shared one.
    pub memories: Vec<UpdateMemory>,
    pub terminated: Option<Termination>,
}

pub struct Environment<'a> {
    problem: &'a QuadraticProblem,
    actions: &'a ActionSet,
    cfg: &'a EnvConfig,
    map: StateMap,
    target: Option<f64>,
    state: EnvState,
}

impl<'a> Environment<'a> {
    /// Start an episode at the problem's stored start point.
    pub fn reset(
        problem: &'a QuadraticProblem,
        actions: &'a ActionSet,
        cfg: &'a EnvConfig,
    ) -> Result<(Self, Observation)> {
        cfg.validate()?;
        let x = problem.x1().clone();
        let (y, g) = problem.value_and_gradient(&x)?;
        let map = StateMap::new(cfg, y);
        let target = cfg.target.map(|rule| rule.resolve(y));
        let mut env = Environment {
            problem,
            actions,
            cfg,
            map,
            target,
            state: EnvState {
                k: 0,
                evaluations: 1,
                best_x: x.clone(),
                best_y: y,
                x,
                y,
                g,
                y_observed: y,
                prev_kind: None,
                memories: vec![
                    UpdateMemory::new(problem.dim());
                    match cfg.memory {
                        MemoryMode::PerEntry => actions.len(),
                        MemoryMode::Shared => 1,
                    }
                ],
                terminated: None,
            },
        };
        env.state.terminated = env.check_termination();
        let obs = Observation {
            state: map.state(y, 0),
            reward: 0.0,
            terminated: env.state.terminated,
        };
        Ok((env, obs))
    }

    fn check_termination(&self) -> Option<Termination> {
        if matches!(self.target, Some(t) if self.state.best_y <= t) {
            Some(Termination::Target)
        } else if self.state.evaluations >= self.cfg.evaluation_limit() {
            Some(Termination::Budget)
        } else {
            None
        }
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn state_map(&self) -> &StateMap {
        &self.map
    }

    pub fn target(&self) -> Option<f64> {
        self.target
    }

    /// Apply action `action` (0-based index into the action set).
    pub fn step(&mut self, action: usize, rng: &mut Rng) -> Result<Observation> {
        if self.state.terminated.is_some() {
            return Err(Error::EpisodeTerminated);
        }
        let update = *self.actions.get(action).ok_or(Error::ActionOutOfRange {
            index: action,
            len: self.actions.len(),
        })?;
        let st = &mut self.state;
        let k = st.k + 1;

        let slot = match self.cfg.memory {
            MemoryMode::PerEntry => action,
            MemoryMode::Shared => 0,
        };
        match st.prev_kind {
            Some(UpdateKind::Guru) => st.memories.iter_mut().for_each(UpdateMemory::reset),
            Some(UpdateKind::Gd) if update.kind == UpdateKind::Nag && self.cfg.memory == MemoryMode::Shared => {
                st.memories[0].reanchor(&st.x, &update.params)
            }
            _ => {}
        }

        let x_next = match update.kind {
            UpdateKind::Gd => updates::gd_update(&st.x, &st.g, k, &update.params),
            UpdateKind::Nag => updates::nag_update(&mut st.memories[slot], &st.x, &st.g, k, &update.params),
            UpdateKind::Guru => updates::guru_update(self.problem.dim(), &update.params, rng),
        };
        let (y_next, g_next) = self.problem.value_and_gradient(&x_next)?;
        st.evaluations += 1;
        st.k = k;

        let reward = compute_reward(st.y_observed, y_next, self.cfg.reward);
        st.y_observed = y_next;
        if y_next < st.best_y {
            st.best_y = y_next;
            st.best_x.copy_from(&x_next);
        }
        let revert = self.cfg.greedy_revert && update.kind == UpdateKind::Guru && y_next > st.y;
        if !revert {
            st.x = x_next;
            st.y = y_next;
            st.g = g_next;
        }
        st.prev_kind = Some(update.kind);

        let state = self.map.state(y_next, k);
        self.state.terminated = self.check_termination();
        Ok(Observation {
            state,
            reward,
            terminated: self.state.terminated,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    /// 0-based action index; `None` for the start point.
    pub action: Option<usize>,
    pub y: f64,
    pub best_y: f64,
    pub reward: f64,
    pub s1: usize,
    pub s2: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub records: Vec<TraceRecord>,
    pub best_y: f64,
    pub final_y: f64,
    pub evaluations: usize,
    pub termination: Termination,
}

impl EpisodeTrace {
    /// CSV with columns `k, action, y, best_y, r, s1, s2`; actions are written 1-based.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "action", "y", "best_y", "r", "s1", "s2"])?;
        for r in &self.records {
            w.write_record([
                r.k.to_string(),
                r.action.map(|a| (a + 1).to_string()).unwrap_or_default(),
                r.y.to_string(),
                r.best_y.to_string(),
                r.reward.to_string(),
                r.s1.to_string(),
                r.s2.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<trace>", e))?;
        Ok(())
    }
}

/// Run a whole episode, asking `policy` for a 0-based action after every observation.
pub fn run_episode<P>(
    problem: &QuadraticProblem,
    mut policy: P,
    actions: &ActionSet,
    cfg: &EnvConfig,
    rng: &mut Rng,
) -> Result<EpisodeTrace>
where
    P: FnMut(&Observation, &mut Rng) -> usize,
{
    let (mut env, mut obs) = Environment::reset(problem, actions, cfg)?;
    let mut records = vec![TraceRecord {
        k: 0,
        action: None,
        y: env.state().y_observed,
        best_y: env.state().best_y,
        reward: obs.reward,
        s1: obs.state.s1,
        s2: obs.state.s2,
    }];
    while !obs.is_terminal() {
        let action = policy(&obs, rng);
        obs = env.step(action, rng)?;
        let st = env.state();
        records.push(TraceRecord {
            k: st.k,
            action: Some(action),
            y: st.y_observed,
            best_y: st.best_y,
            reward: obs.reward,
            s1: obs.state.s1,
            s2: obs.state.s2,
        });
    }
    let st = env.state();
    Ok(EpisodeTrace {
        records,
        best_y: st.best_y,
        final_y: st.y_observed,
        evaluations: st.evaluations,
        termination: st.terminated.expect("loop exits on termination"),
    })
}
