use std::io::Write;

use rand::Rng as _;

use crate::agent::{select_action, sarsa_update, sarsa_update_terminal, AgentConfig, Fingerprint, QTable};
use crate::environment::{EnvConfig, Environment};
use crate::problem::ProblemSet;
use crate::rng::{stream, stream_rng};
use crate::updates::ActionSet;
use crate::{Error, Result};

/// Per-episode training statistics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingReport {
    pub instance: Vec<usize>,
    pub epsilon: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Undiscounted sum of rewards of each episode.
    pub returns: Vec<f64>,
    pub best_y: Vec<f64>,
}

impl TrainingReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["episode", "instance_id", "epsilon", "alpha", "return", "best_y"])?;
        for n in 0..self.returns.len() {
            w.write_record([
                (n + 1).to_string(),
                self.instance[n].to_string(),
                self.epsilon[n].to_string(),
                self.alpha[n].to_string(),
                self.returns[n].to_string(),
                self.best_y[n].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<training report>", e))?;
        Ok(())
    }
}

/// SARSA with epsilon-greedy exploration over `agent.episodes` episodes.
///
/// Each episode runs on one training instance drawn uniformly with
/// replacement; exploration and learning rates are held fixed within an
/// episode and decay exponentially across episodes.
pub fn train_agent(
    set: &ProblemSet,
    actions: &ActionSet,
    env: &EnvConfig,
    agent: &AgentConfig,
    seed: u64,
) -> Result<(QTable, TrainingReport)> {
    if set.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    env.validate()?;
    agent.validate()?;
    let mut q = QTable::zeros(Fingerprint::new(env.m1, env.m2, actions, agent.gamma));
    let mut report = TrainingReport::default();
    let mut rng = stream_rng(seed, stream::TRAINING);

    for n in 1..=agent.episodes {
        let eps = agent.epsilon(n);
        let alpha = agent.alpha(n);
        let id = rng.random_range(0..set.len());
        let (mut episode, first) = Environment::reset(&set.instances[id], actions, env)?;
        let mut total = 0.0;
        if !first.is_terminal() {
            let mut s = first.state;
            let mut a = select_action(&q, s, eps, &mut rng);
            loop {
                let obs = episode.step(a, &mut rng)?;
                total += obs.reward;
                if obs.is_terminal() {
                    sarsa_update_terminal(&mut q, s, a, obs.reward, alpha);
                    break;
                }
                let a_next = select_action(&q, obs.state, eps, &mut rng);
                sarsa_update(&mut q, s, a, obs.reward, obs.state, a_next, alpha, agent.gamma);
                s = obs.state;
                a = a_next;
            }
        }
        report.instance.push(id);
        report.epsilon.push(eps);
        report.alpha.push(alpha);
        report.returns.push(total);
        report.best_y.push(episode.state().best_y);
    }
    Ok((q, report))
}
