//! Tabular SARSA agent with epsilon-greedy action selection.

use std::fs;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::environment::State;
use crate::rng::Rng;
use crate::updates::ActionSet;
use crate::{Error, Result};

const QTABLE_FORMAT: &str = "sus-qtable";
const POLICY_FORMAT: &str = "sus-policy";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub eps0: f64,
    pub alpha0: f64,
    pub gamma: f64,
    /// Number of training episodes `N`.
    pub episodes: usize,
    /// Fraction of the initial value reached by both schedules at episode `N`.
    pub final_fraction: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            eps0: 0.99,
            alpha0: 0.3,
            gamma: 1.0,
            episodes: 12800,
            final_fraction: 0.005,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.eps0)
            && self.alpha0 > 0.0
            && self.alpha0 <= 1.0
            && (0.0..=1.0).contains(&self.gamma)
            && self.final_fraction > 0.0
            && self.final_fraction <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid agent config: {self:?}")))
        }
    }

    pub fn epsilon(&self, n: usize) -> f64 {
        schedule_value(self.eps0, n, self.episodes, self.final_fraction)
    }

    pub fn alpha(&self, n: usize) -> f64 {
        schedule_value(self.alpha0, n, self.episodes, self.final_fraction)
    }
}

/// Exponential decay from `v0` at `n = 0` to `final_fraction · v0` at `n = total`.
pub fn schedule_value(v0: f64, n: usize, total: usize, final_fraction: f64) -> f64 {
    if total == 0 {
        return v0;
    }
    v0 * (-(n as f64 / total as f64) * (1.0 / final_fraction).ln()).exp()
}

/// Identity of the table layout and the problem it was trained for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fingerprint {
    pub m1: usize,
    pub m2: usize,
    pub actions: usize,
    pub gamma: f64,
    pub action_set_hash: String,
}

impl Fingerprint {
    pub fn new(m1: usize, m2: usize, action_set: &ActionSet, gamma: f64) -> Self {
        Fingerprint {
            m1,
            m2,
            actions: action_set.len(),
            gamma,
            action_set_hash: action_set.hash_hex(),
        }
    }

    fn describe(&self) -> String {
        format!(
            "m1={} m2={} J={} gamma={} actions={}",
            self.m1, self.m2, self.actions, self.gamma, self.action_set_hash
        )
    }

    pub fn ensure_matches(&self, expected: &Fingerprint) -> Result<()> {
        if self == expected {
            Ok(())
        } else {
            Err(Error::FingerprintMismatch {
                expected: expected.describe(),
                found: self.describe(),
            })
        }
    }
}

/// Expected-return estimates over `(s¹, s², a)`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    fingerprint: Fingerprint,
    values: Vec<f64>,
}

impl QTable {
    /// All-zero table.
    pub fn zeros(fingerprint: Fingerprint) -> Self {
        let len = fingerprint.m1 * fingerprint.m2 * fingerprint.actions;
        QTable {
            fingerprint,
            values: vec![0.0; len],
        }
    }

    pub fn fingerprint(&self) -> &Fingerprint {
        &self.fingerprint
    }

    pub fn num_actions(&self) -> usize {
        self.fingerprint.actions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn offset(&self, s: State) -> usize {
        let fp = &self.fingerprint;
        debug_assert!((1..=fp.m1).contains(&s.s1) && (1..=fp.m2).contains(&s.s2));
        ((s.s1 - 1) * fp.m2 + (s.s2 - 1)) * fp.actions
    }

    /// Action values at state `s`.
    pub fn row(&self, s: State) -> &[f64] {
        let o = self.offset(s);
        &self.values[o..o + self.fingerprint.actions]
    }

    pub fn get(&self, s: State, a: usize) -> f64 {
        self.row(s)[a]
    }

    pub fn set(&mut self, s: State, a: usize, value: f64) {
        let o = self.offset(s);
        self.values[o + a] = value;
    }

    /// Greedy action at `s`, lowest index on ties.
    pub fn argmax(&self, s: State) -> usize {
        argmax(self.row(s))
    }

    pub fn scaled(&self, factor: f64) -> QTable {
        QTable {
            fingerprint: self.fingerprint.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = TableFile {
            format: QTABLE_FORMAT.into(),
            version: FORMAT_VERSION,
            fingerprint: self.fingerprint.clone(),
            values: self.values.clone(),
        };
        fs::write(path, serde_json::to_string(&file)?).map_err(|e| Error::io(path, e))
    }

    /// Load a table and refuse it unless its fingerprint equals `expected`.
    pub fn load(path: &Path, expected: Option<&Fingerprint>) -> Result<QTable> {
        let file: TableFile<f64> = read_table(path, QTABLE_FORMAT)?;
        let fp = &file.fingerprint;
        if file.values.len() != fp.m1 * fp.m2 * fp.actions {
            return Err(Error::Format {
                path: path.into(),
                reason: "value count does not match fingerprint shape".into(),
            });
        }
        if file.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format {
                path: path.into(),
                reason: "non-finite Q-value".into(),
            });
        }
        if let Some(expected) = expected {
            file.fingerprint.ensure_matches(expected)?;
        }
        Ok(QTable {
            fingerprint: file.fingerprint,
            values: file.values,
        })
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableFile<T> {
    format: String,
    version: u32,
    fingerprint: Fingerprint,
    values: Vec<T>,
}

fn read_table<T: serde::de::DeserializeOwned>(path: &Path, format: &str) -> Result<TableFile<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: TableFile<T> = serde_json::from_str(&text)?;
    if file.format != format || file.version != FORMAT_VERSION {
        return Err(Error::Format {
            path: path.into(),
            reason: format!(
                "expected {format} v{FORMAT_VERSION}, found {} v{}",
                file.format, file.version
            ),
        });
    }
    Ok(file)
}

/// Epsilon-greedy choice; returns a 0-based action index.
pub fn select_action(q: &QTable, s: State, eps: f64, rng: &mut Rng) -> usize {
    if eps > 0.0 && rng.random::<f64>() < eps {
        rng.random_range(0..q.num_actions())
    } else {
        q.argmax(s)
    }
}

/// `Q(s,a) ← (1−α) Q(s,a) + α (r + γ Q(s',a'))`
#[allow(clippy::too_many_arguments)]
pub fn sarsa_update(
    q: &mut QTable,
    s: State,
    a: usize,
    reward: f64,
    s_next: State,
    a_next: usize,
    alpha: f64,
    gamma: f64,
) {
    let target = reward + gamma * q.get(s_next, a_next);
    let updated = (1.0 - alpha) * q.get(s, a) + alpha * target;
    q.set(s, a, updated);
}

/// Update at episode end, where the successor value is zero.
pub fn sarsa_update_terminal(q: &mut QTable, s: State, a: usize, reward: f64, alpha: f64) {
    let updated = (1.0 - alpha) * q.get(s, a) + alpha * reward;
    q.set(s, a, updated);
}

/// Greedy action per state, 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    fingerprint: Fingerprint,
    actions: Vec<usize>,
}

pub fn greedy_policy(q: &QTable) -> PolicyTable {
    let fp = q.fingerprint().clone();
    let mut actions = Vec::with_capacity(fp.m1 * fp.m2);
    for s1 in 1..=fp.m1 {
        for s2 in 1..=fp.m2 {
            actions.push(q.argmax(State { s1, s2 }));
        }
    }
    PolicyTable {
        fingerprint: fp,
        actions,
    }
}

impl PolicyTable {
    pub fn fingerprint(&self) -> &Fingerprint {
        &self.fingerprint
    }

    pub fn action(&self, s: State) -> usize {
        self.actions[(s.s1 - 1) * self.fingerprint.m2 + (s.s2 - 1)]
    }

    /// Written 1-based, matching the action numbering in exported traces.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = TableFile {
            format: POLICY_FORMAT.into(),
            version: FORMAT_VERSION,
            fingerprint: self.fingerprint.clone(),
            values: self.actions.iter().map(|a| a + 1).collect(),
        };
        fs::write(path, serde_json::to_string(&file)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, expected: Option<&Fingerprint>) -> Result<PolicyTable> {
        let file: TableFile<usize> = read_table(path, POLICY_FORMAT)?;
        let fp = &file.fingerprint;
        if file.values.len() != fp.m1 * fp.m2 || file.values.iter().any(|&a| a < 1 || a > fp.actions) {
            return Err(Error::Format {
                path: path.into(),
                reason: "policy entries inconsistent with fingerprint".into(),
            });
        }
        if let Some(expected) = expected {
            file.fingerprint.ensure_matches(expected)?;
        }
        Ok(PolicyTable {
            fingerprint: file.fingerprint,
            actions: file.values.into_iter().map(|a| a - 1).collect(),
        })
    }

    /// Grid CSV: one row per `s¹`, one column per `s²`, 1-based action indices.
    pub fn write_grid_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let m2 = self.fingerprint.m2;
        let mut header = vec!["s1".to_string()];
        header.extend((1..=m2).map(|s2| format!("s2_{s2}")));
        w.write_record(&header)?;
        for (i, row) in self.actions.chunks(m2).enumerate() {
            let mut rec = vec![(i + 1).to_string()];
            rec.extend(row.iter().map(|a| (a + 1).to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<policy>", e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::updates::Update;

    fn table(m1: usize, m2: usize, j: usize) -> QTable {
        let actions = ActionSet::new(vec![Update::gd(0.1); j]).unwrap();
        QTable::zeros(Fingerprint::new(m1, m2, &actions, 1.0))
    }

    const S: State = State { s1: 1, s2: 1 };

    #[test]
    fn greedy_selection_and_ties() {
        let mut q = table(1, 1, 2);
        assert_eq!(select_action(&q, S, 0.0, &mut stream_rng(0, 0)), 0);
        q.set(S, 0, 0.1);
        q.set(S, 1, 0.9);
        assert_eq!(select_action(&q, S, 0.0, &mut stream_rng(0, 0)), 1);
    }

    #[test]
    fn sarsa_hand_values() {
        let mut q = table(2, 1, 1);
        let s2 = State { s1: 2, s2: 1 };
        q.set(s2, 0, 2.0);
        sarsa_update(&mut q, S, 0, 1.0, s2, 0, 0.3, 1.0);
        assert!((q.get(S, 0) - 0.9).abs() < 1e-12);

        sarsa_update(&mut q, S, 0, 4.0, s2, 0, 1.0, 0.0);
        assert_eq!(q.get(S, 0), 4.0);

        q.set(S, 0, 2.0);
        sarsa_update(&mut q, S, 0, 0.0, s2, 0, 0.7, 1.0);
        assert_eq!(q.get(S, 0), 2.0);
    }

    #[test]
    fn terminal_update() {
        let mut q = table(1, 1, 1);
        q.set(S, 0, 1.0);
        sarsa_update_terminal(&mut q, S, 0, 0.0, 0.5);
        assert_eq!(q.get(S, 0), 0.5);
        sarsa_update_terminal(&mut q, S, 0, 3.0, 1.0);
        assert_eq!(q.get(S, 0), 3.0);
    }

    #[test]
    fn schedule_endpoints() {
        assert_eq!(schedule_value(0.99, 0, 100, 0.005), 0.99);
        assert!((schedule_value(0.99, 100, 100, 0.005) - 0.00495).abs() < 1e-12);
        let half = schedule_value(1.0, 50, 100, 0.005);
        assert!((half - 1.0 / 200f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn policy_extraction() {
        let mut q = table(2, 2, 4);
        let p = greedy_policy(&q);
        assert!((1..=2).all(|s1| (1..=2).all(|s2| p.action(State { s1, s2 }) == 0)));
        let s = State { s1: 2, s2: 1 };
        for (a, v) in [0.0, 5.0, 1.0, 1.0].into_iter().enumerate() {
            q.set(s, a, v);
        }
        assert_eq!(greedy_policy(&q).action(s), 1);
        assert_eq!(greedy_policy(&q.scaled(2.0)), greedy_policy(&q));
    }

    #[test]
    fn persistence_round_trip_and_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let mut q = table(3, 2, 2);
        q.set(State { s1: 3, s2: 2 }, 1, 0.1 + 0.2);
        q.set(State { s1: 1, s2: 2 }, 0, -1e-300);
        let path = dir.path().join("q.json");
        q.save(&path).unwrap();
        let back = QTable::load(&path, Some(q.fingerprint())).unwrap();
        assert_eq!(back, q);
        assert!(back.values().iter().zip(q.values()).all(|(a, b)| a.to_bits() == b.to_bits()));

        let other = table(3, 2, 3);
        let err = QTable::load(&path, Some(other.fingerprint())).unwrap_err();
        assert!(matches!(err, Error::FingerprintMismatch { .. }), "{err}");

        let policy = greedy_policy(&q);
        let ppath = dir.path().join("p.json");
        policy.save(&ppath).unwrap();
        assert_eq!(PolicyTable::load(&ppath, Some(q.fingerprint())).unwrap(), policy);
        assert!(PolicyTable::load(&ppath, Some(other.fingerprint())).is_err());
        assert!(QTable::load(&ppath, None).is_err());
    }
}
