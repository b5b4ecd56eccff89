//! Primitive update operators and the concrete action sets built from them.

use std::fmt;

use nalgebra::DVector;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::rng::Rng;
use crate::tuner::NagHyperparams;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateKind {
    Gd,
    Nag,
    Guru,
}

impl fmt::Display for UpdateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UpdateKind::Gd => "GD",
            UpdateKind::Nag => "NAG",
            UpdateKind::Guru => "GURU",
        })
    }
}

/// Where the NAG operator places the returned evaluation point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lookahead {
    /// `x̃ = x_{k+1} + μ v_{k+1}`: gradient is taken at the usual lookahead point.
    #[default]
    Standard,
    /// `x̃ = x_k + μ v_{k+1}`: lookahead from the position before the step.
    FromPrevious,
}

/// Parameter tuple of one update operator. Fields a kind does not use stay 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpdateParams {
    #[serde(default)]
    pub eta: f64,
    #[serde(default)]
    pub mu: f64,
    #[serde(default)]
    pub delta: f64,
    #[serde(default)]
    pub lb: f64,
    #[serde(default)]
    pub ub: f64,
    #[serde(default)]
    pub lookahead: Lookahead,
}

impl UpdateParams {
    pub fn gd(eta: f64) -> Self {
        UpdateParams { eta, ..Default::default() }
    }

    pub fn nag(eta: f64, mu: f64, delta: f64) -> Self {
        UpdateParams { eta, mu, delta, ..Default::default() }
    }

    pub fn guru(lb: f64, ub: f64) -> Self {
        UpdateParams { lb, ub, ..Default::default() }
    }

    /// `η_k = η · exp(−δ k)`.
    pub fn rate_at(&self, k: usize) -> f64 {
        decayed_rate(self.eta, self.delta, k)
    }
}

pub fn decayed_rate(eta: f64, delta: f64, k: usize) -> f64 {
    eta * (-delta * k as f64).exp()
}

/// One `(operator, parameters)` pair of an action set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Update {
    pub kind: UpdateKind,
    pub params: UpdateParams,
}

impl Update {
    pub fn gd(eta: f64) -> Self {
        Update { kind: UpdateKind::Gd, params: UpdateParams::gd(eta) }
    }

    pub fn nag(eta: f64, mu: f64, delta: f64) -> Self {
        Update { kind: UpdateKind::Nag, params: UpdateParams::nag(eta, mu, delta) }
    }

    pub fn guru(lb: f64, ub: f64) -> Self {
        Update { kind: UpdateKind::Guru, params: UpdateParams::guru(lb, ub) }
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        let ok = match self.kind {
            UpdateKind::Gd => p.eta > 0.0 && p.delta >= 0.0,
            UpdateKind::Nag => p.eta > 0.0 && (0.0..1.0).contains(&p.mu) && p.delta >= 0.0,
            UpdateKind::Guru => p.lb < p.ub && p.lb.is_finite() && p.ub.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid {} parameters: {p:?}", self.kind)))
        }
    }
}

/// Gradient descent step `x − η_k g`.
pub fn gd_update(x: &DVector<f64>, g: &DVector<f64>, k: usize, params: &UpdateParams) -> DVector<f64> {
    let eta_k = params.rate_at(k);
    x - g * eta_k
}

/// Per-episode persistent state of the NAG operator.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateMemory {
    pub velocity: DVector<f64>,
    pub position: DVector<f64>,
    pub initialized: bool,
}

impl UpdateMemory {
    pub fn new(d: usize) -> Self {
        UpdateMemory {
            velocity: DVector::zeros(d),
            position: DVector::zeros(d),
            initialized: false,
        }
    }

    /// Zero the velocity; the next NAG call starts over from its input point.
    pub fn reset(&mut self) {
        self.velocity.fill(0.0);
        self.initialized = false;
    }

    /// Move the persistent position so that its lookahead coincides with
    /// `x_tilde`, keeping the velocity. Used when another operator moved the
    /// iterate since the last NAG call.
    pub fn reanchor(&mut self, x_tilde: &DVector<f64>, params: &UpdateParams) {
        if !self.initialized {
            return;
        }
        self.position = match params.lookahead {
            Lookahead::Standard => x_tilde - &self.velocity * params.mu,
            Lookahead::FromPrevious => x_tilde.clone(),
        };
    }
}

/// One NAG step with exponentially decayed learning rate.
///
/// `g` must be the gradient at `x_tilde`, the point returned by the previous
/// call (or the starting point on the first call).
pub fn nag_update(
    mem: &mut UpdateMemory,
    x_tilde: &DVector<f64>,
    g: &DVector<f64>,
    k: usize,
    params: &UpdateParams,
) -> DVector<f64> {
    if !mem.initialized {
        mem.velocity.fill(0.0);
        mem.position.copy_from(x_tilde);
        mem.initialized = true;
    }
    let eta_k = params.rate_at(k);
    let velocity = &mem.velocity * params.mu - g * eta_k;
    let next = &mem.position + &velocity;
    let interim = match params.lookahead {
        Lookahead::Standard => &next + &velocity * params.mu,
        Lookahead::FromPrevious => &mem.position + &velocity * params.mu,
    };
    mem.velocity = velocity;
    mem.position = next;
    interim
}

/// Uniform random point in the box `[lb, ub]^d`.
pub fn guru_update(d: usize, params: &UpdateParams, rng: &mut Rng) -> DVector<f64> {
    let (lb, ub) = (params.lb, params.ub);
    DVector::from_fn(d, |_, _| lb + (ub - lb) * rng.random::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionSetVariant {
    H1,
    H2,
    H3,
}

impl std::str::FromStr for ActionSetVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "H1" => Ok(ActionSetVariant::H1),
            "H2" => Ok(ActionSetVariant::H2),
            "H3" => Ok(ActionSetVariant::H3),
            other => Err(Error::InvalidArgument(format!("unknown action set variant {other:?}"))),
        }
    }
}

impl ActionSetVariant {
    pub fn needs_baseline(self) -> bool {
        !matches!(self, ActionSetVariant::H3)
    }
}

/// Ordered list of updates; an action is an index into it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionSet {
    entries: Vec<Update>,
}

impl ActionSet {
    pub fn new(entries: Vec<Update>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidArgument("action set must not be empty".into()));
        }
        for e in &entries {
            e.validate()?;
        }
        Ok(ActionSet { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Update> {
        self.entries.get(index)
    }

    pub fn entries(&self) -> &[Update] {
        &self.entries
    }

    /// Content hash used in Q-table fingerprints.
    pub fn hash_hex(&self) -> String {
        let canonical = serde_json::to_string(&self.entries).expect("action set serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        hex::encode(&digest[..8])
    }
}

/// Build one of the three action sets studied.
///
/// `H1` and `H2` scale the tuned learning rate and share the tuned momentum
/// and decay; `H3` is fixed and ignores `tuned`.
pub fn make_action_set(
    variant: ActionSetVariant,
    tuned: Option<&NagHyperparams>,
    lookahead: Lookahead,
) -> Result<ActionSet> {
    let nag = |eta: f64, mu: f64, delta: f64| Update {
        kind: UpdateKind::Nag,
        params: UpdateParams {
            lookahead,
            ..UpdateParams::nag(eta, mu, delta)
        },
    };
    let scaled = |factors: &[f64]| -> Result<ActionSet> {
        let hp = tuned.ok_or_else(|| {
            Error::InvalidArgument(format!("action set {variant:?} requires tuned NAG parameters"))
        })?;
        hp.validate()?;
        ActionSet::new(factors.iter().map(|f| nag(f * hp.eta1, hp.mu, hp.delta)).collect())
    };
    match variant {
        ActionSetVariant::H1 => scaled(&[0.5, 1.0]),
        ActionSetVariant::H2 => scaled(&[0.25, 0.5, 1.0, 2.0]),
        ActionSetVariant::H3 => ActionSet::new(vec![
            Update::guru(-1.0, 1.0),
            Update::gd(0.003),
            Update::gd(0.001),
            nag(0.0006, 0.6, 0.0001),
        ]),
    }
}
