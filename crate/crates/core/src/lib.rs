//! Sequential update selection for budget-limited first-order optimization.
//!
//! A tabular SARSA agent picks one primitive update operator (gradient
//! descent, Nesterov accelerated gradient, uniform random restart) per
//! iteration. The agent is trained on a set of random convex quadratics and
//! compared against a Nelder-Mead tuned NAG baseline on unseen instances.
//!
//! Module map:
//!
//! * [`problem`]: random SPD quadratic problem class and its persistence.
//! * [`updates`]: the update operators and the concrete action sets.
//! * [`environment`]: state, reward and budget bookkeeping of one episode.
//! * [`agent`]: Q-table, epsilon-greedy selection and SARSA updates.
//! * [`tuner`]: Nelder-Mead and the tuned NAG baseline.
//! * [`harness`]: training, paired evaluation, metrics, sweeps and configs.

pub mod agent;
pub mod environment;
mod error;
pub mod harness;
pub mod problem;
pub mod rng;
pub mod tuner;
pub mod updates;

pub use error::{Error, Result};
