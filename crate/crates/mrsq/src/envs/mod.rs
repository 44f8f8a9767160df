//! Desk-scale environments: a sparse-reward chain with an absorbing failure
//! state, a pendulum swing-up task, and a cart balance task with early
//! termination. All dynamics are deterministic; randomness enters only
//! through `reset`.

pub mod cartbalance;
pub mod nchain;
pub mod pendulum;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cartbalance::CartBalance;
pub use nchain::{nchain_optimal_q, nchain_step, ChainOutcome, NChain, NChainSpec};
pub use pendulum::Pendulum;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("non-finite action component {value} at index {index}")]
    NonFiniteAction { index: usize, value: f64 },
    #[error("environment state became non-finite")]
    NonFiniteState,
}

/// How the agent-side continuous action vector is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionSpace {
    /// `dim` choices; the executed action is the argmax component.
    Discrete(usize),
    /// Bounded continuous control in `[-1, 1]^dim`.
    Continuous(usize),
}

impl ActionSpace {
    pub fn dim(&self) -> usize {
        match *self {
            ActionSpace::Discrete(d) | ActionSpace::Continuous(d) => d,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

/// Snapshot of an environment's internal state, used for checkpointing and
/// for the restore-and-rollout diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EnvState {
    Chain { state: usize, steps: usize },
    Pendulum { theta: f64, theta_dot: f64, steps: usize },
    CartBalance { x: f64, x_dot: f64, theta: f64, theta_dot: f64, steps: usize },
    /// Free-form state for test doubles.
    Custom(Vec<f64>),
}

pub trait Environment: Send {
    fn obs_dim(&self) -> usize;
    fn action_space(&self) -> ActionSpace;
    fn max_episode_steps(&self) -> usize;

    /// Starts a new episode and returns the initial observation.
    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Vec<f64>;

    /// Advances one step. `action` is the agent-side vector in
    /// `[-1, 1]^action_dim`; discrete environments execute its argmax.
    fn step(&mut self, action: &[f64]) -> Result<StepOutcome, EnvError>;

    fn state(&self) -> EnvState;
    fn restore(&mut self, state: &EnvState);
    fn current_obs(&self) -> Vec<f64>;
    fn box_clone(&self) -> Box<dyn Environment>;

    /// Whether `state` and `restore` capture the complete simulator state.
    /// Restore-and-rollout diagnostics refuse environments that cannot.
    fn supports_snapshots(&self) -> bool {
        true
    }

    /// Agent-side action dimension.
    fn action_dim(&self) -> usize {
        self.action_space().dim()
    }

    /// The action vector as stored in replay: a one-hot of the executed
    /// choice for discrete spaces, the clipped vector otherwise.
    fn canonical_action(&self, action: &[f64]) -> Vec<f64> {
        match self.action_space() {
            ActionSpace::Discrete(dim) => {
                let mut one_hot = vec![0.0; dim];
                one_hot[argmax(action)] = 1.0;
                one_hot
            }
            ActionSpace::Continuous(_) => {
                action.iter().map(|a| a.clamp(-1.0, 1.0)).collect()
            }
        }
    }
}

impl Clone for Box<dyn Environment> {
    fn clone(&self) -> Self {
        self.box_clone()
    }
}

/// Index of the largest component; ties resolve to the first.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn check_action_finite(action: &[f64]) -> Result<(), EnvError> {
    for (index, value) in action.iter().enumerate() {
        if !value.is_finite() {
            return Err(EnvError::NonFiniteAction { index, value: *value });
        }
    }
    Ok(())
}

/// Environment selection as it appears in run configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum EnvConfig {
    Nchain {
        states: usize,
        actions: usize,
        #[serde(default)]
        max_steps: Option<usize>,
    },
    Pendulum,
    Cartbalance,
}

impl EnvConfig {
    pub fn build(&self) -> Box<dyn Environment> {
        match self {
            EnvConfig::Nchain { states, actions, max_steps } => Box::new(NChain::new(
                NChainSpec { states: *states, actions: *actions },
                max_steps.unwrap_or(2 * states),
            )),
            EnvConfig::Pendulum => Box::new(Pendulum::new()),
            EnvConfig::Cartbalance => Box::new(CartBalance::new()),
        }
    }

    pub fn env_name(&self) -> &'static str {
        match self {
            EnvConfig::Nchain { .. } => "nchain",
            EnvConfig::Pendulum => "pendulum",
            EnvConfig::Cartbalance => "cartbalance",
        }
    }
}
