//! Needle-in-a-haystack chain. The agent starts at one end of a chain of
//! `N` states and must pick action 0 at every step; reaching the far end
//! pays reward 1 and ends the episode. Any other action drops the agent
//! into an absorbing state that pays nothing forever, so exactly one
//! action sequence per horizon is rewarding.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    argmax, check_action_finite, ActionSpace, EnvError, EnvState, Environment, StepOutcome,
};

pub const ADVANCE_ACTION: usize = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NChainSpec {
    /// Number of chain states `N`; the absorbing state is extra.
    pub states: usize,
    /// Number of actions `A`; only action 0 advances.
    pub actions: usize,
}

impl NChainSpec {
    /// Index of the absorbing state.
    pub fn absorb(&self) -> usize {
        self.states
    }

    /// Observation width: one-hot over the `N` chain states plus absorb.
    pub fn obs_dim(&self) -> usize {
        self.states + 1
    }

    pub fn one_hot(&self, state: usize) -> Vec<f64> {
        let mut obs = vec![0.0; self.obs_dim()];
        obs[state] = 1.0;
        obs
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainOutcome {
    pub next_state: usize,
    pub reward: f64,
    pub terminated: bool,
}

/// Exact transition function, shared by the environment and by planner
/// tests that search against the true dynamics.
pub fn nchain_step(spec: &NChainSpec, state: usize, action: usize) -> ChainOutcome {
    let absorb = spec.absorb();
    if state == absorb || state == spec.states - 1 {
        return ChainOutcome { next_state: absorb, reward: 0.0, terminated: false };
    }
    if action == ADVANCE_ACTION {
        let next_state = state + 1;
        let reached_goal = next_state == spec.states - 1;
        ChainOutcome {
            next_state,
            reward: if reached_goal { 1.0 } else { 0.0 },
            terminated: reached_goal,
        }
    } else {
        ChainOutcome { next_state: absorb, reward: 0.0, terminated: false }
    }
}

/// Closed-form optimal action value. Advancing from state `i` reaches the
/// goal after `N - 1 - i` steps with the single reward discounted by
/// `gamma^(N - 2 - i)`; every other choice is worth zero.
pub fn nchain_optimal_q(spec: &NChainSpec, gamma: f64, state: usize, action: usize) -> f64 {
    if state == spec.absorb() || state == spec.states - 1 {
        return 0.0;
    }
    if action == ADVANCE_ACTION {
        gamma.powi((spec.states - 2 - state) as i32)
    } else {
        0.0
    }
}

#[derive(Debug, Clone)]
pub struct NChain {
    spec: NChainSpec,
    max_steps: usize,
    state: usize,
    steps: usize,
}

impl NChain {
    pub fn new(spec: NChainSpec, max_steps: usize) -> Self {
        assert!(spec.states >= 2, "chain needs at least a start and a goal");
        assert!(spec.actions >= 1, "chain needs at least one action");
        NChain { spec, max_steps, state: 0, steps: 0 }
    }

    pub fn spec(&self) -> &NChainSpec {
        &self.spec
    }
}

impl Environment for NChain {
    fn obs_dim(&self) -> usize {
        self.spec.obs_dim()
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(self.spec.actions)
    }

    fn max_episode_steps(&self) -> usize {
        self.max_steps
    }

    fn reset(&mut self, _rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.state = 0;
        self.steps = 0;
        self.spec.one_hot(self.state)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome, EnvError> {
        check_action_finite(action)?;
        let choice = argmax(action);
        let outcome = nchain_step(&self.spec, self.state, choice);
        self.state = outcome.next_state;
        self.steps += 1;
        Ok(StepOutcome {
            obs: self.spec.one_hot(self.state),
            reward: outcome.reward,
            terminated: outcome.terminated,
            truncated: !outcome.terminated && self.steps >= self.max_steps,
        })
    }

    fn state(&self) -> EnvState {
        EnvState::Chain { state: self.state, steps: self.steps }
    }

    fn restore(&mut self, state: &EnvState) {
        match state {
            EnvState::Chain { state, steps } => {
                self.state = *state;
                self.steps = *steps;
            }
            other => panic!("expected chain state, got {other:?}"),
        }
    }

    fn current_obs(&self) -> Vec<f64> {
        self.spec.one_hot(self.state)
    }

    fn box_clone(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}
