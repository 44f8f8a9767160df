//! The acting agent: one parameter store holding the world model, value
//! ensemble and policy head, plus the planning state and switches that
//! decide how an observation becomes an action.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::analysis::ValueAgent;
use crate::nncore::{ParameterStore, Tensor};
use crate::planner::{
    mppi_plan, PlanError, PlanStats, PlannerConfig, SearchModel, SearchStep, WarmStart,
};
use crate::valuepolicy::{PolicyNet, QEnsemble};
use crate::worldmodel::WorldModel;

use super::config::RunConfig;

/// The networks and their parameters, separated from the mutable planning
/// state so a planner call can borrow the nets immutably while the warm
/// start is updated in place.
pub struct AgentNets {
    pub store: ParameterStore,
    pub model: WorldModel,
    pub ensemble: QEnsemble,
    pub policy: PolicyNet,
}

impl AgentNets {
    pub fn new(
        cfg: &RunConfig,
        obs_dim: usize,
        action_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut store = ParameterStore::new();
        let model =
            WorldModel::new(&mut store, rng, cfg.world_model_config(obs_dim, action_dim));
        let ensemble = QEnsemble::new(
            &mut store,
            rng,
            cfg.encoder.zsa_dim,
            cfg.value.hidden_dim,
            cfg.value.ensemble_size,
        );
        let policy =
            PolicyNet::new(&mut store, rng, cfg.encoder.zs_dim, cfg.policy.hidden_dim, action_dim);
        AgentNets { store, model, ensemble, policy }
    }

    /// Latent for a single observation row.
    fn encode_row(&self, obs: &[f64]) -> Tensor {
        self.model.encode(&self.store, &Tensor::from_row(obs)).z().clone()
    }
}

/// Search reads the target value copies, so the values scoring candidate
/// tails move only at the hard refresh, like the bootstrap targets do.
const SEARCH_USES_TARGETS: bool = true;

impl SearchModel for AgentNets {
    fn latent_dim(&self) -> usize {
        self.model.config().zs_dim
    }

    fn action_dim(&self) -> usize {
        self.model.config().action_dim
    }

    fn encode(&self, obs: &Tensor) -> Tensor {
        self.model.encode(&self.store, obs).z().clone()
    }

    fn predict(&self, z: &Tensor, actions: &Tensor) -> SearchStep {
        let prediction = self.model.predict(&self.store, z, actions);
        SearchStep {
            rewards: self.model.decode_rewards(prediction.reward_logits()),
            terminal_probs: self.model.terminal_probs(prediction.terminal_logits()),
            z_next: prediction.z_next().clone(),
        }
    }

    fn policy(&self, z: &Tensor) -> Tensor {
        self.policy.act(&self.store, z)
    }

    fn ensemble_values(&self, z: &Tensor, actions: &Tensor) -> Vec<Vec<f64>> {
        let prediction = self.model.predict(&self.store, z, actions);
        self.ensemble.all_q(&self.store, prediction.zsa(), SEARCH_USES_TARGETS)
    }
}

/// Networks plus acting behavior: planner configuration, the warm start
/// carried across steps of an episode, and the switches selecting planner
/// or policy-head acting.
pub struct Agent {
    pub nets: AgentNets,
    pub planner: PlannerConfig,
    pub warm: WarmStart,
    pub use_mpc: bool,
    pub exploration_noise: f64,
    min_reduction: bool,
}

impl Agent {
    pub fn new(
        cfg: &RunConfig,
        obs_dim: usize,
        action_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Agent {
            nets: AgentNets::new(cfg, obs_dim, action_dim, rng),
            planner: cfg.planner_config(),
            warm: WarmStart::new(),
            use_mpc: cfg.mpc.use_mpc_for_acting,
            exploration_noise: cfg.exploration.exploration_noise,
            min_reduction: cfg.mpc.min_in_mpc,
        }
    }

    /// Raw policy-head action, already squashed into `(-1, 1)`.
    pub fn policy_action(&self, obs: &[f64]) -> Vec<f64> {
        let z = self.nets.encode_row(obs);
        self.nets.policy.act(&self.nets.store, &z).row(0).to_vec()
    }

    /// Greedy action: a planning call (advancing the episode's warm start)
    /// when MPC acting is on, the raw policy head otherwise.
    pub fn try_act(
        &mut self,
        obs: &[f64],
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<f64>, Option<PlanStats>), PlanError> {
        if self.use_mpc {
            let outcome = mppi_plan(&self.nets, obs, &mut self.warm, &self.planner, rng)?;
            Ok((outcome.action, Some(outcome.stats)))
        } else {
            Ok((self.policy_action(obs), None))
        }
    }

    /// Training action: the greedy action plus clipped Gaussian noise when
    /// exploration noise is configured.
    pub fn act_training(
        &mut self,
        obs: &[f64],
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<f64>, Option<PlanStats>), PlanError> {
        let (mut action, stats) = self.try_act(obs, rng)?;
        if self.exploration_noise > 0.0 {
            let normal = Normal::new(0.0, self.exploration_noise).expect("finite noise std");
            for a in &mut action {
                *a = (*a + normal.sample(rng)).clamp(-1.0, 1.0);
            }
        }
        Ok((action, stats))
    }

    /// Planner action from a cold start, leaving the episode's warm start
    /// untouched. Used for the fixed probe states sampled during training.
    pub fn plan_probe(&self, obs: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>, PlanError> {
        let mut warm = WarmStart::new();
        Ok(mppi_plan(&self.nets, obs, &mut warm, &self.planner, rng)?.action)
    }
}

impl ValueAgent for Agent {
    fn begin_episode(&mut self) {
        self.warm.clear();
    }

    fn act(&mut self, obs: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.try_act(obs, rng)
            .expect("acting failed: every candidate scored non-finite")
            .0
    }

    /// The agent's own belief about an action's value, reduced over the
    /// ensemble the same way its search tails are: minimum by default, mean
    /// under the mean-reduction ablation.
    fn value_estimate(&self, obs: &[f64], action: &[f64]) -> f64 {
        let z = self.nets.encode_row(obs);
        let prediction =
            self.nets.model.predict(&self.nets.store, &z, &Tensor::from_row(action));
        let q = if self.min_reduction {
            self.nets.ensemble.min_q(&self.nets.store, prediction.zsa(), SEARCH_USES_TARGETS)
        } else {
            self.nets.ensemble.mean_q(&self.nets.store, prediction.zsa(), SEARCH_USES_TARGETS)
        };
        q[0]
    }
}
