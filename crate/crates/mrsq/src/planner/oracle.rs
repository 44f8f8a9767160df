//! Ground-truth chain model for search experiments. The latent is the
//! one-hot observation itself, transitions follow the exact chain dynamics,
//! and the value head returns the closed-form optimal values, so any
//! planning failure is attributable to the search and not to model error.

use crate::envs::nchain::ADVANCE_ACTION;
use crate::envs::{argmax, nchain_optimal_q, nchain_step, NChainSpec};
use crate::nncore::Tensor;

use super::search::{SearchModel, SearchStep};

/// Continuous-relaxation wrapper around the exact chain: latent rows are
/// one-hot states, action rows live in `[-1, 1]^A` and decode by argmax.
#[derive(Debug, Clone)]
pub struct ChainOracle {
    spec: NChainSpec,
    gamma: f64,
}

impl ChainOracle {
    pub fn new(spec: NChainSpec, gamma: f64) -> Self {
        assert!(gamma > 0.0 && gamma <= 1.0);
        ChainOracle { spec, gamma }
    }

    pub fn spec(&self) -> &NChainSpec {
        &self.spec
    }
}

impl SearchModel for ChainOracle {
    fn latent_dim(&self) -> usize {
        self.spec.obs_dim()
    }

    fn action_dim(&self) -> usize {
        self.spec.actions
    }

    fn encode(&self, obs: &Tensor) -> Tensor {
        assert_eq!(obs.cols(), self.spec.obs_dim());
        obs.clone()
    }

    fn predict(&self, z: &Tensor, actions: &Tensor) -> SearchStep {
        let rows = z.rows();
        let mut z_next = Tensor::zeros(&[rows, self.spec.obs_dim()]);
        let mut rewards = Vec::with_capacity(rows);
        let mut terminal_probs = Vec::with_capacity(rows);
        for r in 0..rows {
            let state = argmax(z.row(r));
            let action = argmax(actions.row(r));
            let outcome = nchain_step(&self.spec, state, action);
            z_next.row_mut(r)[outcome.next_state] = 1.0;
            rewards.push(outcome.reward);
            terminal_probs.push(if outcome.terminated { 1.0 } else { 0.0 });
        }
        SearchStep { z_next, rewards, terminal_probs }
    }

    fn policy(&self, z: &Tensor) -> Tensor {
        let mut actions = Tensor::zeros(&[z.rows(), self.spec.actions]);
        for r in 0..z.rows() {
            actions.row_mut(r)[ADVANCE_ACTION] = 1.0;
        }
        actions
    }

    fn ensemble_values(&self, z: &Tensor, actions: &Tensor) -> Vec<Vec<f64>> {
        let values = (0..z.rows())
            .map(|r| {
                let state = argmax(z.row(r));
                let action = argmax(actions.row(r));
                nchain_optimal_q(&self.spec, self.gamma, state, action)
            })
            .collect();
        vec![values]
    }
}
