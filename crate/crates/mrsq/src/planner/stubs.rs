//! Hand-built search models with closed-form behavior, used by planner
//! tests to separate search correctness from model quality.

use crate::nncore::Tensor;

use super::search::{SearchModel, SearchStep};

type RowFn = Box<dyn Fn(&[f64], &[f64]) -> f64 + Sync>;

/// A search model whose latent transition is `z + drift * a` over the
/// shared leading dimensions and whose reward, termination, and value
/// outputs are arbitrary per-row functions of `(z, a)`.
pub(crate) struct StubModel {
    latent_dim: usize,
    action_dim: usize,
    drift: f64,
    reward: RowFn,
    terminal: RowFn,
    members: Vec<RowFn>,
    policy_action: Vec<f64>,
}

impl StubModel {
    /// Zero reward, no termination, one all-zero value member, zero policy.
    pub fn constant(latent_dim: usize, action_dim: usize) -> Self {
        StubModel {
            latent_dim,
            action_dim,
            drift: 0.0,
            reward: Box::new(|_, _| 0.0),
            terminal: Box::new(|_, _| 0.0),
            members: vec![Box::new(|_, _| 0.0)],
            policy_action: vec![0.0; action_dim],
        }
    }

    pub fn with_drift(mut self, drift: f64) -> Self {
        self.drift = drift;
        self
    }

    pub fn with_reward(mut self, f: impl Fn(&[f64], &[f64]) -> f64 + Sync + 'static) -> Self {
        self.reward = Box::new(f);
        self
    }

    pub fn with_terminal(mut self, f: impl Fn(&[f64], &[f64]) -> f64 + Sync + 'static) -> Self {
        self.terminal = Box::new(f);
        self
    }

    pub fn with_members(mut self, members: Vec<RowFn>) -> Self {
        assert!(!members.is_empty());
        self.members = members;
        self
    }

    pub fn with_policy(mut self, action: Vec<f64>) -> Self {
        assert_eq!(action.len(), self.action_dim);
        self.policy_action = action;
        self
    }
}

impl SearchModel for StubModel {
    fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn encode(&self, obs: &Tensor) -> Tensor {
        assert_eq!(obs.cols(), self.latent_dim);
        obs.clone()
    }

    fn predict(&self, z: &Tensor, actions: &Tensor) -> SearchStep {
        let rows = z.rows();
        let mut z_next = Tensor::zeros(&[rows, self.latent_dim]);
        let mut rewards = Vec::with_capacity(rows);
        let mut terminal_probs = Vec::with_capacity(rows);
        for r in 0..rows {
            let (zr, ar) = (z.row(r), actions.row(r));
            let next = z_next.row_mut(r);
            for d in 0..self.latent_dim {
                next[d] = zr[d] + self.drift * ar.get(d).copied().unwrap_or(0.0);
            }
            rewards.push((self.reward)(zr, ar));
            terminal_probs.push((self.terminal)(zr, ar));
        }
        SearchStep { z_next, rewards, terminal_probs }
    }

    fn policy(&self, z: &Tensor) -> Tensor {
        let mut actions = Tensor::zeros(&[z.rows(), self.action_dim]);
        for r in 0..z.rows() {
            actions.row_mut(r).copy_from_slice(&self.policy_action);
        }
        actions
    }

    fn ensemble_values(&self, z: &Tensor, actions: &Tensor) -> Vec<Vec<f64>> {
        self.members
            .iter()
            .map(|member| {
                (0..z.rows()).map(|r| member(z.row(r), actions.row(r))).collect()
            })
            .collect()
    }
}
