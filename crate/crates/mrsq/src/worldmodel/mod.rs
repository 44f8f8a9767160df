//! Latent world model: a state encoder producing simplex-structured
//! embeddings, a state-action trunk, and linear heads predicting the next
//! embedding, a binned reward distribution, and a termination logit,
//! trained jointly with a masked multi-step unroll loss.

pub mod loss;
pub mod model;

use serde::{Deserialize, Serialize};

use crate::nncore::Tensor;

pub use loss::{ModelLossOutput, NonFiniteLoss};
pub use model::{
    LatentEncoding, ModelPrediction, PredictInputGrads, PredictionGrads, WorldModel,
};

/// Loss weights and unroll horizon for the model objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelLossWeights {
    pub dynamics: f64,
    pub reward: f64,
    pub terminal: f64,
    pub preactivation: f64,
    pub horizon: usize,
}

impl Default for ModelLossWeights {
    fn default() -> Self {
        ModelLossWeights {
            dynamics: 20.0,
            reward: 0.1,
            terminal: 1.0,
            preactivation: 1e-5,
            horizon: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldModelConfig {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub zs_dim: usize,
    pub za_dim: usize,
    pub zsa_dim: usize,
    pub hidden_dim: usize,
    /// Simplicial embedding on the encoder and dynamics outputs; when off,
    /// the terminal transform falls back to ELU and embeddings are
    /// unnormalized.
    pub sem: bool,
    pub sem_group: usize,
    pub reward_bins: usize,
    /// Reward decode range is `symexp([-limit, limit])`.
    pub reward_symlog_limit: f64,
    pub weights: ModelLossWeights,
}

impl WorldModelConfig {
    /// Published-scale dimensions; desk-scale runs shrink these in config.
    pub fn full_scale(obs_dim: usize, action_dim: usize) -> Self {
        WorldModelConfig {
            obs_dim,
            action_dim,
            zs_dim: 512,
            za_dim: 256,
            zsa_dim: 512,
            hidden_dim: 512,
            sem: true,
            sem_group: 8,
            reward_bins: 65,
            reward_symlog_limit: 10.0,
            weights: ModelLossWeights::default(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, dim) in [
            ("obs_dim", self.obs_dim),
            ("action_dim", self.action_dim),
            ("zs_dim", self.zs_dim),
            ("za_dim", self.za_dim),
            ("zsa_dim", self.zsa_dim),
            ("hidden_dim", self.hidden_dim),
        ] {
            if dim == 0 {
                return Err(format!("{name} must be positive"));
            }
        }
        if self.sem && self.zs_dim % self.sem_group != 0 {
            return Err(format!(
                "zs_dim {} is not a multiple of the simplex group size {}",
                self.zs_dim, self.sem_group
            ));
        }
        if self.reward_bins < 2 {
            return Err("reward_bins must be at least 2".into());
        }
        if !(self.reward_symlog_limit > 0.0) {
            return Err("reward_symlog_limit must be positive".into());
        }
        if self.weights.horizon == 0 {
            return Err("model horizon must be at least 1".into());
        }
        let w = &self.weights;
        for (name, v) in [
            ("dynamics", w.dynamics),
            ("reward", w.reward),
            ("terminal", w.terminal),
            ("preactivation", w.preactivation),
        ] {
            if !(v >= 0.0) {
                return Err(format!("{name} loss weight must be non-negative"));
            }
        }
        Ok(())
    }
}

/// A batch of length-`H` transition segments laid out time-major. Segments
/// shorter than the horizon (episode boundary or buffer edge) are padded
/// with zeros and masked out; `masks[j]` is 1 while the segment is still
/// live at step `j` and 0 from the first invalid step onward.
#[derive(Debug, Clone)]
pub struct SegmentBatch {
    /// `horizon + 1` observation tensors of shape `[batch, obs_dim]`;
    /// index 0 holds the base states.
    pub obs: Vec<Tensor>,
    /// `horizon` action tensors of shape `[batch, action_dim]`.
    pub actions: Vec<Tensor>,
    /// `horizon` reward rows of length `batch`.
    pub rewards: Vec<Vec<f64>>,
    /// `horizon` termination-flag rows (1.0 = terminated on this step).
    pub terminals: Vec<Vec<f64>>,
    /// `horizon` validity rows; monotonically non-increasing per sample.
    pub masks: Vec<Vec<f64>>,
}

impl SegmentBatch {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn batch_size(&self) -> usize {
        self.obs[0].rows()
    }

    pub fn validate(&self, cfg: &WorldModelConfig) {
        let h = self.horizon();
        let b = self.batch_size();
        assert!(h >= 1, "segment batch needs at least one step");
        assert_eq!(self.obs.len(), h + 1);
        assert_eq!(self.rewards.len(), h);
        assert_eq!(self.terminals.len(), h);
        assert_eq!(self.masks.len(), h);
        for obs in &self.obs {
            assert_eq!(obs.shape(), [b, cfg.obs_dim]);
        }
        for actions in &self.actions {
            assert_eq!(actions.shape(), [b, cfg.action_dim]);
        }
        for rows in [&self.rewards, &self.terminals, &self.masks] {
            for row in rows.iter() {
                assert_eq!(row.len(), b);
            }
        }
        for s in 0..b {
            for j in 1..h {
                assert!(
                    self.masks[j][s] <= self.masks[j - 1][s],
                    "mask must not revive after going dead"
                );
            }
        }
    }
}
