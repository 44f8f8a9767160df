//! Network definitions and manual forward/backward plumbing for the world
//! model. All parameters live in a shared [`ParameterStore`] under the
//! `model.` prefix.

use rand_chacha::ChaCha8Rng;

use crate::nncore::{
    sigmoid, Act, LayerSpec, Mlp, MlpCache, MlpSpec, Norm, ParameterStore, Tensor, TwoHot,
};

use super::WorldModelConfig;

/// Encoder forward pass for a batch of observations, retaining what the
/// backward pass and the pre-activation penalty need.
pub struct LatentEncoding {
    cache: MlpCache,
}

impl LatentEncoding {
    /// State embeddings, shape `[batch, zs_dim]`.
    pub fn z(&self) -> &Tensor {
        &self.cache.output
    }

    /// Input of the encoder's final normalization, shape `[batch, zs_dim]`.
    pub fn preactivation(&self) -> &Tensor {
        &self.cache.final_linear
    }
}

/// One model step for a batch of `(z_s, action)` pairs: the predicted next
/// embedding, reward distribution logits, termination logit, and the
/// state-action embedding consumed by the value networks.
pub struct ModelPrediction {
    za: MlpCache,
    trunk_input: Tensor,
    trunk: MlpCache,
    dynamics: MlpCache,
    reward: MlpCache,
    terminal: MlpCache,
}

impl ModelPrediction {
    /// Predicted next state embedding, shape `[batch, zs_dim]`.
    pub fn z_next(&self) -> &Tensor {
        &self.dynamics.output
    }

    /// Reward distribution logits, shape `[batch, reward_bins]`.
    pub fn reward_logits(&self) -> &Tensor {
        &self.reward.output
    }

    /// Termination logits, shape `[batch, 1]`.
    pub fn terminal_logits(&self) -> &Tensor {
        &self.terminal.output
    }

    /// State-action embeddings, shape `[batch, zsa_dim]`.
    pub fn zsa(&self) -> &Tensor {
        &self.trunk.output
    }
}

/// Upstream gradients for [`WorldModel::predict_backward`]; any subset may
/// be present.
#[derive(Default)]
pub struct PredictionGrads<'a> {
    pub z_next: Option<&'a Tensor>,
    pub reward_logits: Option<&'a Tensor>,
    pub terminal_logits: Option<&'a Tensor>,
    pub zsa: Option<&'a Tensor>,
}

/// Gradients with respect to the inputs of [`WorldModel::predict`].
pub struct PredictInputGrads {
    pub zs: Tensor,
    pub action: Tensor,
}

pub struct WorldModel {
    cfg: WorldModelConfig,
    encoder: Mlp,
    action_embed: Mlp,
    trunk: Mlp,
    dynamics_head: Mlp,
    reward_head: Mlp,
    terminal_head: Mlp,
    two_hot: TwoHot,
}

impl WorldModel {
    pub fn new(store: &mut ParameterStore, rng: &mut ChaCha8Rng, cfg: WorldModelConfig) -> Self {
        if let Err(msg) = cfg.validate() {
            panic!("invalid world model config: {msg}");
        }
        let embed_act = if cfg.sem { Act::Sem { group: cfg.sem_group } } else { Act::Elu };
        let encoder = Mlp::new(
            store,
            rng,
            "model.encoder",
            MlpSpec {
                input: cfg.obs_dim,
                layers: vec![
                    LayerSpec { width: cfg.hidden_dim, norm: Norm::Free, act: Act::Elu },
                    LayerSpec { width: cfg.hidden_dim, norm: Norm::Free, act: Act::Elu },
                    LayerSpec { width: cfg.zs_dim, norm: Norm::Affine, act: embed_act },
                ],
            },
        );
        let action_embed = Mlp::new(
            store,
            rng,
            "model.action",
            MlpSpec {
                input: cfg.action_dim,
                layers: vec![LayerSpec { width: cfg.za_dim, norm: Norm::None, act: Act::Elu }],
            },
        );
        let trunk = Mlp::new(
            store,
            rng,
            "model.trunk",
            MlpSpec {
                input: cfg.zs_dim + cfg.za_dim,
                layers: vec![
                    LayerSpec { width: cfg.hidden_dim, norm: Norm::Free, act: Act::Elu },
                    LayerSpec { width: cfg.hidden_dim, norm: Norm::Free, act: Act::Elu },
                    LayerSpec { width: cfg.zsa_dim, norm: Norm::None, act: Act::None },
                ],
            },
        );
        let dynamics_head = Mlp::new(
            store,
            rng,
            "model.dynamics",
            MlpSpec {
                input: cfg.zsa_dim,
                layers: vec![LayerSpec { width: cfg.zs_dim, norm: Norm::Affine, act: embed_act }],
            },
        );
        let reward_head = Mlp::new(
            store,
            rng,
            "model.reward",
            MlpSpec {
                input: cfg.zsa_dim,
                layers: vec![LayerSpec {
                    width: cfg.reward_bins,
                    norm: Norm::None,
                    act: Act::None,
                }],
            },
        );
        let terminal_head = Mlp::new(
            store,
            rng,
            "model.terminal",
            MlpSpec {
                input: cfg.zsa_dim,
                layers: vec![LayerSpec { width: 1, norm: Norm::None, act: Act::None }],
            },
        );
        let two_hot =
            TwoHot::new(cfg.reward_bins, -cfg.reward_symlog_limit, cfg.reward_symlog_limit);
        WorldModel {
            cfg,
            encoder,
            action_embed,
            trunk,
            dynamics_head,
            reward_head,
            terminal_head,
            two_hot,
        }
    }

    pub fn config(&self) -> &WorldModelConfig {
        &self.cfg
    }

    pub fn two_hot(&self) -> &TwoHot {
        &self.two_hot
    }

    /// Embeds a batch of observations, shape `[batch, obs_dim]`.
    pub fn encode(&self, store: &ParameterStore, obs: &Tensor) -> LatentEncoding {
        assert_eq!(obs.cols(), self.cfg.obs_dim, "observation width mismatch");
        LatentEncoding { cache: self.encoder.forward(store, obs) }
    }

    /// Backpropagates through the encoder, accumulating parameter
    /// gradients. `d_preactivation` feeds penalties on the final linear
    /// output.
    pub fn encode_backward(
        &self,
        store: &mut ParameterStore,
        encoding: &LatentEncoding,
        d_z: &Tensor,
        d_preactivation: Option<&Tensor>,
    ) {
        self.encoder.backward_with_preact(store, &encoding.cache, d_z, d_preactivation);
    }

    /// One model step for a batch of embeddings and actions.
    pub fn predict(&self, store: &ParameterStore, zs: &Tensor, actions: &Tensor) -> ModelPrediction {
        assert_eq!(zs.cols(), self.cfg.zs_dim, "embedding width mismatch");
        assert_eq!(actions.cols(), self.cfg.action_dim, "action width mismatch");
        let za = self.action_embed.forward(store, actions);
        let trunk_input = zs.concat_cols(&za.output);
        let trunk = self.trunk.forward(store, &trunk_input);
        let zsa = &trunk.output;
        let dynamics = self.dynamics_head.forward(store, zsa);
        let reward = self.reward_head.forward(store, zsa);
        let terminal = self.terminal_head.forward(store, zsa);
        ModelPrediction { za, trunk_input, trunk, dynamics, reward, terminal, }
    }

    /// Backpropagates any combination of head gradients through the trunk
    /// and action embedding, accumulating parameter gradients, and returns
    /// the gradients with respect to both inputs.
    pub fn predict_backward(
        &self,
        store: &mut ParameterStore,
        prediction: &ModelPrediction,
        grads: PredictionGrads<'_>,
    ) -> PredictInputGrads {
        let batch = prediction.trunk.output.rows();
        let mut d_zsa = Tensor::zeros(&[batch, self.cfg.zsa_dim]);
        if let Some(d) = grads.z_next {
            add_assign(&mut d_zsa, &self.dynamics_head.backward(store, &prediction.dynamics, d));
        }
        if let Some(d) = grads.reward_logits {
            add_assign(&mut d_zsa, &self.reward_head.backward(store, &prediction.reward, d));
        }
        if let Some(d) = grads.terminal_logits {
            add_assign(&mut d_zsa, &self.terminal_head.backward(store, &prediction.terminal, d));
        }
        if let Some(d) = grads.zsa {
            add_assign(&mut d_zsa, d);
        }
        let d_trunk_input = self.trunk.backward(store, &prediction.trunk, &d_zsa);
        debug_assert_eq!(d_trunk_input.shape(), prediction.trunk_input.shape());
        let (d_zs, d_za) = d_trunk_input.split_cols(self.cfg.zs_dim);
        let d_action = self.action_embed.backward(store, &prediction.za, &d_za);
        PredictInputGrads { zs: d_zs, action: d_action }
    }

    /// Rolls the model forward through an open-loop action sequence.
    /// Prediction `j` is a pure function of `z0` and the first `j + 1`
    /// actions.
    pub fn rollout(
        &self,
        store: &ParameterStore,
        z0: &Tensor,
        actions: &[Tensor],
    ) -> Vec<ModelPrediction> {
        let mut predictions = Vec::with_capacity(actions.len());
        let mut z = z0.clone();
        for step_actions in actions {
            let prediction = self.predict(store, &z, step_actions);
            z = prediction.z_next().clone();
            predictions.push(prediction);
        }
        predictions
    }

    /// Decodes reward logits to scalar rewards, one per batch row.
    pub fn decode_rewards(&self, reward_logits: &Tensor) -> Vec<f64> {
        (0..reward_logits.rows())
            .map(|r| self.two_hot.decode_logits(reward_logits.row(r)))
            .collect()
    }

    /// Termination probabilities from logits, one per batch row.
    pub fn terminal_probs(&self, terminal_logits: &Tensor) -> Vec<f64> {
        (0..terminal_logits.rows()).map(|r| sigmoid(terminal_logits.row(r)[0])).collect()
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = self.encoder.param_names();
        names.extend(self.action_embed.param_names());
        names.extend(self.trunk.param_names());
        names.extend(self.dynamics_head.param_names());
        names.extend(self.reward_head.param_names());
        names.extend(self.terminal_head.param_names());
        names
    }
}

fn add_assign(acc: &mut Tensor, other: &Tensor) {
    debug_assert_eq!(acc.shape(), other.shape());
    for (a, o) in acc.values_mut().iter_mut().zip(other.values()) {
        *a += o;
    }
}
