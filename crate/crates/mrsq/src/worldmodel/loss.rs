//! Multi-step model objective: unroll the model through stored actions and
//! regress each step's predictions against stop-gradient encodings, binned
//! reward targets, and termination flags, with per-step masking.

use thiserror::Error;

use crate::nncore::{bce_with_logits, softmax_cross_entropy, ParameterStore, Tensor};

use super::{SegmentBatch, WorldModel};

#[derive(Debug, Error)]
#[error("model loss is not finite")]
pub struct NonFiniteLoss;

/// Loss breakdown from one model update. The per-term fields are raw
/// (unweighted) batch means summed over the horizon; `total` applies the
/// configured weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelLossOutput {
    pub total: f64,
    pub dynamics: f64,
    pub reward: f64,
    pub terminal: f64,
    pub preactivation: f64,
}

impl WorldModel {
    /// Encodes the target observations of every unroll step without
    /// retaining gradients; the dynamics loss treats these as constants.
    pub fn dynamics_targets(&self, store: &ParameterStore, batch: &SegmentBatch) -> Vec<Tensor> {
        (1..=batch.horizon()).map(|j| self.encode(store, &batch.obs[j]).z().clone()).collect()
    }

    /// Full model update: forward unroll, loss, and gradient accumulation
    /// into the store. Gradients are only written when the loss is finite.
    pub fn model_loss(
        &self,
        store: &mut ParameterStore,
        batch: &SegmentBatch,
    ) -> Result<ModelLossOutput, NonFiniteLoss> {
        let targets = self.dynamics_targets(store, batch);
        self.model_loss_with_targets(store, batch, &targets)
    }

    /// As [`WorldModel::model_loss`] but against caller-supplied dynamics
    /// targets, which lets tests hold the targets fixed while probing
    /// gradients.
    pub fn model_loss_with_targets(
        &self,
        store: &mut ParameterStore,
        batch: &SegmentBatch,
        targets: &[Tensor],
    ) -> Result<ModelLossOutput, NonFiniteLoss> {
        batch.validate(self.config());
        let h = batch.horizon();
        let b = batch.batch_size();
        let zs_dim = self.config().zs_dim;
        let bins = self.config().reward_bins;
        let w = self.config().weights;
        assert_eq!(targets.len(), h, "need one dynamics target per step");
        assert_eq!(w.horizon, h, "segment horizon must match the configured unroll");

        let encoding = self.encode(store, &batch.obs[0]);
        let predictions = self.rollout(store, encoding.z(), &batch.actions);

        let mut dynamics_term = 0.0;
        let mut reward_term = 0.0;
        let mut terminal_term = 0.0;
        let mut reward_grads = Vec::with_capacity(h);
        let mut terminal_grads = Vec::with_capacity(h);
        for j in 0..h {
            let prediction = &predictions[j];
            let mut d_reward = Tensor::zeros(&[b, bins]);
            let mut d_terminal = Tensor::zeros(&[b, 1]);
            let mut target_probs = vec![0.0; bins];
            for s in 0..b {
                let mask = batch.masks[j][s];
                if mask == 0.0 {
                    continue;
                }
                let diff_sq: f64 = prediction
                    .z_next()
                    .row(s)
                    .iter()
                    .zip(targets[j].row(s))
                    .map(|(p, t)| (p - t) * (p - t))
                    .sum();
                dynamics_term += mask * diff_sq / zs_dim as f64;

                self.two_hot().encode_into(batch.rewards[j][s], &mut target_probs);
                let (ce, d_logits) =
                    softmax_cross_entropy(prediction.reward_logits().row(s), &target_probs);
                reward_term += mask * ce;
                for (slot, g) in d_reward.row_mut(s).iter_mut().zip(&d_logits) {
                    *slot = mask * g;
                }

                let logit = prediction.terminal_logits().row(s)[0];
                let (bce, d_logit) = bce_with_logits(logit, batch.terminals[j][s]);
                terminal_term += mask * bce;
                d_terminal.row_mut(s)[0] = mask * d_logit;
            }
            reward_grads.push(d_reward);
            terminal_grads.push(d_terminal);
        }
        let scale = 1.0 / b as f64;
        dynamics_term *= scale;
        reward_term *= scale;
        terminal_term *= scale;

        let pre = encoding.preactivation();
        let preactivation_term =
            pre.values().iter().map(|v| v * v).sum::<f64>() / pre.len() as f64;

        let total = w.dynamics * dynamics_term
            + w.reward * reward_term
            + w.terminal * terminal_term
            + w.preactivation * preactivation_term;
        if !total.is_finite() {
            return Err(NonFiniteLoss);
        }

        let mut d_chain = Tensor::zeros(&[b, zs_dim]);
        for j in (0..h).rev() {
            let prediction = &predictions[j];
            for s in 0..b {
                let mask = batch.masks[j][s];
                if mask == 0.0 {
                    continue;
                }
                let coeff = w.dynamics * mask * 2.0 / (zs_dim as f64 * b as f64);
                let row = d_chain.row_mut(s);
                for (i, (p, t)) in
                    prediction.z_next().row(s).iter().zip(targets[j].row(s)).enumerate()
                {
                    row[i] += coeff * (p - t);
                }
            }
            let mut d_reward = reward_grads[j].clone();
            for v in d_reward.values_mut() {
                *v *= w.reward * scale;
            }
            let mut d_terminal = terminal_grads[j].clone();
            for v in d_terminal.values_mut() {
                *v *= w.terminal * scale;
            }
            d_chain = self
                .predict_backward(
                    store,
                    prediction,
                    super::PredictionGrads {
                        z_next: Some(&d_chain),
                        reward_logits: Some(&d_reward),
                        terminal_logits: Some(&d_terminal),
                        zsa: None,
                    },
                )
                .zs;
        }
        let mut d_pre = pre.clone();
        let pre_coeff = w.preactivation * 2.0 / pre.len() as f64;
        for v in d_pre.values_mut() {
            *v *= pre_coeff;
        }
        self.encode_backward(store, &encoding, &d_chain, Some(&d_pre));

        Ok(ModelLossOutput {
            total,
            dynamics: dynamics_term,
            reward: reward_term,
            terminal: terminal_term,
            preactivation: preactivation_term,
        })
    }

}
