//! TD learning: n-step targets with smoothed target-policy actions and an
//! ensemble-minimum bootstrap, Huber value regression feeding replay
//! priorities, and deterministic policy improvement against the ensemble
//! minimum.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::nncore::{huber, ParameterStore, Tensor};
use crate::worldmodel::{PredictionGrads, WorldModel};

use super::networks::{PolicyNet, QEnsemble};
use super::replay::{LapReplay, ValueSegmentRow};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TdConfig {
    pub gamma: f64,
    /// Multi-step return horizon; segments shorter than this bootstrap
    /// early.
    pub horizon: usize,
    pub target_noise_std: f64,
    pub target_noise_clip: f64,
    /// Environment steps between hard target refreshes.
    pub target_update_period: usize,
    pub huber_delta: f64,
    /// Ablation: bootstrap from the minimum of two random members instead
    /// of the whole ensemble.
    pub pair_min_targets: bool,
}

impl Default for TdConfig {
    fn default() -> Self {
        TdConfig {
            gamma: 0.99,
            horizon: 3,
            target_noise_std: 0.2,
            target_noise_clip: 0.3,
            target_update_period: 250,
            huber_delta: 1.0,
            pair_min_targets: false,
        }
    }
}

/// n-step return target: discounted sum of the stored rewards plus, unless
/// the segment ended in termination, a discounted bootstrap.
pub fn td_target(rewards: &[f64], terminated: bool, gamma: f64, bootstrap_value: f64) -> f64 {
    let mut target = 0.0;
    let mut g = 1.0;
    for r in rewards {
        target += g * r;
        g *= gamma;
    }
    if !terminated {
        target += g * bootstrap_value;
    }
    target
}

pub struct ValueUpdateOutput {
    /// Sum over members of the batch-mean Huber loss.
    pub loss: f64,
    pub td_targets: Vec<f64>,
    /// Per-sample maximum absolute TD error across members, before the
    /// replay floor.
    pub priorities: Vec<f64>,
}

fn gather_rows(rows: impl Iterator<Item = Vec<f64>>, cols: usize) -> Tensor {
    let mut values = Vec::new();
    let mut count = 0;
    for row in rows {
        assert_eq!(row.len(), cols);
        values.extend_from_slice(&row);
        count += 1;
    }
    Tensor::from_vec(&[count, cols], values)
}

/// Smoothed target-policy bootstrap values for a batch of segments:
/// `min_i Q_i^target(g(z_s, clip(pi(z_s) + noise)))`.
pub fn bootstrap_values(
    store: &ParameterStore,
    model: &WorldModel,
    ensemble: &QEnsemble,
    policy: &PolicyNet,
    segments: &[ValueSegmentRow],
    cfg: &TdConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let obs_dim = model.config().obs_dim;
    let obs = gather_rows(segments.iter().map(|s| s.bootstrap_obs.clone()), obs_dim);
    let zs = model.encode(store, &obs);
    let mut actions = policy.act(store, zs.z());
    let noise = Normal::new(0.0, cfg.target_noise_std).expect("valid noise std");
    for v in actions.values_mut() {
        let eps = noise
            .sample(rng)
            .clamp(-cfg.target_noise_clip, cfg.target_noise_clip);
        *v = (*v + eps).clamp(-1.0, 1.0);
    }
    let prediction = model.predict(store, zs.z(), &actions);
    if cfg.pair_min_targets && ensemble.size() > 1 {
        let first = rng.gen_range(0..ensemble.size());
        let mut second = rng.gen_range(0..ensemble.size() - 1);
        if second >= first {
            second += 1;
        }
        ensemble.subset_min_q(store, prediction.zsa(), &[first, second], true)
    } else {
        ensemble.min_q(store, prediction.zsa(), true)
    }
}

/// Regresses every ensemble member at the stored state-action embeddings
/// onto shared targets, accumulating gradients into the online value
/// parameters only. Returns the loss and per-sample TD magnitudes.
pub fn value_loss(
    store: &mut ParameterStore,
    ensemble: &QEnsemble,
    zsa: &Tensor,
    targets: &[f64],
    huber_delta: f64,
) -> (f64, Vec<f64>) {
    let b = zsa.rows();
    assert_eq!(targets.len(), b);
    let mut loss = 0.0;
    let mut max_abs_td = vec![0.0f64; b];
    for i in 0..ensemble.size() {
        let cache = ensemble.forward_member(store, i, zsa, false);
        let mut d_out = Tensor::zeros(&[b, 1]);
        for r in 0..b {
            let td = cache.output.row(r)[0] - targets[r];
            let (l, dl) = huber(td, huber_delta);
            loss += l / b as f64;
            d_out.row_mut(r)[0] = dl / b as f64;
            max_abs_td[r] = max_abs_td[r].max(td.abs());
        }
        ensemble.member(i, false).backward(store, &cache, &d_out);
    }
    (loss, max_abs_td)
}

/// One full value update on sampled replay indices. The state-action
/// embedding is computed by the frozen model and treated as a fixed
/// input; gradients reach only the online value networks.
pub fn value_update(
    store: &mut ParameterStore,
    model: &WorldModel,
    ensemble: &QEnsemble,
    policy: &PolicyNet,
    replay: &LapReplay,
    indices: &[usize],
    cfg: &TdConfig,
    rng: &mut ChaCha8Rng,
) -> ValueUpdateOutput {
    let segments = replay.value_segments(indices, cfg.horizon);
    let bootstraps = bootstrap_values(store, model, ensemble, policy, &segments, cfg, rng);
    let td_targets: Vec<f64> = segments
        .iter()
        .zip(&bootstraps)
        .map(|(seg, bv)| td_target(&seg.rewards, seg.terminated, cfg.gamma, *bv))
        .collect();

    let obs_dim = model.config().obs_dim;
    let action_dim = model.config().action_dim;
    let obs = gather_rows(
        indices.iter().map(|&i| replay.transition(i).obs.clone()),
        obs_dim,
    );
    let actions = gather_rows(
        indices.iter().map(|&i| replay.transition(i).action.clone()),
        action_dim,
    );
    let zs = model.encode(store, &obs);
    let prediction = model.predict(store, zs.z(), &actions);
    let (loss, priorities) =
        value_loss(store, ensemble, prediction.zsa(), &td_targets, cfg.huber_delta);
    ValueUpdateOutput { loss, td_targets, priorities }
}

/// Deterministic policy improvement: descend the negated ensemble minimum
/// at the policy's own action. Gradients flow through the state-action
/// trunk into the policy parameters; the encoder input is constant and no
/// other parameter group is meant to be stepped from this update.
pub fn policy_update(
    store: &mut ParameterStore,
    model: &WorldModel,
    ensemble: &QEnsemble,
    policy: &PolicyNet,
    obs: &Tensor,
) -> f64 {
    let b = obs.rows();
    let zs = model.encode(store, obs);
    let policy_cache = policy.forward(store, zs.z());
    let prediction = model.predict(store, zs.z(), &policy_cache.output);
    let caches: Vec<_> = (0..ensemble.size())
        .map(|i| ensemble.forward_member(store, i, prediction.zsa(), false))
        .collect();

    let mut loss = 0.0;
    let mut argmin = vec![0usize; b];
    for r in 0..b {
        let mut best = f64::INFINITY;
        for (i, cache) in caches.iter().enumerate() {
            let q = cache.output.row(r)[0];
            if q < best {
                best = q;
                argmin[r] = i;
            }
        }
        loss -= best / b as f64;
    }

    let zsa_dim = model.config().zsa_dim;
    let mut d_zsa = Tensor::zeros(&[b, zsa_dim]);
    for (i, cache) in caches.iter().enumerate() {
        let mut d_out = Tensor::zeros(&[b, 1]);
        let mut touched = false;
        for r in 0..b {
            if argmin[r] == i {
                d_out.row_mut(r)[0] = -1.0 / b as f64;
                touched = true;
            }
        }
        if !touched {
            continue;
        }
        let d_input = ensemble.member(i, false).backward(store, cache, &d_out);
        for (acc, d) in d_zsa.values_mut().iter_mut().zip(d_input.values()) {
            *acc += d;
        }
    }
    let input_grads = model.predict_backward(
        store,
        &prediction,
        PredictionGrads { zsa: Some(&d_zsa), ..Default::default() },
    );
    policy.backward(store, &policy_cache, &input_grads.action);
    loss
}
