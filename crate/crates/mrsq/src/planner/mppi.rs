//! Iterative refinement of the candidate distribution and the final action
//! draw. Each iteration samples Gaussian candidates around the current
//! mean, concatenates policy-seeded candidates, keeps the top elites by
//! estimated value, and refits the mean and std from score-weighted
//! elites. The executed action is the first step of an elite drawn in
//! proportion to its score.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nncore::Tensor;

use super::search::{estimate_value, tile_row, SearchModel};
use super::{PlannerConfig, WarmStart};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("planner config invalid: {0}")]
    InvalidConfig(String),
    #[error("every candidate scored non-finite")]
    AllCandidatesNonFinite,
}

/// Per-call search telemetry, one entry per refinement iteration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanStats {
    /// Mean elite value per iteration.
    pub elite_mean: Vec<f64>,
    /// Best elite value per iteration.
    pub elite_max: Vec<f64>,
    /// Sampling std per iteration after the refit, averaged over steps and
    /// action dimensions.
    pub sigma_mean: Vec<f64>,
    /// Candidates discarded per iteration for scoring non-finite.
    pub discarded: Vec<usize>,
    /// Value of the elite whose first action was executed. Absent when
    /// refinement was skipped.
    pub chosen_value: Option<f64>,
}

/// The action to execute and the telemetry behind it.
#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub action: Vec<f64>,
    pub stats: PlanStats,
}

/// Elite scores and the refitted sampling distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Refit {
    /// Normalized elite scores; they sum to one.
    pub scores: Vec<f64>,
    /// Score-weighted mean action per step.
    pub mean: Vec<Vec<f64>>,
    /// Score-weighted std per step, clamped into the configured band.
    pub sigma: Vec<Vec<f64>>,
}

/// Convert elite values into normalized scores and refit the per-step
/// Gaussian. Scores are `exp(temperature * (value - best))` normalized to
/// sum to one, so the best elite always has positive weight even when
/// others scored negative infinity.
pub fn score_and_refit(
    values: &[f64],
    actions: &[Vec<Vec<f64>>],
    config: &PlannerConfig,
) -> Refit {
    assert!(!values.is_empty(), "need at least one elite");
    assert_eq!(values.len(), actions.len());
    let horizon = actions[0].len();
    let action_dim = actions[0].first().map(|step| step.len()).unwrap_or(0);
    for seq in actions {
        assert_eq!(seq.len(), horizon);
        for step in seq {
            assert_eq!(step.len(), action_dim);
        }
    }

    let best = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut scores: Vec<f64> =
        values.iter().map(|&v| (config.temperature * (v - best)).exp()).collect();
    let total: f64 = scores.iter().sum();
    for s in &mut scores {
        *s /= total;
    }

    let mut mean = vec![vec![0.0; action_dim]; horizon];
    for (seq, &score) in actions.iter().zip(&scores) {
        for t in 0..horizon {
            for d in 0..action_dim {
                mean[t][d] += score * seq[t][d];
            }
        }
    }
    let mut sigma = vec![vec![0.0; action_dim]; horizon];
    for (seq, &score) in actions.iter().zip(&scores) {
        for t in 0..horizon {
            for d in 0..action_dim {
                let diff = seq[t][d] - mean[t][d];
                sigma[t][d] += score * diff * diff;
            }
        }
    }
    for step in &mut sigma {
        for s in step {
            *s = s.sqrt().clamp(config.sigma_min, config.sigma_max);
        }
    }
    Refit { scores, mean, sigma }
}

/// Index drawn from the categorical distribution given by normalized
/// scores, realized as the argmax of log score plus Gumbel noise so the
/// draw consumes exactly one uniform per elite.
fn gumbel_pick(scores: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let mut best = 0usize;
    let mut best_key = f64::NEG_INFINITY;
    for (i, &score) in scores.iter().enumerate() {
        let u: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
        let gumbel = -(-u.ln()).ln();
        let key = score.ln() + gumbel;
        if key > best_key {
            best_key = key;
            best = i;
        }
    }
    best
}

/// Plan one action from the given observation. The random stream is
/// consumed in a fixed order (policy-rollout noise, then each iteration's
/// Gaussian block candidate by candidate, then one uniform per elite for
/// the final draw), so a fixed seed and model snapshot reproduce the same
/// action bit for bit.
pub fn mppi_plan(
    model: &dyn SearchModel,
    obs: &[f64],
    warm: &mut WarmStart,
    config: &PlannerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<PlanOutcome, PlanError> {
    config.validate().map_err(PlanError::InvalidConfig)?;
    let action_dim = model.action_dim();
    let horizon = config.horizon;
    let n = config.candidates;
    let n_policy = config.policy_candidates;
    let z0 = model.encode(&Tensor::from_row(obs));

    let mut policy_actions: Vec<Tensor> = Vec::with_capacity(horizon);
    if n_policy > 0 {
        let mut z = tile_row(z0.row(0), n_policy);
        for _ in 0..horizon {
            let mut a = model.policy(&z);
            for v in a.values_mut() {
                let noise: f64 = rng.sample(StandardNormal);
                *v = (*v + config.policy_noise_std * noise).clamp(-1.0, 1.0);
            }
            let step = model.predict(&z, &a);
            policy_actions.push(a);
            z = step.z_next;
        }
    }

    if config.iterations == 0 {
        let action = if n_policy > 0 {
            policy_actions[0].row(0).to_vec()
        } else {
            let a = model.policy(&z0);
            a.row(0).iter().map(|v| v.clamp(-1.0, 1.0)).collect()
        };
        return Ok(PlanOutcome { action, stats: PlanStats::default() });
    }

    let mut mean = warm.shifted_mean(horizon, action_dim);
    let mut sigma = vec![vec![config.sigma_max; action_dim]; horizon];
    let mut stats = PlanStats::default();
    let mut elite_values: Vec<f64> = Vec::new();
    let mut elite_actions: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut elite_scores: Vec<f64> = Vec::new();

    for _ in 0..config.iterations {
        let mut actions: Vec<Tensor> =
            (0..horizon).map(|_| Tensor::zeros(&[n, action_dim])).collect();
        for (t, step) in policy_actions.iter().enumerate() {
            for c in 0..n_policy {
                actions[t].row_mut(c).copy_from_slice(step.row(c));
            }
        }
        for c in n_policy..n {
            for t in 0..horizon {
                for d in 0..action_dim {
                    let noise: f64 = rng.sample(StandardNormal);
                    actions[t].row_mut(c)[d] =
                        (mean[t][d] + sigma[t][d] * noise).clamp(-1.0, 1.0);
                }
            }
        }

        let mut values = estimate_value(model, &z0, &actions, config);
        let mut discarded = 0usize;
        for v in &mut values {
            if !v.is_finite() {
                *v = f64::NEG_INFINITY;
                discarded += 1;
            }
        }
        if discarded == n {
            return Err(PlanError::AllCandidatesNonFinite);
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap().then(a.cmp(&b)));
        let elites = &order[..config.elites];
        elite_values = elites.iter().map(|&i| values[i]).collect();
        elite_actions = elites
            .iter()
            .map(|&i| (0..horizon).map(|t| actions[t].row(i).to_vec()).collect())
            .collect();

        let refit = score_and_refit(&elite_values, &elite_actions, config);
        mean = refit.mean;
        sigma = refit.sigma;
        elite_scores = refit.scores;

        let k = elite_values.len() as f64;
        stats.elite_mean.push(elite_values.iter().sum::<f64>() / k);
        stats.elite_max.push(elite_values[0]);
        let sigma_count = (horizon * action_dim) as f64;
        stats
            .sigma_mean
            .push(sigma.iter().flatten().sum::<f64>() / sigma_count);
        stats.discarded.push(discarded);
    }

    let chosen = if config.argmax_eval { 0 } else { gumbel_pick(&elite_scores, rng) };
    warm.store(mean);
    stats.chosen_value = Some(elite_values[chosen]);
    let action = elite_actions[chosen][0].clone();
    Ok(PlanOutcome { action, stats })
}
