//! Candidate value estimation. Sequences are unrolled through the model in
//! fixed-width row chunks, and the chunk layout never depends on the worker
//! thread count, so parallel evaluation is bitwise identical to the
//! sequential reference.

use std::ops::Range;
use std::sync::OnceLock;

use crate::nncore::Tensor;

use super::PlannerConfig;

/// Row width of one evaluation chunk. Every batched model call sees the
/// same row grouping regardless of how chunks are assigned to threads.
pub const EVAL_CHUNK: usize = 64;

/// One model step over a batch of latent rows.
#[derive(Debug, Clone)]
pub struct SearchStep {
    pub z_next: Tensor,
    /// Decoded scalar reward per row.
    pub rewards: Vec<f64>,
    /// Termination probability per row, in `[0, 1]`.
    pub terminal_probs: Vec<f64>,
}

/// Everything the planner needs from a frozen agent snapshot: encode
/// observations, step the latent model, query the policy head, and read the
/// value ensemble. Implementations must not mutate shared state, since
/// candidate evaluation may run on several threads at once.
pub trait SearchModel: Sync {
    fn latent_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Encode a batch of observation rows into latent rows.
    fn encode(&self, obs: &Tensor) -> Tensor;
    /// Predict one model step for each latent-action row pair.
    fn predict(&self, z: &Tensor, actions: &Tensor) -> SearchStep;
    /// Policy-head action for each latent row.
    fn policy(&self, z: &Tensor) -> Tensor;
    /// Action values per ensemble member; the outer index is the member.
    fn ensemble_values(&self, z: &Tensor, actions: &Tensor) -> Vec<Vec<f64>>;
}

static PLANNER_THREADS: OnceLock<usize> = OnceLock::new();

/// Worker threads used for candidate evaluation, read once per process from
/// the `MRSQ_THREADS` environment variable. Defaults to 1; values that do
/// not parse to a positive integer fall back to 1.
pub fn planner_threads() -> usize {
    *PLANNER_THREADS.get_or_init(|| {
        std::env::var("MRSQ_THREADS")
            .ok()
            .and_then(|raw| raw.trim().parse::<usize>().ok())
            .filter(|&threads| threads >= 1)
            .unwrap_or(1)
    })
}

pub(crate) fn tile_row(row: &[f64], count: usize) -> Tensor {
    let mut tiled = Tensor::zeros(&[count, row.len()]);
    for r in 0..count {
        tiled.row_mut(r).copy_from_slice(row);
    }
    tiled
}

/// Estimated return of each candidate action sequence: decoded rewards
/// accumulated with the discount while a termination mask is alive, plus
/// the masked terminal bootstrap at the final latent under the policy
/// head's action. `actions` is time-major, one `[candidates, action_dim]`
/// tensor per step; an empty slice scores the bootstrap alone. `z0` holds
/// either one shared start latent or one row per candidate.
pub fn estimate_value(
    model: &dyn SearchModel,
    z0: &Tensor,
    actions: &[Tensor],
    config: &PlannerConfig,
) -> Vec<f64> {
    estimate_value_with_threads(model, z0, actions, config, planner_threads())
}

pub fn estimate_value_with_threads(
    model: &dyn SearchModel,
    z0: &Tensor,
    actions: &[Tensor],
    config: &PlannerConfig,
    threads: usize,
) -> Vec<f64> {
    let n = actions.first().map(|step| step.rows()).unwrap_or(z0.rows());
    assert!(n >= 1, "need at least one candidate");
    assert_eq!(z0.cols(), model.latent_dim(), "start latent width mismatch");
    assert!(
        z0.rows() == 1 || z0.rows() == n,
        "start latent must hold one row or one row per candidate"
    );
    for step in actions {
        assert_eq!(step.rows(), n, "each step must cover every candidate");
        assert_eq!(step.cols(), model.action_dim(), "action width mismatch");
    }

    let mut values = vec![0.0; n];
    let ranges: Vec<Range<usize>> = (0..n)
        .step_by(EVAL_CHUNK)
        .map(|start| start..(start + EVAL_CHUNK).min(n))
        .collect();

    let workers = threads.max(1).min(ranges.len());
    if workers <= 1 {
        for (range, out) in ranges.into_iter().zip(values.chunks_mut(EVAL_CHUNK)) {
            eval_chunk(model, z0, actions, range, config, out);
        }
    } else {
        let mut buckets: Vec<Vec<(Range<usize>, &mut [f64])>> =
            (0..workers).map(|_| Vec::new()).collect();
        for (i, (range, out)) in
            ranges.into_iter().zip(values.chunks_mut(EVAL_CHUNK)).enumerate()
        {
            buckets[i % workers].push((range, out));
        }
        std::thread::scope(|scope| {
            for bucket in buckets {
                scope.spawn(move || {
                    for (range, out) in bucket {
                        eval_chunk(model, z0, actions, range, config, out);
                    }
                });
            }
        });
    }
    values
}

fn eval_chunk(
    model: &dyn SearchModel,
    z0: &Tensor,
    actions: &[Tensor],
    range: Range<usize>,
    config: &PlannerConfig,
    out: &mut [f64],
) {
    let rows = range.len();
    let broadcast = z0.rows() == 1;
    let mut z = Tensor::zeros(&[rows, z0.cols()]);
    for (i, r) in range.clone().enumerate() {
        let src = if broadcast { z0.row(0) } else { z0.row(r) };
        z.row_mut(i).copy_from_slice(src);
    }

    let mut returns = vec![0.0; rows];
    let mut alive = vec![1.0; rows];
    let mut discount = 1.0;
    for step in actions {
        let mut a = Tensor::zeros(&[rows, step.cols()]);
        for (i, r) in range.clone().enumerate() {
            a.row_mut(i).copy_from_slice(step.row(r));
        }
        let predicted = model.predict(&z, &a);
        debug_assert_eq!(predicted.rewards.len(), rows);
        debug_assert_eq!(predicted.terminal_probs.len(), rows);
        for i in 0..rows {
            returns[i] += discount * alive[i] * predicted.rewards[i];
            alive[i] *= 1.0 - predicted.terminal_probs[i].round();
        }
        discount *= config.gamma;
        z = predicted.z_next;
    }

    let tail_actions = model.policy(&z);
    let members = model.ensemble_values(&z, &tail_actions);
    assert!(!members.is_empty(), "value ensemble must have at least one member");
    for i in 0..rows {
        let tail = if config.min_in_mpc {
            members.iter().map(|m| m[i]).fold(f64::INFINITY, f64::min)
        } else {
            members.iter().map(|m| m[i]).sum::<f64>() / members.len() as f64
        };
        out[i] = returns[i] + discount * alive[i] * tail;
    }
}

#[cfg(test)]
mod tests {
    use super::super::stubs::StubModel;
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn config(gamma: f64, min_in_mpc: bool) -> PlannerConfig {
        PlannerConfig { gamma, min_in_mpc, ..PlannerConfig::default() }
    }

    fn single_step_actions(n: usize, dim: usize, fill: f64) -> Vec<Tensor> {
        vec![Tensor::from_vec(&[n, dim], vec![fill; n * dim])]
    }

    #[test]
    fn one_step_reward_with_zero_tail_is_exactly_one() {
        let model = StubModel::constant(2, 2).with_reward(|_, _| 1.0);
        let z0 = Tensor::from_row(&[0.0, 0.0]);
        let values =
            estimate_value(&model, &z0, &single_step_actions(1, 2, 0.5), &config(0.99, true));
        assert_eq!(values, vec![1.0]);
    }

    #[test]
    fn termination_masks_later_rewards_and_the_bootstrap() {
        let model = StubModel::constant(2, 2)
            .with_reward(|_, _| 1.0)
            .with_terminal(|_, _| 1.0)
            .with_members(vec![Box::new(|_, _| 5.0)]);
        let z0 = Tensor::from_row(&[0.0, 0.0]);
        let actions: Vec<Tensor> =
            (0..3).map(|_| Tensor::from_vec(&[1, 2], vec![0.1, 0.1])).collect();
        let values = estimate_value(&model, &z0, &actions, &config(0.99, true));
        assert_eq!(values, vec![1.0]);
    }

    #[test]
    fn terminal_probability_is_rounded_to_a_hard_mask() {
        let mk = |prob: f64| {
            StubModel::constant(1, 1)
                .with_reward(|_, _| 1.0)
                .with_terminal(move |_, _| prob)
        };
        let z0 = Tensor::from_row(&[0.0]);
        let actions: Vec<Tensor> =
            (0..2).map(|_| Tensor::from_vec(&[1, 1], vec![0.0])).collect();
        let surviving = estimate_value(&mk(0.49), &z0, &actions, &config(1.0, true));
        assert_eq!(surviving, vec![2.0]);
        let cut = estimate_value(&mk(0.5), &z0, &actions, &config(1.0, true));
        assert_eq!(cut, vec![1.0]);
    }

    #[test]
    fn discount_applies_per_step() {
        let model = StubModel::constant(1, 1).with_reward(|_, _| 1.0);
        let z0 = Tensor::from_row(&[0.0]);
        let actions: Vec<Tensor> =
            (0..3).map(|_| Tensor::from_vec(&[1, 1], vec![0.0])).collect();
        let values = estimate_value(&model, &z0, &actions, &config(0.9, true));
        assert_relative_eq!(values[0], 1.0 + 0.9 + 0.81, max_relative = 1e-15);
    }

    #[test]
    fn empty_sequence_degenerates_to_the_policy_action_value() {
        let model = StubModel::constant(1, 1)
            .with_policy(vec![0.25])
            .with_members(vec![Box::new(|z, a| z[0] + 2.0 * a[0])]);
        let z0 = Tensor::from_row(&[3.0]);
        let values = estimate_value(&model, &z0, &[], &config(0.99, true));
        assert_eq!(values, vec![3.5]);
    }

    #[test]
    fn tail_reduction_toggles_between_ensemble_min_and_mean() {
        let members: Vec<_> = vec![
            Box::new(|_: &[f64], _: &[f64]| 2.0) as _,
            Box::new(|_: &[f64], _: &[f64]| 4.0) as _,
        ];
        let model = StubModel::constant(1, 1).with_members(members);
        let z0 = Tensor::from_row(&[0.0]);
        assert_eq!(estimate_value(&model, &z0, &[], &config(0.99, true)), vec![2.0]);
        assert_eq!(estimate_value(&model, &z0, &[], &config(0.99, false)), vec![3.0]);
    }

    #[test]
    fn bootstrap_discount_matches_the_sequence_length() {
        let model = StubModel::constant(1, 1).with_members(vec![Box::new(|_, _| 10.0)]);
        let z0 = Tensor::from_row(&[0.0]);
        let actions: Vec<Tensor> =
            (0..2).map(|_| Tensor::from_vec(&[1, 1], vec![0.0])).collect();
        let values = estimate_value(&model, &z0, &actions, &config(0.9, true));
        assert_relative_eq!(values[0], 0.81 * 10.0, max_relative = 1e-15);
    }

    #[test]
    fn shared_start_latent_matches_per_candidate_rows() {
        let model = StubModel::constant(3, 2)
            .with_reward(|z, a| z[0] + a[0] * a[1])
            .with_members(vec![Box::new(|z, _| z.iter().sum())]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 9;
        let actions: Vec<Tensor> = (0..2)
            .map(|_| {
                Tensor::from_vec(&[n, 2], (0..n * 2).map(|_| rng.gen_range(-1.0..1.0)).collect())
            })
            .collect();
        let start = [0.4, -0.2, 0.1];
        let shared = Tensor::from_row(&start);
        let tiled = tile_row(&start, n);
        let cfg = config(0.95, true);
        let a = estimate_value(&model, &shared, &actions, &cfg);
        let b = estimate_value(&model, &tiled, &actions, &cfg);
        assert_eq!(a, b);
    }

    #[test]
    fn parallel_evaluation_is_bitwise_equal_to_sequential() {
        let model = StubModel::constant(4, 3)
            .with_drift(0.37)
            .with_reward(|z, a| (z[0] * 1.7 - a[1]).sin())
            .with_terminal(|z, _| if z[2] > 0.8 { 1.0 } else { 0.2 })
            .with_members(vec![
                Box::new(|z, a| z.iter().sum::<f64>() * a[0]),
                Box::new(|z, _| -z[1] * z[3]),
            ]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200;
        let actions: Vec<Tensor> = (0..3)
            .map(|_| {
                Tensor::from_vec(&[n, 3], (0..n * 3).map(|_| rng.gen_range(-1.0..1.0)).collect())
            })
            .collect();
        let z0 = Tensor::from_row(&[0.3, -0.1, 0.6, 0.2]);
        let cfg = config(0.99, true);
        let sequential = estimate_value_with_threads(&model, &z0, &actions, &cfg, 1);
        for threads in [2, 4, 7] {
            let parallel = estimate_value_with_threads(&model, &z0, &actions, &cfg, threads);
            let seq_bits: Vec<u64> = sequential.iter().map(|v| v.to_bits()).collect();
            let par_bits: Vec<u64> = parallel.iter().map(|v| v.to_bits()).collect();
            assert_eq!(seq_bits, par_bits, "thread count {threads} changed results");
        }
    }

    #[test]
    fn default_thread_count_is_one_without_the_env_var() {
        assert!(planner_threads() >= 1);
    }
}
