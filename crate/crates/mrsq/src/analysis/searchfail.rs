//! How often undirected search finds the chain's single rewarding action
//! sequence, in closed form and by simulation on the true environment.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{argmax, nchain_step, NChainSpec};
use crate::planner::{mppi_plan, ChainOracle, PlannerConfig, WarmStart};

/// A random-search experiment: `samples` action sequences of length `depth`
/// over `actions` choices per trial, repeated for `trials` trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchFailureQuery {
    /// Number of actions `A`.
    pub actions: usize,
    /// Sequence length `n`; the rewarding state is `n` correct steps away.
    pub depth: usize,
    /// Action sequences per trial `m`.
    pub samples: usize,
    /// Independent trials averaged into the empirical rate.
    pub trials: usize,
    /// Draw sequences without replacement instead of independently, so
    /// `samples >= actions^depth` guarantees coverage.
    #[serde(default)]
    pub exhaustive: bool,
}

/// Probability that at least one of `samples` uniformly random action
/// sequences of length `depth` is the single rewarding one among
/// `actions^depth`: `1 - (1 - A^-n)^m`, evaluated in log space so the
/// near-zero and near-one tails keep full precision.
pub fn search_success_probability(actions: usize, depth: usize, samples: usize) -> f64 {
    assert!(actions >= 1, "need at least one action");
    assert!(samples >= 1, "need at least one sample");
    let needle_probability = (-(depth as f64) * (actions as f64).ln()).exp();
    let log_miss_all = samples as f64 * f64::ln_1p(-needle_probability);
    -f64::exp_m1(log_miss_all)
}

/// Empirical success rate of random search on the true chain: per trial,
/// roll `samples` random sequences and count the trial a success if any
/// earns positive return. In exhaustive mode, sequences are a
/// without-replacement draw from the full sequence space.
pub fn simulate_random_search(query: &SearchFailureQuery, rng: &mut ChaCha8Rng) -> f64 {
    assert!(query.actions >= 1);
    assert!(query.depth >= 1, "the rewarding state must be reachable");
    assert!(query.samples >= 1);
    assert!(query.trials >= 1);
    let spec = NChainSpec { states: query.depth + 1, actions: query.actions };

    let mut successes = 0usize;
    for _ in 0..query.trials {
        let found = if query.exhaustive {
            roll_without_replacement(&spec, query, rng)
        } else {
            roll_independent(&spec, query, rng)
        };
        if found {
            successes += 1;
        }
    }
    successes as f64 / query.trials as f64
}

/// Fraction of independent planning calls from the chain head whose search
/// surfaces at least one candidate sequence with positive value. On this
/// chain a candidate scores above zero only when every action in it
/// advances, so with the horizon set to the chain depth this measures
/// exactly the event behind [`search_success_probability`], but for the
/// full planner: refinement iterations, elite refitting, and any
/// policy-seeded candidates all participate.
pub fn search_call_success(
    spec: NChainSpec,
    config: &PlannerConfig,
    calls: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    assert!(calls >= 1);
    let oracle = ChainOracle::new(spec, config.gamma);
    let mut obs = vec![0.0; spec.obs_dim()];
    obs[0] = 1.0;
    let mut successes = 0usize;
    for _ in 0..calls {
        let mut warm = WarmStart::new();
        let outcome = mppi_plan(&oracle, &obs, &mut warm, config, rng)
            .expect("closed-form chain values are finite");
        if outcome.stats.elite_max.iter().any(|&best| best > 0.0) {
            successes += 1;
        }
    }
    successes as f64 / calls as f64
}

/// Fraction of full chain episodes that reach the goal when every action
/// comes from sampling-based search over the exact model with closed-form
/// values. Each episode starts at the chain head, replans every step with
/// a warm start, and gives up as soon as a wrong action drops it into the
/// absorbing state, so episodes end after at most `states - 1` steps.
/// Replanning with the value bootstrap is far more forgiving than the
/// single-call probe above: the search only ever needs to stay on the
/// chain for one short horizon at a time.
pub fn replanned_episode_success(
    spec: NChainSpec,
    config: &PlannerConfig,
    episodes: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    assert!(episodes >= 1);
    let oracle = ChainOracle::new(spec, config.gamma);
    let absorb = spec.absorb();
    let mut successes = 0usize;
    for _ in 0..episodes {
        let mut state = 0usize;
        let mut warm = WarmStart::new();
        loop {
            let mut obs = vec![0.0; spec.obs_dim()];
            obs[state] = 1.0;
            let outcome = mppi_plan(&oracle, &obs, &mut warm, config, rng)
                .expect("closed-form chain values are finite");
            let step = nchain_step(&spec, state, argmax(&outcome.action));
            if step.reward > 0.0 {
                successes += 1;
                break;
            }
            state = step.next_state;
            if state == absorb {
                break;
            }
        }
    }
    successes as f64 / episodes as f64
}

fn sequence_earns_reward(
    spec: &NChainSpec,
    actions: impl Iterator<Item = usize>,
) -> bool {
    let mut state = 0usize;
    for action in actions {
        let outcome = nchain_step(spec, state, action);
        if outcome.reward > 0.0 {
            return true;
        }
        if outcome.terminated {
            return false;
        }
        state = outcome.next_state;
    }
    false
}

fn roll_independent(
    spec: &NChainSpec,
    query: &SearchFailureQuery,
    rng: &mut ChaCha8Rng,
) -> bool {
    for _ in 0..query.samples {
        let actions = (0..query.depth).map(|_| rng.gen_range(0..query.actions));
        if sequence_earns_reward(spec, actions) {
            return true;
        }
    }
    false
}

fn roll_without_replacement(
    spec: &NChainSpec,
    query: &SearchFailureQuery,
    rng: &mut ChaCha8Rng,
) -> bool {
    let space: usize = query
        .actions
        .checked_pow(query.depth as u32)
        .expect("sequence space too large to enumerate");
    let mut order: Vec<usize> = (0..space).collect();
    for i in (1..space).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    for &index in order.iter().take(query.samples.min(space)) {
        let mut remaining = index;
        let actions = (0..query.depth).map(|_| {
            let action = remaining % query.actions;
            remaining /= query.actions;
            action
        });
        if sequence_earns_reward(spec, actions) {
            return true;
        }
    }
    false
}
