//! Model accuracy probes on recorded transition segments: discounted
//! embedding error over a short unroll, and the absolute gap between the
//! planner's value estimate and the ground-truth trajectory value.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{EnvState, Environment};
use crate::nncore::Tensor;
use crate::planner::{estimate_value, PlannerConfig, SearchModel};

use super::valueerror::ValueAgent;
use super::{AnalysisError, DiagnosticConfig};

/// Steps of each segment compared against the model's unroll.
pub const UNROLL_STEPS: usize = 3;

/// A recorded run of consecutive real transitions: observations
/// `s_0..s_J`, the actions and rewards between them, and a simulator
/// snapshot at the final observation so rollouts can continue from there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSegment {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub end_state: EnvState,
    /// The final recorded transition ended the episode.
    pub terminated: bool,
}

impl ProbeSegment {
    pub fn steps(&self) -> usize {
        self.actions.len()
    }

    fn validate(&self) {
        assert_eq!(self.observations.len(), self.actions.len() + 1);
        assert_eq!(self.rewards.len(), self.actions.len());
    }
}

/// Aggregate of a per-segment diagnostic; segments shorter than the unroll
/// are skipped and counted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentErrors {
    /// Mean error over the segments actually used; zero when none were.
    pub mean_error: f64,
    pub used: usize,
    pub skipped: usize,
}

fn aggregate(total: f64, used: usize, skipped: usize) -> SegmentErrors {
    SegmentErrors {
        mean_error: if used > 0 { total / used as f64 } else { 0.0 },
        used,
        skipped,
    }
}

/// Walk the environment with the agent's acting policy and record `count`
/// back-to-back segments of up to `steps` transitions each. A segment that
/// hits the end of an episode stops short and is marked terminated when
/// the end was a true termination; the walk then starts a fresh episode.
pub fn collect_segments(
    agent: &mut dyn ValueAgent,
    env: &mut dyn Environment,
    count: usize,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ProbeSegment>, AnalysisError> {
    if !env.supports_snapshots() {
        return Err(AnalysisError::SnapshotsUnsupported);
    }
    assert!(count >= 1);
    assert!(steps >= 1);
    let mut segments = Vec::with_capacity(count);
    let mut obs = env.reset(rng);
    agent.begin_episode();
    while segments.len() < count {
        let mut segment = ProbeSegment {
            observations: vec![obs.clone()],
            actions: Vec::new(),
            rewards: Vec::new(),
            end_state: env.state(),
            terminated: false,
        };
        for _ in 0..steps {
            let action = agent.act(&obs, rng);
            let outcome = env.step(&action).expect("acting policy produced a finite action");
            segment.observations.push(outcome.obs.clone());
            segment.actions.push(action);
            segment.rewards.push(outcome.reward);
            segment.terminated = outcome.terminated;
            if outcome.terminated || outcome.truncated {
                break;
            }
            obs = outcome.obs;
        }
        segment.end_state = env.state();
        if segment.terminated || segment.steps() < steps {
            obs = env.reset(rng);
            agent.begin_episode();
        }
        segments.push(segment);
    }
    Ok(segments)
}

/// Discounted embedding error of the model unroll: predicted latents are
/// compared against encodings of the real next observations, with the
/// per-step mean squared error discounted starting at the first step.
pub fn dynamics_error(
    model: &dyn SearchModel,
    segments: &[ProbeSegment],
    cfg: &DiagnosticConfig,
) -> SegmentErrors {
    let mut total = 0.0;
    let mut used = 0usize;
    let mut skipped = 0usize;
    for segment in segments {
        segment.validate();
        if segment.steps() < UNROLL_STEPS {
            skipped += 1;
            continue;
        }
        let mut z = model.encode(&Tensor::from_row(&segment.observations[0]));
        let mut discount = 1.0;
        let mut error = 0.0;
        for j in 1..=UNROLL_STEPS {
            let action = Tensor::from_row(&segment.actions[j - 1]);
            z = model.predict(&z, &action).z_next;
            let target = model.encode(&Tensor::from_row(&segment.observations[j]));
            discount *= cfg.gamma;
            let mut mse = 0.0;
            for (predicted, actual) in z.row(0).iter().zip(target.row(0)) {
                let diff = predicted - actual;
                mse += diff * diff;
            }
            error += discount * mse / z.cols() as f64;
        }
        total += error;
        used += 1;
    }
    aggregate(total, used, skipped)
}

/// Absolute gap between the planner's value estimate for the stored action
/// sequence and the ground-truth trajectory value: the recorded discounted
/// rewards plus a discounted Monte-Carlo continuation from the segment's
/// final state (zero when the segment ended the episode).
pub fn unroll_error(
    model: &dyn SearchModel,
    planner_config: &PlannerConfig,
    agent: &mut dyn ValueAgent,
    env: &mut dyn Environment,
    segments: &[ProbeSegment],
    cfg: &DiagnosticConfig,
    rng: &mut ChaCha8Rng,
) -> Result<SegmentErrors, AnalysisError> {
    if !env.supports_snapshots() {
        return Err(AnalysisError::SnapshotsUnsupported);
    }
    let mut total = 0.0;
    let mut used = 0usize;
    let mut skipped = 0usize;
    for segment in segments {
        segment.validate();
        if segment.steps() < UNROLL_STEPS {
            skipped += 1;
            continue;
        }
        let z0 = model.encode(&Tensor::from_row(&segment.observations[0]));
        let actions: Vec<Tensor> = segment.actions[..UNROLL_STEPS]
            .iter()
            .map(|a| Tensor::from_row(a))
            .collect();
        let estimate = estimate_value(model, &z0, &actions, planner_config)[0];

        let mut truth = 0.0;
        let mut discount = 1.0;
        for j in 0..UNROLL_STEPS {
            truth += discount * segment.rewards[j];
            discount *= cfg.gamma;
        }
        if !segment.terminated {
            let mut rollout_rng = ChaCha8Rng::seed_from_u64(rng.gen::<u64>());
            let mut continuation = 0.0;
            for _ in 0..cfg.rollouts_per_probe {
                continuation += continuation_return(
                    agent,
                    env,
                    &segment.end_state,
                    cfg.gamma,
                    &mut rollout_rng,
                );
            }
            truth += discount * (continuation / cfg.rollouts_per_probe as f64);
        }
        total += (estimate - truth).abs();
        used += 1;
    }
    Ok(aggregate(total, used, skipped))
}

fn continuation_return(
    agent: &mut dyn ValueAgent,
    env: &mut dyn Environment,
    state: &EnvState,
    gamma: f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    env.restore(state);
    agent.begin_episode();
    let mut obs = env.current_obs();
    let mut ret = 0.0;
    let mut discount = 1.0;
    loop {
        let action = agent.act(&obs, rng);
        let outcome = env.step(&action).expect("acting policy produced a non-finite action");
        ret += discount * outcome.reward;
        discount *= gamma;
        if outcome.terminated || outcome.truncated {
            return ret;
        }
        obs = outcome.obs;
    }
}
