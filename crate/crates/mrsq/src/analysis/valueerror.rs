//! Percent error between the agent's value estimates and ground-truth
//! discounted returns, measured by resetting the simulator to recorded
//! states and rolling the acting policy forward.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::nchain::ADVANCE_ACTION;
use crate::envs::{argmax, nchain_optimal_q, EnvState, Environment, NChainSpec};

use super::{AnalysisError, DiagnosticConfig};

/// The agent surface the diagnostics need: the action it would execute and
/// its pessimistic value estimate for a state-action pair.
pub trait ValueAgent {
    /// Reset per-episode planning state before a fresh rollout.
    fn begin_episode(&mut self) {}
    /// Action the agent executes at this observation, via whichever acting
    /// path its configuration selects.
    fn act(&mut self, obs: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64>;
    /// Minimum-over-ensemble action-value estimate.
    fn value_estimate(&self, obs: &[f64], action: &[f64]) -> f64;
}

/// Agent with the closed-form chain solution: always advances and reports
/// the exact optimal value.
#[derive(Debug, Clone)]
pub struct OracleChainAgent {
    spec: NChainSpec,
    gamma: f64,
}

impl OracleChainAgent {
    pub fn new(spec: NChainSpec, gamma: f64) -> Self {
        OracleChainAgent { spec, gamma }
    }
}

impl ValueAgent for OracleChainAgent {
    fn act(&mut self, _obs: &[f64], _rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut action = vec![0.0; self.spec.actions];
        action[ADVANCE_ACTION] = 1.0;
        action
    }

    fn value_estimate(&self, obs: &[f64], action: &[f64]) -> f64 {
        nchain_optimal_q(&self.spec, self.gamma, argmax(obs), argmax(action))
    }
}

/// Signed percent error with a floored denominator; overestimation is
/// positive.
pub fn percent_error(estimate: f64, ground_truth: f64, epsilon: f64) -> f64 {
    100.0 * (estimate - ground_truth) / ground_truth.abs().max(epsilon)
}

/// One probe's comparison between the value estimate and the Monte-Carlo
/// ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueProbeError {
    /// Environment step at which the probe was recorded.
    pub step: usize,
    pub value_estimate: f64,
    pub monte_carlo_return: f64,
    pub percent_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueErrorReport {
    pub probes: Vec<ValueProbeError>,
    pub mean_percent: f64,
}

struct Probe {
    step: usize,
    snapshot: EnvState,
    obs: Vec<f64>,
    action: Vec<f64>,
}

/// Walk the environment with the agent's acting policy, recording a
/// state-action probe every `probe_spacing` steps; then for each probe,
/// estimate the ground-truth return as the mean of seeded rollouts that
/// execute the probe action and follow the acting policy to termination or
/// truncation. The percent error compares the agent's estimate against
/// that return.
pub fn value_error_percent(
    agent: &mut dyn ValueAgent,
    env: &mut dyn Environment,
    cfg: &DiagnosticConfig,
    rng: &mut ChaCha8Rng,
) -> Result<ValueErrorReport, AnalysisError> {
    if !env.supports_snapshots() {
        return Err(AnalysisError::SnapshotsUnsupported);
    }
    assert!(cfg.probes >= 1);
    assert!(cfg.probe_spacing >= 1);
    assert!(cfg.rollouts_per_probe >= 1);

    let mut probes: Vec<Probe> = Vec::with_capacity(cfg.probes);
    let mut obs = env.reset(rng);
    agent.begin_episode();
    let mut step = 0usize;
    while probes.len() < cfg.probes {
        let action = agent.act(&obs, rng);
        if step % cfg.probe_spacing == 0 {
            probes.push(Probe {
                step,
                snapshot: env.state(),
                obs: obs.clone(),
                action: action.clone(),
            });
        }
        let outcome = env.step(&action).expect("probe walk stepped on a finite action");
        step += 1;
        if outcome.terminated || outcome.truncated {
            obs = env.reset(rng);
            agent.begin_episode();
        } else {
            obs = outcome.obs;
        }
    }

    let mut report = ValueErrorReport { probes: Vec::with_capacity(cfg.probes), mean_percent: 0.0 };
    for probe in &probes {
        let mut rollout_rng = ChaCha8Rng::seed_from_u64(rng.gen::<u64>());
        let mut total = 0.0;
        for _ in 0..cfg.rollouts_per_probe {
            total += rollout_return(agent, env, probe, cfg.gamma, &mut rollout_rng);
        }
        let monte_carlo = total / cfg.rollouts_per_probe as f64;
        let estimate = agent.value_estimate(&probe.obs, &probe.action);
        report.probes.push(ValueProbeError {
            step: probe.step,
            value_estimate: estimate,
            monte_carlo_return: monte_carlo,
            percent_error: percent_error(estimate, monte_carlo, cfg.epsilon),
        });
    }
    report.mean_percent =
        report.probes.iter().map(|p| p.percent_error).sum::<f64>() / report.probes.len() as f64;
    Ok(report)
}

/// Discounted return of one rollout: restore the probe state, execute the
/// probe action, then follow the acting policy until the episode ends.
fn rollout_return(
    agent: &mut dyn ValueAgent,
    env: &mut dyn Environment,
    probe: &Probe,
    gamma: f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    env.restore(&probe.snapshot);
    agent.begin_episode();
    let mut ret = 0.0;
    let mut discount = 1.0;
    let mut outcome = env.step(&probe.action).expect("probe action was finite when recorded");
    loop {
        ret += discount * outcome.reward;
        discount *= gamma;
        if outcome.terminated || outcome.truncated {
            return ret;
        }
        let action = agent.act(&outcome.obs, rng);
        outcome = env.step(&action).expect("acting policy produced a non-finite action");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{ActionSpace, NChain, StepOutcome};

    const GAMMA: f64 = 0.99;

    #[test]
    fn percent_error_sign_convention_is_overestimation_positive() {
        assert_eq!(percent_error(2.0, 1.0, 1e-3), 100.0);
        assert_eq!(percent_error(1.0, 1.0, 1e-3), 0.0);
        assert_eq!(percent_error(0.5, 1.0, 1e-3), -50.0);
    }

    #[test]
    fn percent_error_floors_the_denominator_near_zero_returns() {
        assert_eq!(percent_error(0.002, 0.0, 1e-3), 200.0);
        assert_eq!(percent_error(-0.001, 0.0, 1e-3), -100.0);
    }

    #[test]
    fn oracle_agent_on_the_chain_stays_within_one_percent() {
        let spec = NChainSpec { states: 5, actions: 3 };
        let mut env = NChain::new(spec, 12);
        let mut agent = OracleChainAgent::new(spec, GAMMA);
        let cfg = DiagnosticConfig { gamma: GAMMA, ..DiagnosticConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let report = value_error_percent(&mut agent, &mut env, &cfg, &mut rng).unwrap();
        assert_eq!(report.probes.len(), cfg.probes);
        for probe in &report.probes {
            assert!(
                probe.percent_error.abs() <= 1.0,
                "probe at step {} erred {}%",
                probe.step,
                probe.percent_error
            );
        }
        assert!(report.mean_percent.abs() <= 1.0);
    }

    #[test]
    fn reruns_with_the_same_seed_are_identical() {
        let spec = NChainSpec { states: 4, actions: 2 };
        let cfg = DiagnosticConfig {
            probes: 10,
            rollouts_per_probe: 5,
            gamma: GAMMA,
            ..DiagnosticConfig::default()
        };
        let run = || {
            let mut env = NChain::new(spec, 10);
            let mut agent = OracleChainAgent::new(spec, GAMMA);
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            value_error_percent(&mut agent, &mut env, &cfg, &mut rng).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[derive(Debug, Clone)]
    struct NoSnapshotEnv;

    impl Environment for NoSnapshotEnv {
        fn obs_dim(&self) -> usize {
            1
        }
        fn action_space(&self) -> ActionSpace {
            ActionSpace::Continuous(1)
        }
        fn max_episode_steps(&self) -> usize {
            10
        }
        fn reset(&mut self, _rng: &mut ChaCha8Rng) -> Vec<f64> {
            vec![0.0]
        }
        fn step(&mut self, _action: &[f64]) -> Result<StepOutcome, crate::envs::EnvError> {
            Ok(StepOutcome { obs: vec![0.0], reward: 0.0, terminated: false, truncated: true })
        }
        fn state(&self) -> EnvState {
            EnvState::Custom(vec![])
        }
        fn restore(&mut self, _state: &EnvState) {}
        fn current_obs(&self) -> Vec<f64> {
            vec![0.0]
        }
        fn box_clone(&self) -> Box<dyn Environment> {
            Box::new(self.clone())
        }
        fn supports_snapshots(&self) -> bool {
            false
        }
    }

    #[test]
    fn environments_without_snapshots_are_refused() {
        let spec = NChainSpec { states: 4, actions: 2 };
        let mut agent = OracleChainAgent::new(spec, GAMMA);
        let mut env = NoSnapshotEnv;
        let cfg = DiagnosticConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = value_error_percent(&mut agent, &mut env, &cfg, &mut rng).unwrap_err();
        assert_eq!(err, AnalysisError::SnapshotsUnsupported);
    }
}
