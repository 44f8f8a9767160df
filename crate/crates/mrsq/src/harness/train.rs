//! The training loop: warmup on uniform random actions, then one planner
//! (or policy-head) action and one gradient pass over each objective per
//! environment step, with hard target refreshes, periodic evaluation,
//! probe-action snapshots, and checkpointing.
//!
//! Determinism contract: each concern draws from its own named stream, and
//! the per-step draw order is fixed — acting first (warmup uniform draw or
//! planner call, then exploration noise), then replay sampling and the
//! target-noise draws inside the value update, then probe planning, then
//! evaluation resets and rollouts. Two runs from the same master seed
//! therefore produce byte-identical metric streams, and a run resumed from
//! a checkpoint continues them bit for bit.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::ValueAgent;
use crate::envs::{EnvError, Environment};
use crate::nncore::{OptimGroup, Tensor};
use crate::planner::PlanError;
use crate::valuepolicy::{
    policy_update, value_update, LapReplay, TdConfig, Transition, ONLINE_VALUE_PREFIX,
    POLICY_PREFIX,
};

use super::agent::Agent;
use super::checkpoint::{save_checkpoint, Checkpoint, CheckpointError, ReplayState, RngStates};
use super::config::RunConfig;
use super::metrics::{
    EvalSummary, FaultRecord, LossRecord, MetricRecord, MetricWriter, SummaryWriter,
};
use super::stream_rng;

const MODEL_PREFIX: &str = "model.";

/// Consecutive non-finite losses tolerated before the run aborts.
const NONFINITE_ABORT_STREAK: u32 = 3;

/// Environment steps between consecutive probe observations.
const PROBE_SPACING: usize = 5;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("environment fault: {0}")]
    Env(#[from] EnvError),
    #[error("planning failed: {0}")]
    Plan(#[from] PlanError),
    #[error("checkpoint error: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("aborted at step {}: {} consecutive non-finite losses ({})",
            .0.step, .0.consecutive, .0.message)]
    Fault(FaultRecord),
}

/// Per-episode results of one evaluation sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub returns: Vec<f64>,
    pub lengths: Vec<u64>,
    pub mean_return: f64,
    pub mean_length: f64,
}

impl EvalReport {
    pub fn summary(&self) -> EvalSummary {
        EvalSummary { mean_return: self.mean_return, mean_length: self.mean_length }
    }
}

/// Greedy episodes with any acting policy. The actor is reset at each
/// episode start and acts without exploration noise.
pub fn evaluate_agent(
    actor: &mut dyn ValueAgent,
    env: &mut dyn Environment,
    episodes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<EvalReport, TrainError> {
    assert!(episodes >= 1);
    let mut returns = Vec::with_capacity(episodes);
    let mut lengths = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut obs = env.reset(rng);
        actor.begin_episode();
        let mut episode_return = 0.0;
        let mut length = 0u64;
        loop {
            let action = actor.act(&obs, rng);
            let outcome = env.step(&action)?;
            episode_return += outcome.reward;
            length += 1;
            if outcome.terminated || outcome.truncated {
                break;
            }
            obs = outcome.obs;
        }
        returns.push(episode_return);
        lengths.push(length);
    }
    let mean_return = returns.iter().sum::<f64>() / episodes as f64;
    let mean_length = lengths.iter().sum::<u64>() as f64 / episodes as f64;
    Ok(EvalReport { returns, lengths, mean_return, mean_length })
}

/// Evaluation sweep for a training agent on a fresh environment instance.
/// The episode warm start is stashed and restored around the sweep, so
/// evaluating never perturbs the training episode in progress.
pub fn evaluate(
    agent: &mut Agent,
    env: &dyn Environment,
    episodes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<EvalReport, TrainError> {
    let mut eval_env = env.box_clone();
    let stashed = std::mem::take(&mut agent.warm);
    let report = evaluate_agent(agent, eval_env.as_mut(), episodes, rng);
    agent.warm = stashed;
    report
}

/// Everything a finished run hands back: the trained agent, counters, the
/// evaluation history, the probe-action series, and where the files went.
pub struct TrainOutcome {
    pub config: RunConfig,
    pub steps: u64,
    pub gradient_steps: u64,
    pub agent: Agent,
    pub evals: Vec<(u64, EvalSummary)>,
    pub final_eval: Option<EvalSummary>,
    pub probes: Vec<Vec<f64>>,
    pub planned_probe_actions: Vec<Vec<Vec<f64>>>,
    pub policy_probe_actions: Vec<Vec<Vec<f64>>>,
    pub out_dir: PathBuf,
    pub metrics_path: PathBuf,
    pub summary_path: PathBuf,
    pub checkpoint_path: PathBuf,
}

/// Trains from scratch per `cfg`, writing `metrics.jsonl`, `summary.csv`
/// and `checkpoint.mrsq` into `cfg.run.out_dir`.
pub fn train(cfg: &RunConfig) -> Result<TrainOutcome, TrainError> {
    let out_dir = PathBuf::from(&cfg.run.out_dir);
    Trainer::fresh(cfg)?.run(&out_dir)
}

/// Continues a checkpointed run to its configured total steps, writing the
/// remaining output into `out_dir`. State is restored exactly, so the
/// continuation emits the same bytes the uninterrupted run would have.
pub fn resume(checkpoint: Checkpoint, out_dir: &Path) -> Result<TrainOutcome, TrainError> {
    Trainer::from_checkpoint(checkpoint)?.run(out_dir)
}

/// Rebuilds just the trained agent stored in a checkpoint: the
/// architecture comes from the stored config, and every parameter,
/// optimizer moment, and the planner warm start are overwritten with the
/// stored values.
pub fn restore_agent(chk: &Checkpoint) -> Result<Agent, TrainError> {
    chk.config.validate().map_err(TrainError::Config)?;
    let env = chk.config.env.build();
    let mut init = stream_rng(chk.config.run.seed, "init");
    let mut agent = Agent::new(&chk.config, env.obs_dim(), env.action_dim(), &mut init);
    chk.restore_params(&mut agent.nets.store)?;
    agent.warm = chk.warm.clone();
    Ok(agent)
}

fn uniform_action(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect()
}

struct Trainer {
    cfg: RunConfig,
    env: Box<dyn Environment>,
    agent: Agent,
    replay: LapReplay,
    rngs: RngStates,
    td: TdConfig,
    model_group: OptimGroup,
    value_group: OptimGroup,
    policy_group: OptimGroup,
    step: u64,
    gradient_steps: u64,
    nonfinite_streak: u32,
    obs: Vec<f64>,
    episode_return: f64,
    episode_length: u64,
    probes: Vec<Vec<f64>>,
    planned_probe_actions: Vec<Vec<Vec<f64>>>,
    policy_probe_actions: Vec<Vec<Vec<f64>>>,
}

impl Trainer {
    fn groups(cfg: &RunConfig) -> (OptimGroup, OptimGroup, OptimGroup) {
        (
            OptimGroup {
                prefix: MODEL_PREFIX.into(),
                lr: cfg.encoder.learning_rate,
                weight_decay: cfg.encoder.weight_decay,
            },
            OptimGroup {
                prefix: ONLINE_VALUE_PREFIX.into(),
                lr: cfg.value.learning_rate,
                weight_decay: 0.0,
            },
            OptimGroup {
                prefix: POLICY_PREFIX.into(),
                lr: cfg.policy.learning_rate,
                weight_decay: 0.0,
            },
        )
    }

    fn fresh(cfg: &RunConfig) -> Result<Self, TrainError> {
        cfg.validate().map_err(TrainError::Config)?;
        let seed = cfg.run.seed;
        let mut rngs = RngStates {
            env: stream_rng(seed, "env"),
            planner: stream_rng(seed, "planner"),
            replay: stream_rng(seed, "replay"),
            eval: stream_rng(seed, "eval"),
            probe: stream_rng(seed, "probe"),
        };

        let mut env = cfg.env.build();
        let obs_dim = env.obs_dim();
        let action_dim = env.action_dim();
        let mut init = stream_rng(seed, "init");
        let agent = Agent::new(cfg, obs_dim, action_dim, &mut init);
        let replay = LapReplay::new(cfg.common.buffer_capacity, cfg.lap.probability_smoothing);

        let probes = collect_probes(cfg, &mut rngs.probe)?;
        let obs = env.reset(&mut rngs.env);
        let (model_group, value_group, policy_group) = Trainer::groups(cfg);

        Ok(Trainer {
            cfg: cfg.clone(),
            env,
            agent,
            replay,
            rngs,
            td: cfg.td_config(),
            model_group,
            value_group,
            policy_group,
            step: 0,
            gradient_steps: 0,
            nonfinite_streak: 0,
            obs,
            episode_return: 0.0,
            episode_length: 0,
            probes,
            planned_probe_actions: Vec::new(),
            policy_probe_actions: Vec::new(),
        })
    }

    fn from_checkpoint(chk: Checkpoint) -> Result<Self, TrainError> {
        chk.config.validate().map_err(TrainError::Config)?;
        let cfg = chk.config.clone();
        let mut env = cfg.env.build();
        env.restore(&chk.env_state);
        let mut init = stream_rng(cfg.run.seed, "init");
        let mut agent = Agent::new(&cfg, env.obs_dim(), env.action_dim(), &mut init);
        chk.restore_params(&mut agent.nets.store)?;
        agent.warm = chk.warm.clone();
        let (model_group, value_group, policy_group) = Trainer::groups(&cfg);

        Ok(Trainer {
            env,
            agent,
            replay: chk.replay.rebuild(),
            rngs: chk.rng.clone(),
            td: cfg.td_config(),
            model_group,
            value_group,
            policy_group,
            step: chk.step,
            gradient_steps: chk.gradient_steps,
            nonfinite_streak: chk.nonfinite_streak,
            obs: chk.current_obs.clone(),
            episode_return: chk.episode_return,
            episode_length: chk.episode_length,
            probes: chk.probes.clone(),
            planned_probe_actions: chk.planned_probe_actions.clone(),
            policy_probe_actions: chk.policy_probe_actions.clone(),
            cfg,
        })
    }

    fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.cfg.clone(),
            step: self.step,
            gradient_steps: self.gradient_steps,
            nonfinite_streak: self.nonfinite_streak,
            rng: self.rngs.clone(),
            env_state: self.env.state(),
            current_obs: self.obs.clone(),
            episode_return: self.episode_return,
            episode_length: self.episode_length,
            warm: self.agent.warm.clone(),
            probes: self.probes.clone(),
            planned_probe_actions: self.planned_probe_actions.clone(),
            policy_probe_actions: self.policy_probe_actions.clone(),
            params: Checkpoint::capture_params(&self.agent.nets.store),
            replay: ReplayState::capture(&self.replay),
        }
    }

    /// One gradient pass over each objective on a shared batch draw.
    /// Returns the loss fields for the metric row, or the name of the
    /// objective that went non-finite.
    fn update(
        &mut self,
        row: &mut MetricRecord,
    ) -> Result<(), &'static str> {
        let indices =
            self.replay.sample_indices(self.cfg.common.batch_size, &mut self.rngs.replay);
        let nets = &mut self.agent.nets;

        nets.store.zero_grads();
        let segments = self.replay.model_segments(
            &indices,
            self.cfg.model.encoder_horizon,
            self.env.obs_dim(),
            self.env.action_dim(),
        );
        let model_out = nets
            .model
            .model_loss(&mut nets.store, &segments)
            .map_err(|_| "world model loss")?;
        nets.store.adamw_step(&self.model_group);
        row.model_loss = Some(LossRecord {
            total: model_out.total,
            dynamics: model_out.dynamics,
            reward: model_out.reward,
            terminal: model_out.terminal,
            preactivation: model_out.preactivation,
        });

        nets.store.zero_grads();
        let value_out = value_update(
            &mut nets.store,
            &nets.model,
            &nets.ensemble,
            &nets.policy,
            &self.replay,
            &indices,
            &self.td,
            &mut self.rngs.replay,
        );
        if !value_out.loss.is_finite() {
            return Err("value loss");
        }
        nets.store.clip_grad_norm(ONLINE_VALUE_PREFIX, self.cfg.value.gradient_clip_norm);
        nets.store.adamw_step(&self.value_group);
        self.replay.update_priorities(&indices, &value_out.priorities);
        row.value_loss = Some(value_out.loss);

        nets.store.zero_grads();
        let mut base_obs = Tensor::zeros(&[indices.len(), self.env.obs_dim()]);
        for (r, &i) in indices.iter().enumerate() {
            base_obs.row_mut(r).copy_from_slice(&self.replay.transition(i).obs);
        }
        let policy_loss =
            policy_update(&mut nets.store, &nets.model, &nets.ensemble, &nets.policy, &base_obs);
        if !policy_loss.is_finite() {
            return Err("policy loss");
        }
        nets.store.adamw_step(&self.policy_group);
        nets.store.zero_grads();
        row.policy_loss = Some(policy_loss);

        self.gradient_steps += 1;
        Ok(())
    }

    /// Re-plans and re-queries the fixed probe set, appending one snapshot
    /// to the planner-action and policy-action series.
    fn snapshot_probes(&mut self) -> Result<(), TrainError> {
        if self.probes.is_empty() {
            return Ok(());
        }
        let mut planned = Vec::with_capacity(self.probes.len());
        let mut policy = Vec::with_capacity(self.probes.len());
        for probe in &self.probes {
            planned.push(self.agent.plan_probe(probe, &mut self.rngs.probe)?);
            policy.push(self.agent.policy_action(probe));
        }
        self.planned_probe_actions.push(planned);
        self.policy_probe_actions.push(policy);
        Ok(())
    }

    fn run(mut self, out_dir: &Path) -> Result<TrainOutcome, TrainError> {
        std::fs::create_dir_all(out_dir)?;
        let metrics_path = out_dir.join("metrics.jsonl");
        let summary_path = out_dir.join("summary.csv");
        let checkpoint_path = out_dir.join("checkpoint.mrsq");
        let mut metrics = MetricWriter::create(&metrics_path, Some(self.step))?;
        let mut summary = SummaryWriter::create(&summary_path)?;
        let mut evals: Vec<(u64, EvalSummary)> = Vec::new();

        let warmup = self.cfg.exploration.initial_random_steps;
        let total = self.cfg.run.total_steps;
        let action_dim = self.env.action_dim();

        while self.step < total {
            self.step += 1;
            let step = self.step;
            let mut row = MetricRecord::at(step);

            let action = if step <= warmup {
                uniform_action(action_dim, &mut self.rngs.planner)
            } else {
                let (action, stats) =
                    self.agent.act_training(&self.obs, &mut self.rngs.planner)?;
                row.plan = stats;
                action
            };
            let outcome = self.env.step(&action)?;
            self.replay.push(Transition {
                obs: self.obs.clone(),
                action: self.env.canonical_action(&action),
                reward: outcome.reward,
                next_obs: outcome.obs.clone(),
                terminated: outcome.terminated,
                truncated: outcome.truncated,
            });
            self.episode_return += outcome.reward;
            self.episode_length += 1;
            if outcome.terminated || outcome.truncated {
                row.episode_return = Some(self.episode_return);
                row.episode_length = Some(self.episode_length);
                self.episode_return = 0.0;
                self.episode_length = 0;
                self.obs = self.env.reset(&mut self.rngs.env);
                self.agent.begin_episode();
            } else {
                self.obs = outcome.obs;
            }

            if step > warmup {
                if let Err(objective) = self.update(&mut row) {
                    self.nonfinite_streak += 1;
                    if self.nonfinite_streak >= NONFINITE_ABORT_STREAK {
                        let fault = FaultRecord {
                            step,
                            consecutive: self.nonfinite_streak,
                            message: format!("{objective} became non-finite"),
                        };
                        fault.save(&out_dir.join("fault.json"))?;
                        metrics.write(&row)?;
                        metrics.flush()?;
                        summary.flush()?;
                        return Err(TrainError::Fault(fault));
                    }
                } else {
                    self.nonfinite_streak = 0;
                }
            }

            if step % self.cfg.common.target_update_frequency as u64 == 0 {
                self.agent.nets.ensemble.sync_targets(&mut self.agent.nets.store);
            }

            let healthy = self.nonfinite_streak == 0;
            if healthy && step >= warmup && (step - warmup) % self.cfg.run.snapshot_interval == 0
            {
                self.snapshot_probes()?;
            }

            if healthy && step % self.cfg.run.eval_interval == 0 {
                let report = evaluate(
                    &mut self.agent,
                    self.env.as_ref(),
                    self.cfg.run.eval_episodes,
                    &mut self.rngs.eval,
                )?;
                let summary_row = report.summary();
                summary.write(step, &summary_row)?;
                row.eval = Some(summary_row.clone());
                evals.push((step, summary_row));
            }

            metrics.write(&row)?;

            if self.cfg.run.checkpoint_interval > 0
                && step % self.cfg.run.checkpoint_interval == 0
                && step < total
            {
                metrics.flush()?;
                summary.flush()?;
                save_checkpoint(&self.checkpoint(), &out_dir.join(format!(
                    "checkpoint_{step:07}.mrsq"
                )))?;
            }
        }

        metrics.flush()?;
        summary.flush()?;
        save_checkpoint(&self.checkpoint(), &checkpoint_path)?;

        let final_eval = evals
            .last()
            .filter(|(step, _)| *step == total)
            .map(|(_, summary)| summary.clone());
        Ok(TrainOutcome {
            config: self.cfg,
            steps: self.step,
            gradient_steps: self.gradient_steps,
            agent: self.agent,
            evals,
            final_eval,
            probes: self.probes,
            planned_probe_actions: self.planned_probe_actions,
            policy_probe_actions: self.policy_probe_actions,
            out_dir: out_dir.to_path_buf(),
            metrics_path,
            summary_path,
            checkpoint_path,
        })
    }
}

/// Fixed probe observations, gathered before training from a separate
/// environment instance rolled with uniform random actions.
fn collect_probes(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>, TrainError> {
    let count = cfg.run.probe_count;
    if count == 0 {
        return Ok(Vec::new());
    }
    let mut env = cfg.env.build();
    let action_dim = env.action_dim();
    let mut probes = Vec::with_capacity(count);
    let mut obs = env.reset(rng);
    let mut since_last = 0usize;
    probes.push(obs.clone());
    while probes.len() < count {
        let outcome = env.step(&uniform_action(action_dim, rng))?;
        if outcome.terminated || outcome.truncated {
            obs = env.reset(rng);
            since_last = 0;
            probes.push(obs.clone());
            continue;
        }
        obs = outcome.obs;
        since_last += 1;
        if since_last == PROBE_SPACING {
            probes.push(obs.clone());
            since_last = 0;
        }
    }
    probes.truncate(count);
    Ok(probes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::OracleChainAgent;
    use crate::envs::{EnvConfig, NChainSpec};
    use crate::harness::load_checkpoint;

    fn micro(env: EnvConfig, out_dir: &Path) -> RunConfig {
        let mut cfg = RunConfig::desk(env);
        cfg.encoder.zs_dim = 16;
        cfg.encoder.zsa_dim = 16;
        cfg.encoder.za_dim = 8;
        cfg.encoder.hidden_dim = 16;
        cfg.value.hidden_dim = 16;
        cfg.policy.hidden_dim = 16;
        cfg.value.ensemble_size = 2;
        cfg.common.batch_size = 8;
        cfg.mpc.samples = 8;
        cfg.mpc.policy_actions = 2;
        cfg.mpc.elites = 2;
        cfg.mpc.iterations = 1;
        cfg.run.probe_count = 4;
        cfg.run.out_dir = out_dir.to_string_lossy().into_owned();
        cfg
    }

    fn metric_lines(path: &Path) -> Vec<String> {
        std::fs::read_to_string(path)
            .unwrap()
            .lines()
            .map(|l| l.to_string())
            .collect()
    }

    #[test]
    fn smoke_run_emits_one_metric_row_per_step() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = micro(EnvConfig::Pendulum, &dir.path().join("run"));
        cfg.run.total_steps = 100;
        let outcome = train(&cfg).unwrap();

        assert_eq!(outcome.steps, 100);
        assert_eq!(outcome.gradient_steps, 0);
        let lines = metric_lines(&outcome.metrics_path);
        assert_eq!(lines.len(), 100);
        let first: MetricRecord = serde_json::from_str(&lines[0]).unwrap();
        assert_eq!(first.step, 1);
        assert!(first.model_loss.is_none());
        let last: MetricRecord = serde_json::from_str(&lines[99]).unwrap();
        assert_eq!(last.step, 100);

        let chk = load_checkpoint(&outcome.checkpoint_path).unwrap();
        assert_eq!(chk.step, 100);
        assert_eq!(chk.replay.transitions.len(), 100);
    }

    #[test]
    fn same_seed_runs_are_byte_identical_and_count_gradient_steps() {
        let dir = tempfile::tempdir().unwrap();
        let total = 10_050u64;
        let mut cfg_a = micro(EnvConfig::Pendulum, &dir.path().join("a"));
        cfg_a.run.total_steps = total;
        let mut cfg_b = cfg_a.clone();
        cfg_b.run.out_dir = dir.path().join("b").to_string_lossy().into_owned();

        let a = train(&cfg_a).unwrap();
        let b = train(&cfg_b).unwrap();

        assert_eq!(a.gradient_steps, total - 10_000);
        assert_eq!(b.gradient_steps, total - 10_000);
        let bytes_a = std::fs::read(&a.metrics_path).unwrap();
        let bytes_b = std::fs::read(&b.metrics_path).unwrap();
        assert_eq!(bytes_a, bytes_b);
        assert_eq!(
            std::fs::read(&a.summary_path).unwrap(),
            std::fs::read(&b.summary_path).unwrap()
        );
        assert_eq!(a.planned_probe_actions, b.planned_probe_actions);
        assert_eq!(a.policy_probe_actions, b.policy_probe_actions);
    }

    #[test]
    fn post_warmup_rows_carry_losses_and_plan_stats() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = micro(EnvConfig::Pendulum, &dir.path().join("run"));
        cfg.run.total_steps = 10_003;
        let outcome = train(&cfg).unwrap();

        let lines = metric_lines(&outcome.metrics_path);
        let warmup_row: MetricRecord = serde_json::from_str(&lines[9_999]).unwrap();
        assert!(warmup_row.plan.is_none());
        assert!(warmup_row.model_loss.is_none());
        let learn_row: MetricRecord = serde_json::from_str(&lines[10_000]).unwrap();
        assert_eq!(learn_row.step, 10_001);
        assert!(learn_row.plan.is_some());
        assert!(learn_row.model_loss.is_some());
        assert!(learn_row.value_loss.is_some());
        assert!(learn_row.policy_loss.is_some());
        assert_eq!(outcome.gradient_steps, 3);
    }

    #[test]
    fn policy_head_acting_skips_the_planner() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = micro(EnvConfig::Pendulum, &dir.path().join("run"));
        cfg.run.total_steps = 10_002;
        cfg.mpc.use_mpc_for_acting = false;
        cfg.exploration.exploration_noise = 0.2;
        let outcome = train(&cfg).unwrap();

        let lines = metric_lines(&outcome.metrics_path);
        let learn_row: MetricRecord = serde_json::from_str(&lines[10_001]).unwrap();
        assert!(learn_row.plan.is_none());
        assert!(learn_row.value_loss.is_some());
    }

    #[test]
    fn snapshots_accumulate_on_the_configured_interval() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = micro(EnvConfig::Pendulum, &dir.path().join("run"));
        cfg.run.total_steps = 10_040;
        cfg.run.snapshot_interval = 20;
        let outcome = train(&cfg).unwrap();

        assert_eq!(outcome.probes.len(), 4);
        assert_eq!(outcome.planned_probe_actions.len(), 3);
        assert_eq!(outcome.policy_probe_actions.len(), 3);
        assert_eq!(outcome.planned_probe_actions[0].len(), 4);
        assert_eq!(outcome.policy_probe_actions[0][0].len(), 1);
    }

    #[test]
    fn oracle_actor_scores_the_short_chain_perfectly() {
        let spec = NChainSpec { states: 4, actions: 3 };
        let mut actor = OracleChainAgent::new(spec, 0.99);
        let mut env = EnvConfig::Nchain { states: 4, actions: 3, max_steps: None }.build();
        let mut rng = stream_rng(0, "eval");
        let report = evaluate_agent(&mut actor, env.as_mut(), 10, &mut rng).unwrap();
        assert_eq!(report.mean_return, 1.0);
        assert_eq!(report.mean_length, 3.0);
    }

    struct RandomActor {
        dim: usize,
    }

    impl ValueAgent for RandomActor {
        fn act(&mut self, _obs: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
            uniform_action(self.dim, rng)
        }

        fn value_estimate(&self, _obs: &[f64], _action: &[f64]) -> f64 {
            0.0
        }
    }

    #[test]
    fn random_actor_rarely_solves_the_long_wide_chain() {
        let mut actor = RandomActor { dim: 10 };
        let mut env = EnvConfig::Nchain { states: 10, actions: 10, max_steps: None }.build();
        let mut rng = stream_rng(1, "eval");
        let report = evaluate_agent(&mut actor, env.as_mut(), 1_000, &mut rng).unwrap();
        assert!(
            report.mean_return <= 0.01,
            "random acting solved the chain too often: {}",
            report.mean_return
        );
    }

    #[test]
    fn evaluation_is_reproducible_and_preserves_the_warm_start() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = micro(EnvConfig::Pendulum, &dir.path().join("run"));
        let mut init = stream_rng(5, "init");
        let mut agent = Agent::new(&cfg, 3, 1, &mut init);
        let env = cfg.env.build();

        let mut plan_rng = stream_rng(5, "planner");
        agent.try_act(&[1.0, 0.0, 0.0], &mut plan_rng).unwrap();
        let warm_before = agent.warm.clone();

        let a = evaluate(&mut agent, env.as_ref(), 3, &mut stream_rng(5, "eval")).unwrap();
        assert_eq!(agent.warm, warm_before);
        let b = evaluate(&mut agent, env.as_ref(), 3, &mut stream_rng(5, "eval")).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.returns.len(), 3);
        assert_eq!(a.lengths, vec![200, 200, 200]);
    }

    #[test]
    fn three_consecutive_nonfinite_losses_abort_with_a_fault_record() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let mut cfg = micro(EnvConfig::Pendulum, &out);
        cfg.run.total_steps = 10_010;
        cfg.run.eval_interval = 20_000;
        cfg.run.probe_count = 0;
        cfg.mpc.use_mpc_for_acting = false;
        let mut trainer = Trainer::fresh(&cfg).unwrap();
        let poisoned = trainer
            .agent
            .nets
            .store
            .names_with_prefix("model.reward")
            .into_iter()
            .next()
            .unwrap();
        trainer.agent.nets.store.value_mut(&poisoned).values_mut()[0] = f64::NAN;

        let err = match trainer.run(&out) {
            Err(err) => err,
            Ok(_) => panic!("expected the run to abort"),
        };
        match err {
            TrainError::Fault(fault) => {
                assert_eq!(fault.step, 10_003);
                assert_eq!(fault.consecutive, 3);
                assert!(fault.message.contains("world model"));
            }
            other => panic!("expected a fault, got {other}"),
        }
        let fault: FaultRecord =
            serde_json::from_str(&std::fs::read_to_string(out.join("fault.json")).unwrap())
                .unwrap();
        assert_eq!(fault.step, 10_003);
        assert_eq!(metric_lines(&out.join("metrics.jsonl")).len(), 10_003);
    }

    #[test]
    fn resuming_a_checkpoint_matches_the_uninterrupted_run_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let total = 10_120u64;
        let cut = 10_100u64;
        let mut cfg = micro(EnvConfig::Pendulum, &dir.path().join("full"));
        cfg.run.total_steps = total;
        cfg.run.checkpoint_interval = cut;
        let full = train(&cfg).unwrap();

        let mid_path = full.out_dir.join(format!("checkpoint_{cut:07}.mrsq"));
        let mid = load_checkpoint(&mid_path).unwrap();
        assert_eq!(mid.step, cut);
        let resumed = resume(mid, &dir.path().join("resumed")).unwrap();

        assert_eq!(resumed.steps, total);
        assert_eq!(resumed.gradient_steps, total - 10_000);
        let full_tail: Vec<String> = metric_lines(&full.metrics_path)
            .into_iter()
            .skip(cut as usize)
            .collect();
        let resumed_lines = metric_lines(&resumed.metrics_path);
        assert_eq!(resumed_lines.len(), (total - cut) as usize);
        assert_eq!(full_tail, resumed_lines);

        assert_eq!(
            std::fs::read(&full.checkpoint_path).unwrap(),
            std::fs::read(&resumed.checkpoint_path).unwrap()
        );
    }
}
