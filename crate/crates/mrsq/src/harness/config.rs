//! Run configuration. The TOML layout groups hyperparameters the way the
//! training recipe tabulates them, one section per concern, and every field
//! defaults to the published value so a config file only has to name the
//! environment and whatever it deliberately changes.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::EnvConfig;
use crate::planner::PlannerConfig;
use crate::valuepolicy::{TdConfig, MIN_PRIORITY};
use crate::worldmodel::{ModelLossWeights, WorldModelConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("bad override {assignment:?}: {reason}")]
    Override { assignment: String, reason: String },
}

/// Run-level bookkeeping: seed, length, and output cadence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSection {
    pub seed: u64,
    pub total_steps: u64,
    /// Steps between evaluation sweeps.
    pub eval_interval: u64,
    pub eval_episodes: usize,
    /// Steps between periodic checkpoints; zero keeps only the final one.
    pub checkpoint_interval: u64,
    /// Steps between probe-action snapshots once learning starts.
    pub snapshot_interval: u64,
    /// Fixed observations re-queried at every snapshot; zero disables the
    /// snapshots entirely.
    pub probe_count: usize,
    pub out_dir: String,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 0,
            total_steps: 50_000,
            eval_interval: 5_000,
            eval_episodes: 10,
            checkpoint_interval: 0,
            snapshot_interval: 1_000,
            probe_count: 16,
            out_dir: "runs".into(),
        }
    }
}

/// World-model objective weights and horizons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    pub dynamics_loss_weight: f64,
    pub reward_loss_weight: f64,
    pub terminal_loss_weight: f64,
    pub preactivation_loss_weight: f64,
    /// Unroll length of the encoder/dynamics objective.
    pub encoder_horizon: usize,
    /// Multi-step return horizon of the value objective.
    pub multistep_horizon: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            dynamics_loss_weight: 20.0,
            reward_loss_weight: 0.1,
            terminal_loss_weight: 1.0,
            preactivation_loss_weight: 1e-5,
            encoder_horizon: 5,
            multistep_horizon: 3,
        }
    }
}

/// Target-policy smoothing for the value targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Td3Section {
    pub target_policy_noise: f64,
    pub target_policy_noise_clip: f64,
}

impl Default for Td3Section {
    fn default() -> Self {
        Td3Section { target_policy_noise: 0.2, target_policy_noise_clip: 0.3 }
    }
}

/// Prioritized-replay shaping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LapSection {
    pub probability_smoothing: f64,
    pub min_priority: f64,
}

impl Default for LapSection {
    fn default() -> Self {
        LapSection { probability_smoothing: 0.4, min_priority: 1.0 }
    }
}

/// Warmup and acting noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplorationSection {
    pub initial_random_steps: u64,
    /// Std of Gaussian noise added to training actions; the default agent
    /// relies on search stochasticity instead and keeps this at zero.
    pub exploration_noise: f64,
}

impl Default for ExplorationSection {
    fn default() -> Self {
        ExplorationSection { initial_random_steps: 10_000, exploration_noise: 0.0 }
    }
}

/// Shared training constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CommonSection {
    pub discount: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub target_update_frequency: usize,
    /// Gradient updates per environment step after warmup.
    pub replay_ratio: u64,
}

impl Default for CommonSection {
    fn default() -> Self {
        CommonSection {
            discount: 0.99,
            buffer_capacity: 1_000_000,
            batch_size: 256,
            target_update_frequency: 250,
            replay_ratio: 1,
        }
    }
}

/// Encoder and latent-model dimensions and optimizer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderSection {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub zs_dim: usize,
    pub zsa_dim: usize,
    pub za_dim: usize,
    pub hidden_dim: usize,
    pub reward_bins: usize,
    /// Reward decode range is `symexp([-reward_max, reward_max])`.
    pub reward_max: f64,
    /// Simplicial embedding on state latents; off makes embeddings plain
    /// ELU outputs.
    pub sem: bool,
    /// Softmax group width of the simplicial embedding.
    pub sem_groups: usize,
}

impl Default for EncoderSection {
    fn default() -> Self {
        EncoderSection {
            learning_rate: 1e-4,
            weight_decay: 1e-4,
            zs_dim: 512,
            zsa_dim: 512,
            za_dim: 256,
            hidden_dim: 512,
            reward_bins: 65,
            reward_max: 10.0,
            sem: true,
            sem_groups: 8,
        }
    }
}

/// Value-ensemble dimensions and optimizer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValueSection {
    pub learning_rate: f64,
    pub hidden_dim: usize,
    pub gradient_clip_norm: f64,
    pub ensemble_size: usize,
    /// Ablation: bootstrap targets from a random pair instead of the full
    /// ensemble minimum.
    pub pair_min_targets: bool,
}

impl Default for ValueSection {
    fn default() -> Self {
        ValueSection {
            learning_rate: 3e-4,
            hidden_dim: 512,
            gradient_clip_norm: 20.0,
            ensemble_size: 10,
            pair_min_targets: false,
        }
    }
}

/// Policy-head dimensions and optimizer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicySection {
    pub learning_rate: f64,
    pub hidden_dim: usize,
}

impl Default for PolicySection {
    fn default() -> Self {
        PolicySection { learning_rate: 3e-4, hidden_dim: 512 }
    }
}

/// Planning-search shape and acting switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcSection {
    pub horizon: usize,
    pub iterations: usize,
    pub samples: usize,
    pub policy_actions: usize,
    pub elites: usize,
    pub policy_std: f64,
    pub max_std: f64,
    pub min_std: f64,
    pub temperature: f64,
    /// Bootstrap search tails with the ensemble minimum; off uses the mean.
    pub min_in_mpc: bool,
    /// Act with the planner after warmup; off acts with the raw policy head.
    pub use_mpc_for_acting: bool,
    /// Execute the best elite instead of drawing one by score.
    pub argmax_eval: bool,
}

impl Default for MpcSection {
    fn default() -> Self {
        MpcSection {
            horizon: 3,
            iterations: 6,
            samples: 512,
            policy_actions: 24,
            elites: 64,
            policy_std: 0.1,
            max_std: 2.0,
            min_std: 0.05,
            temperature: 0.5,
            min_in_mpc: true,
            use_mpc_for_acting: true,
            argmax_eval: false,
        }
    }
}

/// Complete description of one training run. Everything except the
/// environment has a published default, so the minimal config is
/// `[env]\nname = "pendulum"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub run: RunSection,
    pub env: EnvConfig,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub td3: Td3Section,
    #[serde(default)]
    pub lap: LapSection,
    #[serde(default)]
    pub exploration: ExplorationSection,
    #[serde(default)]
    pub common: CommonSection,
    #[serde(default)]
    pub encoder: EncoderSection,
    #[serde(default)]
    pub value: ValueSection,
    #[serde(default)]
    pub policy: PolicySection,
    #[serde(default)]
    pub mpc: MpcSection,
}

impl RunConfig {
    /// Published-scale defaults for the given environment.
    pub fn new(env: EnvConfig) -> Self {
        RunConfig {
            run: RunSection::default(),
            env,
            model: ModelSection::default(),
            td3: Td3Section::default(),
            lap: LapSection::default(),
            exploration: ExplorationSection::default(),
            common: CommonSection::default(),
            encoder: EncoderSection::default(),
            value: ValueSection::default(),
            policy: PolicySection::default(),
            mpc: MpcSection::default(),
        }
    }

    /// Dimensions and search effort shrunk to finish a 50k-step run on one
    /// CPU core in minutes while keeping every architectural choice intact:
    /// same objectives, same ensemble reduction, same search structure.
    pub fn desk(env: EnvConfig) -> Self {
        let mut cfg = RunConfig::new(env);
        cfg.common.batch_size = 32;
        cfg.common.buffer_capacity = 100_000;
        cfg.encoder.zs_dim = 32;
        cfg.encoder.zsa_dim = 32;
        cfg.encoder.za_dim = 16;
        cfg.encoder.hidden_dim = 32;
        cfg.value.hidden_dim = 32;
        cfg.policy.hidden_dim = 32;
        cfg.mpc.samples = 32;
        cfg.mpc.policy_actions = 8;
        cfg.mpc.elites = 8;
        cfg.mpc.iterations = 2;
        cfg
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path)?;
        let cfg: RunConfig = toml::from_str(&raw)?;
        cfg.validate().map_err(ConfigError::Invalid)?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.common.replay_ratio != 1 {
            return Err(format!(
                "replay_ratio must be exactly 1, got {}; the update loop \
                 performs one gradient pass per environment step",
                self.common.replay_ratio
            ));
        }
        if self.exploration.initial_random_steps != 10_000 {
            return Err(format!(
                "initial_random_steps must be exactly 10000, got {}",
                self.exploration.initial_random_steps
            ));
        }
        if self.lap.min_priority != MIN_PRIORITY {
            return Err(format!(
                "min_priority must be {MIN_PRIORITY}, got {}; the replay \
                 floor is compiled into the priority update",
                self.lap.min_priority
            ));
        }
        if !(self.lap.probability_smoothing >= 0.0) {
            return Err("probability_smoothing must be non-negative".into());
        }
        if self.run.total_steps == 0 {
            return Err("total_steps must be positive".into());
        }
        if self.run.eval_interval == 0 {
            return Err("eval_interval must be positive".into());
        }
        if self.run.eval_episodes == 0 {
            return Err("eval_episodes must be positive".into());
        }
        if self.run.snapshot_interval == 0 {
            return Err("snapshot_interval must be positive".into());
        }
        if self.common.batch_size == 0 {
            return Err("batch_size must be positive".into());
        }
        if self.common.buffer_capacity < self.common.batch_size {
            return Err(format!(
                "buffer_capacity {} is smaller than batch_size {}",
                self.common.buffer_capacity, self.common.batch_size
            ));
        }
        if self.common.target_update_frequency == 0 {
            return Err("target_update_frequency must be positive".into());
        }
        if !(self.exploration.exploration_noise >= 0.0)
            || !self.exploration.exploration_noise.is_finite()
        {
            return Err("exploration_noise must be non-negative and finite".into());
        }
        if !(self.td3.target_policy_noise >= 0.0) {
            return Err("target_policy_noise must be non-negative".into());
        }
        if !(self.td3.target_policy_noise_clip >= 0.0) {
            return Err("target_policy_noise_clip must be non-negative".into());
        }
        if self.model.multistep_horizon == 0 {
            return Err("multistep_horizon must be positive".into());
        }
        if self.value.ensemble_size == 0 {
            return Err("ensemble_size must be positive".into());
        }
        if self.value.pair_min_targets && self.value.ensemble_size < 2 {
            return Err("pair_min_targets needs an ensemble of at least 2".into());
        }
        if !(self.value.gradient_clip_norm > 0.0) {
            return Err("gradient_clip_norm must be positive".into());
        }
        for (name, lr) in [
            ("encoder.learning_rate", self.encoder.learning_rate),
            ("value.learning_rate", self.value.learning_rate),
            ("policy.learning_rate", self.policy.learning_rate),
        ] {
            if !(lr > 0.0) || !lr.is_finite() {
                return Err(format!("{name} must be positive and finite"));
            }
        }
        if !(self.encoder.weight_decay >= 0.0) {
            return Err("encoder.weight_decay must be non-negative".into());
        }
        self.world_model_config(1, 1).validate()?;
        self.planner_config().validate()?;
        Ok(())
    }

    pub fn planner_config(&self) -> PlannerConfig {
        PlannerConfig {
            horizon: self.mpc.horizon,
            iterations: self.mpc.iterations,
            candidates: self.mpc.samples,
            policy_candidates: self.mpc.policy_actions,
            elites: self.mpc.elites,
            policy_noise_std: self.mpc.policy_std,
            sigma_max: self.mpc.max_std,
            sigma_min: self.mpc.min_std,
            temperature: self.mpc.temperature,
            gamma: self.common.discount,
            min_in_mpc: self.mpc.min_in_mpc,
            argmax_eval: self.mpc.argmax_eval,
        }
    }

    pub fn world_model_config(&self, obs_dim: usize, action_dim: usize) -> WorldModelConfig {
        WorldModelConfig {
            obs_dim,
            action_dim,
            zs_dim: self.encoder.zs_dim,
            za_dim: self.encoder.za_dim,
            zsa_dim: self.encoder.zsa_dim,
            hidden_dim: self.encoder.hidden_dim,
            sem: self.encoder.sem,
            sem_group: self.encoder.sem_groups,
            reward_bins: self.encoder.reward_bins,
            reward_symlog_limit: self.encoder.reward_max,
            weights: ModelLossWeights {
                dynamics: self.model.dynamics_loss_weight,
                reward: self.model.reward_loss_weight,
                terminal: self.model.terminal_loss_weight,
                preactivation: self.model.preactivation_loss_weight,
                horizon: self.model.encoder_horizon,
            },
        }
    }

    pub fn td_config(&self) -> TdConfig {
        TdConfig {
            gamma: self.common.discount,
            horizon: self.model.multistep_horizon,
            target_noise_std: self.td3.target_policy_noise,
            target_noise_clip: self.td3.target_policy_noise_clip,
            target_update_period: self.common.target_update_frequency,
            huber_delta: 1.0,
            pair_min_targets: self.value.pair_min_targets,
        }
    }

    /// Applies one `section.field=value` assignment, parsing the value as
    /// the field's existing type. Unknown paths and type mismatches fail
    /// without changing the config.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let err = |reason: &str| ConfigError::Override {
            assignment: assignment.to_string(),
            reason: reason.to_string(),
        };
        let (path, raw) = assignment.split_once('=').ok_or_else(|| err("expected key=value"))?;
        let path = path.trim();
        let raw = raw.trim();
        if path.is_empty() {
            return Err(err("empty key"));
        }

        let mut root = toml::Value::try_from(&*self)
            .map_err(|e| err(&format!("config did not serialize: {e}")))?;
        let mut cursor = &mut root;
        let segments: Vec<&str> = path.split('.').collect();
        for (i, segment) in segments.iter().enumerate() {
            let table = cursor
                .as_table_mut()
                .ok_or_else(|| err(&format!("{} is not a section", segments[..i].join("."))))?;
            cursor = table
                .get_mut(*segment)
                .ok_or_else(|| err(&format!("unknown key {}", segments[..=i].join("."))))?;
        }

        let parsed = match &*cursor {
            toml::Value::String(_) => toml::Value::String(raw.to_string()),
            toml::Value::Boolean(_) => toml::Value::Boolean(
                raw.parse::<bool>().map_err(|_| err("expected true or false"))?,
            ),
            toml::Value::Integer(_) => toml::Value::Integer(
                raw.parse::<i64>().map_err(|_| err("expected an integer"))?,
            ),
            toml::Value::Float(_) => toml::Value::Float(
                raw.parse::<f64>().map_err(|_| err("expected a number"))?,
            ),
            _ => return Err(err("key does not name a scalar field")),
        };
        *cursor = parsed;

        *self = root
            .try_into()
            .map_err(|e| err(&format!("value rejected: {e}")))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pendulum() -> RunConfig {
        RunConfig::new(EnvConfig::Pendulum)
    }

    #[test]
    fn defaults_match_the_published_recipe() {
        let cfg = pendulum();
        assert_eq!(cfg.model.dynamics_loss_weight, 20.0);
        assert_eq!(cfg.model.reward_loss_weight, 0.1);
        assert_eq!(cfg.model.terminal_loss_weight, 1.0);
        assert_eq!(cfg.model.preactivation_loss_weight, 1e-5);
        assert_eq!(cfg.model.encoder_horizon, 5);
        assert_eq!(cfg.model.multistep_horizon, 3);
        assert_eq!(cfg.td3.target_policy_noise, 0.2);
        assert_eq!(cfg.td3.target_policy_noise_clip, 0.3);
        assert_eq!(cfg.lap.probability_smoothing, 0.4);
        assert_eq!(cfg.lap.min_priority, 1.0);
        assert_eq!(cfg.exploration.initial_random_steps, 10_000);
        assert_eq!(cfg.exploration.exploration_noise, 0.0);
        assert_eq!(cfg.common.discount, 0.99);
        assert_eq!(cfg.common.buffer_capacity, 1_000_000);
        assert_eq!(cfg.common.batch_size, 256);
        assert_eq!(cfg.common.target_update_frequency, 250);
        assert_eq!(cfg.common.replay_ratio, 1);
        assert_eq!(cfg.encoder.learning_rate, 1e-4);
        assert_eq!(cfg.encoder.weight_decay, 1e-4);
        assert_eq!(cfg.encoder.zs_dim, 512);
        assert_eq!(cfg.encoder.zsa_dim, 512);
        assert_eq!(cfg.encoder.za_dim, 256);
        assert_eq!(cfg.encoder.hidden_dim, 512);
        assert_eq!(cfg.encoder.reward_bins, 65);
        assert_eq!(cfg.encoder.reward_max, 10.0);
        assert!(cfg.encoder.sem);
        assert_eq!(cfg.encoder.sem_groups, 8);
        assert_eq!(cfg.value.learning_rate, 3e-4);
        assert_eq!(cfg.value.hidden_dim, 512);
        assert_eq!(cfg.value.gradient_clip_norm, 20.0);
        assert_eq!(cfg.value.ensemble_size, 10);
        assert_eq!(cfg.policy.learning_rate, 3e-4);
        assert_eq!(cfg.policy.hidden_dim, 512);
        assert_eq!(cfg.mpc.horizon, 3);
        assert_eq!(cfg.mpc.iterations, 6);
        assert_eq!(cfg.mpc.samples, 512);
        assert_eq!(cfg.mpc.policy_actions, 24);
        assert_eq!(cfg.mpc.elites, 64);
        assert_eq!(cfg.mpc.policy_std, 0.1);
        assert_eq!(cfg.mpc.max_std, 2.0);
        assert_eq!(cfg.mpc.min_std, 0.05);
        assert_eq!(cfg.mpc.temperature, 0.5);
        assert!(cfg.mpc.min_in_mpc);
        assert!(cfg.mpc.use_mpc_for_acting);
        assert!(!cfg.mpc.argmax_eval);
        cfg.validate().unwrap();
    }

    #[test]
    fn minimal_toml_fills_every_default() {
        let cfg: RunConfig = toml::from_str("[env]\nname = \"pendulum\"\n").unwrap();
        assert_eq!(cfg, pendulum());
    }

    #[test]
    fn toml_round_trips() {
        let mut cfg = RunConfig::desk(EnvConfig::Nchain {
            states: 11,
            actions: 10,
            max_steps: None,
        });
        cfg.run.seed = 3;
        cfg.mpc.argmax_eval = true;
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_section_keeps_other_defaults() {
        let cfg: RunConfig =
            toml::from_str("[env]\nname = \"cartbalance\"\n\n[mpc]\nsamples = 64\n").unwrap();
        assert_eq!(cfg.mpc.samples, 64);
        assert_eq!(cfg.mpc.elites, 64);
        assert_eq!(cfg.mpc.iterations, 6);
    }

    #[test]
    fn fixed_invariants_are_rejected_when_changed() {
        let mut cfg = pendulum();
        cfg.common.replay_ratio = 2;
        assert!(cfg.validate().unwrap_err().contains("replay_ratio"));

        let mut cfg = pendulum();
        cfg.exploration.initial_random_steps = 500;
        assert!(cfg.validate().unwrap_err().contains("initial_random_steps"));

        let mut cfg = pendulum();
        cfg.lap.min_priority = 0.5;
        assert!(cfg.validate().unwrap_err().contains("min_priority"));
    }

    #[test]
    fn validation_delegates_to_model_and_planner_checks() {
        let mut cfg = pendulum();
        cfg.encoder.zs_dim = 30;
        cfg.encoder.sem_groups = 8;
        assert!(cfg.validate().is_err());

        let mut cfg = pendulum();
        cfg.mpc.elites = 5_000;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn override_assigns_typed_values() {
        let mut cfg = pendulum();
        cfg.apply_override("mpc.samples=128").unwrap();
        assert_eq!(cfg.mpc.samples, 128);
        cfg.apply_override("common.discount=0.95").unwrap();
        assert_eq!(cfg.common.discount, 0.95);
        cfg.apply_override("encoder.sem=false").unwrap();
        assert!(!cfg.encoder.sem);
        cfg.apply_override("run.out_dir=elsewhere").unwrap();
        assert_eq!(cfg.run.out_dir, "elsewhere");
    }

    #[test]
    fn override_rejects_unknown_keys_and_bad_types() {
        let mut cfg = pendulum();
        assert!(cfg.apply_override("mpc.widgets=3").is_err());
        assert!(cfg.apply_override("mpc.samples=many").is_err());
        assert!(cfg.apply_override("nonsense").is_err());
        assert_eq!(cfg, pendulum());
    }

    #[test]
    fn planner_and_td_configs_mirror_the_sections() {
        let mut cfg = pendulum();
        cfg.mpc.samples = 48;
        cfg.mpc.min_in_mpc = false;
        cfg.common.discount = 0.9;
        cfg.model.multistep_horizon = 5;
        cfg.value.pair_min_targets = true;

        let planner = cfg.planner_config();
        assert_eq!(planner.candidates, 48);
        assert!(!planner.min_in_mpc);
        assert_eq!(planner.gamma, 0.9);

        let td = cfg.td_config();
        assert_eq!(td.horizon, 5);
        assert_eq!(td.gamma, 0.9);
        assert!(td.pair_min_targets);
        assert_eq!(td.target_update_period, 250);

        let wm = cfg.world_model_config(3, 1);
        assert_eq!(wm.obs_dim, 3);
        assert_eq!(wm.weights.dynamics, 20.0);
        assert_eq!(wm.weights.horizon, 5);
    }
}
