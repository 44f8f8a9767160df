//! Checkpoint persistence. One file captures a complete training state:
//! configuration, step counters, every parameter with its optimizer
//! moments, the replay ring in exact slot order, all random-stream states,
//! the environment snapshot, and the probe series. Restoring and resuming
//! therefore reproduces the uninterrupted run bit for bit.
//!
//! Layout: a four-byte magic, a little-endian `u32` version, a `u64`
//! manifest length, the JSON manifest, the raw `f64` little-endian arrays
//! the manifest declares, and a trailing CRC32 over everything before it.
//! Loading parses into a fresh value and never mutates live state, so a
//! failed load leaves the trainer exactly as it was.

use std::collections::BTreeMap;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::EnvState;
use crate::nncore::ParameterStore;
use crate::planner::WarmStart;
use crate::valuepolicy::{LapReplay, Transition};

use super::config::RunConfig;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"MRSQ";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("checksum mismatch: file is corrupt or truncated")]
    Checksum,
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("array {name} holds {found} values, expected {expected}")]
    Shape { name: String, expected: usize, found: usize },
    #[error("checkpoint does not fit this model: {0}")]
    Incompatible(String),
}

/// States of every named random stream, captured mid-sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngStates {
    pub env: ChaCha8Rng,
    pub planner: ChaCha8Rng,
    pub replay: ChaCha8Rng,
    pub eval: ChaCha8Rng,
    pub probe: ChaCha8Rng,
}

/// One parameter tensor with its optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamState {
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

/// The replay ring in slot order, with its write cursor and priority state.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayState {
    pub capacity: usize,
    pub alpha: f64,
    pub next_global: u64,
    pub max_priority: f64,
    pub transitions: Vec<Transition>,
    pub global: Vec<u64>,
    pub priorities: Vec<f64>,
}

impl ReplayState {
    pub fn capture(replay: &LapReplay) -> Self {
        ReplayState {
            capacity: replay.capacity(),
            alpha: replay.alpha(),
            next_global: replay.inserted(),
            max_priority: replay.max_priority(),
            transitions: (0..replay.len()).map(|i| replay.transition(i).clone()).collect(),
            global: (0..replay.len()).map(|i| replay.global_index(i)).collect(),
            priorities: replay.raw_priorities().to_vec(),
        }
    }

    pub fn rebuild(&self) -> LapReplay {
        LapReplay::from_parts(
            self.capacity,
            self.alpha,
            self.transitions.clone(),
            self.global.clone(),
            &self.priorities,
            self.next_global,
            self.max_priority,
        )
    }
}

/// Complete training state between two environment steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub step: u64,
    pub gradient_steps: u64,
    pub nonfinite_streak: u32,
    pub rng: RngStates,
    pub env_state: EnvState,
    pub current_obs: Vec<f64>,
    pub episode_return: f64,
    pub episode_length: u64,
    pub warm: WarmStart,
    /// Fixed observations re-planned at every snapshot.
    pub probes: Vec<Vec<f64>>,
    /// Planner actions at the probes, one snapshot per entry.
    pub planned_probe_actions: Vec<Vec<Vec<f64>>>,
    /// Policy-head actions at the probes, aligned with the planner series.
    pub policy_probe_actions: Vec<Vec<Vec<f64>>>,
    pub params: BTreeMap<String, ParamState>,
    pub replay: ReplayState,
}

impl Checkpoint {
    /// Copies every parameter and its optimizer moments out of the store.
    pub fn capture_params(store: &ParameterStore) -> BTreeMap<String, ParamState> {
        store
            .iter()
            .map(|(name, entry)| {
                (
                    name.clone(),
                    ParamState {
                        shape: entry.value.shape().to_vec(),
                        value: entry.value.values().to_vec(),
                        m: entry.adam.m.clone(),
                        v: entry.adam.v.clone(),
                        step: entry.adam.step,
                    },
                )
            })
            .collect()
    }

    /// Writes every stored parameter into `store`. Validates first that the
    /// name sets and lengths agree, so a mismatched architecture fails
    /// without touching a single value.
    pub fn restore_params(&self, store: &mut ParameterStore) -> Result<(), CheckpointError> {
        let live: Vec<String> = store.iter().map(|(name, _)| name.clone()).collect();
        for name in &live {
            if !self.params.contains_key(name) {
                return Err(CheckpointError::Incompatible(format!(
                    "model parameter {name} is missing from the checkpoint"
                )));
            }
        }
        for name in self.params.keys() {
            if !store.contains(name) {
                return Err(CheckpointError::Incompatible(format!(
                    "checkpoint parameter {name} does not exist in the model"
                )));
            }
        }
        for (name, saved) in &self.params {
            let entry = store.entry(name);
            if entry.value.shape() != saved.shape.as_slice()
                || entry.value.len() != saved.value.len()
            {
                return Err(CheckpointError::Incompatible(format!(
                    "parameter {name} has shape {:?} in the model but {:?} in the checkpoint",
                    entry.value.shape(),
                    saved.shape
                )));
            }
        }

        for (name, saved) in &self.params {
            let entry = store.entry_mut(name);
            entry.value.values_mut().copy_from_slice(&saved.value);
            entry.adam.m.copy_from_slice(&saved.m);
            entry.adam.v.copy_from_slice(&saved.v);
            entry.adam.step = saved.step;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct ParamMeta {
    name: String,
    shape: Vec<usize>,
    adam_step: u64,
}

#[derive(Serialize, Deserialize)]
struct ReplayMeta {
    capacity: usize,
    alpha: f64,
    len: usize,
    next_global: u64,
    max_priority: f64,
    obs_dim: usize,
    action_dim: usize,
}

#[derive(Serialize, Deserialize)]
struct ArrayMeta {
    key: String,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    config: RunConfig,
    step: u64,
    gradient_steps: u64,
    nonfinite_streak: u32,
    rng: RngStates,
    env_state: EnvState,
    current_obs: Vec<f64>,
    episode_return: f64,
    episode_length: u64,
    warm: WarmStart,
    probes: Vec<Vec<f64>>,
    planned_probe_actions: Vec<Vec<Vec<f64>>>,
    policy_probe_actions: Vec<Vec<Vec<f64>>>,
    params: Vec<ParamMeta>,
    replay: ReplayMeta,
    arrays: Vec<ArrayMeta>,
}

fn push_array(
    arrays: &mut Vec<(String, Vec<f64>)>,
    metas: &mut Vec<ArrayMeta>,
    key: &str,
    values: Vec<f64>,
) {
    metas.push(ArrayMeta { key: key.to_string(), len: values.len() });
    arrays.push((key.to_string(), values));
}

fn encode(chk: &Checkpoint) -> Vec<u8> {
    let replay = &chk.replay;
    let obs_dim = replay.transitions.first().map(|t| t.obs.len()).unwrap_or(0);
    let action_dim = replay.transitions.first().map(|t| t.action.len()).unwrap_or(0);
    for t in &replay.transitions {
        assert_eq!(t.obs.len(), obs_dim, "ragged replay observations");
        assert_eq!(t.next_obs.len(), obs_dim, "ragged replay observations");
        assert_eq!(t.action.len(), action_dim, "ragged replay actions");
    }

    let mut arrays: Vec<(String, Vec<f64>)> = Vec::new();
    let mut metas: Vec<ArrayMeta> = Vec::new();
    for (name, param) in &chk.params {
        push_array(&mut arrays, &mut metas, &format!("{name}.value"), param.value.clone());
        push_array(&mut arrays, &mut metas, &format!("{name}.adam_m"), param.m.clone());
        push_array(&mut arrays, &mut metas, &format!("{name}.adam_v"), param.v.clone());
    }
    let flat = |f: fn(&Transition) -> &[f64]| {
        replay.transitions.iter().flat_map(move |t| f(t).iter().copied())
    };
    push_array(&mut arrays, &mut metas, "replay.obs", flat(|t| &t.obs).collect());
    push_array(&mut arrays, &mut metas, "replay.actions", flat(|t| &t.action).collect());
    push_array(
        &mut arrays,
        &mut metas,
        "replay.rewards",
        replay.transitions.iter().map(|t| t.reward).collect(),
    );
    push_array(&mut arrays, &mut metas, "replay.next_obs", flat(|t| &t.next_obs).collect());
    push_array(
        &mut arrays,
        &mut metas,
        "replay.terminated",
        replay.transitions.iter().map(|t| t.terminated as u8 as f64).collect(),
    );
    push_array(
        &mut arrays,
        &mut metas,
        "replay.truncated",
        replay.transitions.iter().map(|t| t.truncated as u8 as f64).collect(),
    );
    push_array(&mut arrays, &mut metas, "replay.priorities", replay.priorities.clone());
    push_array(
        &mut arrays,
        &mut metas,
        "replay.global",
        replay.global.iter().map(|&g| g as f64).collect(),
    );

    let manifest = Manifest {
        config: chk.config.clone(),
        step: chk.step,
        gradient_steps: chk.gradient_steps,
        nonfinite_streak: chk.nonfinite_streak,
        rng: chk.rng.clone(),
        env_state: chk.env_state.clone(),
        current_obs: chk.current_obs.clone(),
        episode_return: chk.episode_return,
        episode_length: chk.episode_length,
        warm: chk.warm.clone(),
        probes: chk.probes.clone(),
        planned_probe_actions: chk.planned_probe_actions.clone(),
        policy_probe_actions: chk.policy_probe_actions.clone(),
        params: chk
            .params
            .iter()
            .map(|(name, p)| ParamMeta {
                name: name.clone(),
                shape: p.shape.clone(),
                adam_step: p.step,
            })
            .collect(),
        replay: ReplayMeta {
            capacity: replay.capacity,
            alpha: replay.alpha,
            len: replay.transitions.len(),
            next_global: replay.next_global,
            max_priority: replay.max_priority,
            obs_dim,
            action_dim,
        },
        arrays: metas,
    };
    let manifest_json = serde_json::to_vec(&manifest).expect("manifest serializes");

    let array_values: usize = arrays.iter().map(|(_, a)| a.len()).sum();
    let mut bytes =
        Vec::with_capacity(4 + 4 + 8 + manifest_json.len() + 8 * array_values + 4);
    bytes.extend_from_slice(&CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(manifest_json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&manifest_json);
    for (_, array) in &arrays {
        for value in array {
            bytes.extend_from_slice(&value.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&bytes);
    bytes.extend_from_slice(&crc.to_le_bytes());
    bytes
}

fn take_array(
    arrays: &mut BTreeMap<String, Vec<f64>>,
    key: &str,
    expected: usize,
) -> Result<Vec<f64>, CheckpointError> {
    let values = arrays
        .remove(key)
        .ok_or_else(|| CheckpointError::Manifest(format!("array {key} is not declared")))?;
    if values.len() != expected {
        return Err(CheckpointError::Shape {
            name: key.to_string(),
            expected,
            found: values.len(),
        });
    }
    Ok(values)
}

fn decode(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    if bytes.len() < 4 || bytes[..4] != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < 20 {
        return Err(CheckpointError::Checksum);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version { found: version, expected: CHECKPOINT_VERSION });
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored_crc = u32::from_le_bytes(trailer.try_into().unwrap());
    if crc32fast::hash(body) != stored_crc {
        return Err(CheckpointError::Checksum);
    }

    let manifest_len = u64::from_le_bytes(body[8..16].try_into().unwrap()) as usize;
    let manifest_end = 16usize
        .checked_add(manifest_len)
        .filter(|&end| end <= body.len())
        .ok_or_else(|| CheckpointError::Manifest("manifest length out of range".into()))?;
    let manifest: Manifest = serde_json::from_slice(&body[16..manifest_end])
        .map_err(|e| CheckpointError::Manifest(e.to_string()))?;

    let array_bytes = &body[manifest_end..];
    let declared: usize = manifest.arrays.iter().map(|a| a.len).sum();
    if array_bytes.len() != declared * 8 {
        return Err(CheckpointError::Manifest(format!(
            "declared {} array values but file holds {} bytes",
            declared,
            array_bytes.len()
        )));
    }
    let mut arrays: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut offset = 0usize;
    for meta in &manifest.arrays {
        let end = offset + meta.len * 8;
        let values: Vec<f64> = array_bytes[offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if arrays.insert(meta.key.clone(), values).is_some() {
            return Err(CheckpointError::Manifest(format!("array {} declared twice", meta.key)));
        }
        offset = end;
    }

    let mut params = BTreeMap::new();
    for meta in &manifest.params {
        let expected: usize = meta.shape.iter().product();
        let value = take_array(&mut arrays, &format!("{}.value", meta.name), expected)?;
        let m = take_array(&mut arrays, &format!("{}.adam_m", meta.name), expected)?;
        let v = take_array(&mut arrays, &format!("{}.adam_v", meta.name), expected)?;
        params.insert(
            meta.name.clone(),
            ParamState { shape: meta.shape.clone(), value, m, v, step: meta.adam_step },
        );
    }

    let r = &manifest.replay;
    let obs = take_array(&mut arrays, "replay.obs", r.len * r.obs_dim)?;
    let actions = take_array(&mut arrays, "replay.actions", r.len * r.action_dim)?;
    let rewards = take_array(&mut arrays, "replay.rewards", r.len)?;
    let next_obs = take_array(&mut arrays, "replay.next_obs", r.len * r.obs_dim)?;
    let terminated = take_array(&mut arrays, "replay.terminated", r.len)?;
    let truncated = take_array(&mut arrays, "replay.truncated", r.len)?;
    let priorities = take_array(&mut arrays, "replay.priorities", r.len)?;
    let global = take_array(&mut arrays, "replay.global", r.len)?;
    let transitions: Vec<Transition> = (0..r.len)
        .map(|i| Transition {
            obs: obs[i * r.obs_dim..(i + 1) * r.obs_dim].to_vec(),
            action: actions[i * r.action_dim..(i + 1) * r.action_dim].to_vec(),
            reward: rewards[i],
            next_obs: next_obs[i * r.obs_dim..(i + 1) * r.obs_dim].to_vec(),
            terminated: terminated[i] != 0.0,
            truncated: truncated[i] != 0.0,
        })
        .collect();

    Ok(Checkpoint {
        config: manifest.config,
        step: manifest.step,
        gradient_steps: manifest.gradient_steps,
        nonfinite_streak: manifest.nonfinite_streak,
        rng: manifest.rng,
        env_state: manifest.env_state,
        current_obs: manifest.current_obs,
        episode_return: manifest.episode_return,
        episode_length: manifest.episode_length,
        warm: manifest.warm,
        probes: manifest.probes,
        planned_probe_actions: manifest.planned_probe_actions,
        policy_probe_actions: manifest.policy_probe_actions,
        params,
        replay: ReplayState {
            capacity: r.capacity,
            alpha: r.alpha,
            next_global: r.next_global,
            max_priority: r.max_priority,
            transitions,
            global: global.iter().map(|&g| g as u64).collect(),
            priorities,
        },
    })
}

/// Serializes and writes atomically: the bytes land in a sibling temp file
/// first, so an interrupted save never leaves a half-written checkpoint at
/// the target path.
pub fn save_checkpoint(chk: &Checkpoint, path: &Path) -> Result<(), CheckpointError> {
    let bytes = encode(chk);
    let tmp = path.with_extension("mrsq.tmp");
    std::fs::write(&tmp, &bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    decode(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvConfig;
    use crate::harness::{stream_rng, Agent};
    use rand::Rng;

    fn sample_checkpoint() -> Checkpoint {
        let mut config = RunConfig::desk(EnvConfig::Pendulum);
        config.run.seed = 11;
        let mut init = stream_rng(11, "init");
        let agent = Agent::new(&config, 3, 1, &mut init);

        let mut replay = LapReplay::new(8, 0.4);
        let mut rng = stream_rng(11, "replay");
        for i in 0..11 {
            replay.push(Transition {
                obs: vec![rng.gen(), rng.gen(), rng.gen()],
                action: vec![rng.gen::<f64>() * 2.0 - 1.0],
                reward: rng.gen::<f64>() - 0.5,
                next_obs: vec![rng.gen(), rng.gen(), rng.gen()],
                terminated: i % 5 == 4,
                truncated: false,
            });
        }
        replay.update_priorities(&[0, 3], &[4.0, 2.0]);

        let mut warm = WarmStart::new();
        warm.store(vec![vec![0.25], vec![-0.5], vec![0.125]]);

        Checkpoint {
            config,
            step: 10_123,
            gradient_steps: 123,
            nonfinite_streak: 1,
            rng: RngStates {
                env: stream_rng(11, "env"),
                planner: stream_rng(11, "planner"),
                replay: rng,
                eval: stream_rng(11, "eval"),
                probe: stream_rng(11, "probe"),
            },
            env_state: EnvState::Pendulum { theta: 0.7, theta_dot: -1.25, steps: 42 },
            current_obs: vec![0.9, 0.1, -1.25],
            episode_return: -37.5,
            episode_length: 42,
            warm,
            probes: vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 2.0]],
            planned_probe_actions: vec![vec![vec![0.5], vec![-0.5]]],
            policy_probe_actions: vec![vec![vec![0.25], vec![-0.125]]],
            params: Checkpoint::capture_params(&agent.nets.store),
            replay: ReplayState::capture(&replay),
        }
    }

    #[test]
    fn checkpoints_round_trip_bitwise() {
        let chk = sample_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.mrsq");
        save_checkpoint(&chk, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, chk);
    }

    #[test]
    fn rng_streams_continue_identically_after_a_round_trip() {
        let chk = sample_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.mrsq");
        save_checkpoint(&chk, &path).unwrap();
        let mut back = load_checkpoint(&path).unwrap();

        let mut original = chk.rng.planner.clone();
        let a: Vec<u64> = (0..8).map(|_| original.gen()).collect();
        let b: Vec<u64> = (0..8).map(|_| back.rng.planner.gen()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn rebuilt_replay_samples_like_the_original() {
        let chk = sample_checkpoint();
        let rebuilt = chk.replay.rebuild();
        assert_eq!(rebuilt.len(), chk.replay.transitions.len());
        assert_eq!(rebuilt.inserted(), chk.replay.next_global);
        let mut a_rng = stream_rng(0, "check");
        let mut b_rng = a_rng.clone();
        let a = rebuilt.sample_indices(32, &mut a_rng);
        let b = chk.replay.rebuild().sample_indices(32, &mut b_rng);
        assert_eq!(a, b);
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let chk = sample_checkpoint();
        let mut bytes = encode(&chk);
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn unsupported_version_is_rejected() {
        let chk = sample_checkpoint();
        let mut bytes = encode(&chk);
        bytes[4..8].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            decode(&bytes),
            Err(CheckpointError::Version { found: 7, expected: CHECKPOINT_VERSION })
        ));
    }

    #[test]
    fn truncation_fails_the_checksum() {
        let chk = sample_checkpoint();
        let bytes = encode(&chk);
        let truncated = &bytes[..bytes.len() - 100];
        assert!(matches!(decode(truncated), Err(CheckpointError::Checksum)));
    }

    #[test]
    fn corruption_fails_the_checksum() {
        let chk = sample_checkpoint();
        let mut bytes = encode(&chk);
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(matches!(decode(&bytes), Err(CheckpointError::Checksum)));
    }

    #[test]
    fn restore_into_a_different_architecture_fails_without_mutation() {
        let chk = sample_checkpoint();
        let mut other_cfg = RunConfig::desk(EnvConfig::Pendulum);
        other_cfg.encoder.hidden_dim = 24;
        let mut init = stream_rng(99, "init");
        let mut other = Agent::new(&other_cfg, 3, 1, &mut init);
        let before = Checkpoint::capture_params(&other.nets.store);

        let result = chk.restore_params(&mut other.nets.store);
        assert!(matches!(result, Err(CheckpointError::Incompatible(_))));
        assert_eq!(Checkpoint::capture_params(&other.nets.store), before);
    }

    #[test]
    fn restore_places_values_and_optimizer_moments() {
        let chk = sample_checkpoint();
        let mut init = stream_rng(77, "init");
        let mut agent = Agent::new(&chk.config, 3, 1, &mut init);
        chk.restore_params(&mut agent.nets.store).unwrap();
        assert_eq!(Checkpoint::capture_params(&agent.nets.store), chk.params);
    }
}
