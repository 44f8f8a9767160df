//! Training orchestration: run configuration, the acting agent, the step
//! loop, metric and checkpoint output, and deterministic evaluation.
//!
//! Every run is driven by a single master seed. The harness derives one
//! named random stream per concern (environment resets, parameter init,
//! action selection, replay sampling, evaluation, probe states), so adding
//! draws to one concern never shifts the values drawn by another. All
//! stream states are persisted in checkpoints, which makes a resumed run
//! bitwise-identical to one that never stopped.

mod agent;
mod checkpoint;
mod config;
mod metrics;
mod train;

pub use agent::{Agent, AgentNets};
pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, ParamState, ReplayState,
    RngStates, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::{
    CommonSection, ConfigError, EncoderSection, ExplorationSection, LapSection, ModelSection,
    MpcSection, PolicySection, RunConfig, RunSection, Td3Section, ValueSection,
};
pub use metrics::{EvalSummary, FaultRecord, LossRecord, MetricRecord, MetricWriter, SummaryWriter};
pub use train::{
    evaluate, evaluate_agent, restore_agent, resume, train, EvalReport, TrainError, TrainOutcome,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Independent random stream for one named concern, derived from the master
/// seed. The name is hashed into the seed, so streams stay decoupled: the
/// number of draws taken from one stream never affects any other.
pub fn stream_rng(master_seed: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(master_seed ^ fnv1a(name.as_bytes())))
}
