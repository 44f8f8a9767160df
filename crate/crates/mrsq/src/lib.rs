//! Model-based reinforcement learning at desk scale: an agent that plans with
//! MPPI search over a learned latent world model and bootstraps from the
//! minimum of a value-function ensemble, together with the analysis tooling
//! needed to study when search fails and when values overestimate.
//!
//! The crate is organized as a library plus runnable examples. Each example
//! demonstrates one capability end to end:
//!
//! - `nchain_search` — closed-form vs. simulated random-search success rates
//!   on the sparse N-chain task (`cargo run --release --example nchain_search`)
//! - `oracle_planner` — MPPI planning with a ground-truth chain model, showing
//!   search failure without policy-seeded candidates
//! - `gradient_check` — finite-difference verification of every training loss
//! - `train_pendulum` — full training run on the swing-up task
//! - `train_cartbalance` — full training run on the early-termination cart task
//! - `diagnose_checkpoint` — value-error and model-accuracy probes on a saved
//!   checkpoint
//!
//! The `mrsq` binary wraps the same entry points as subcommands: `train`,
//! `eval`, `analyze-nchain`, and `diagnose`.

pub mod analysis;
pub mod envs;
pub mod harness;
pub mod nncore;
pub mod planner;
pub mod valuepolicy;
pub mod worldmodel;
