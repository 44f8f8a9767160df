//! Diagnostics for search failure and value overestimation: closed-form and
//! simulated random-search success rates on the chain task, percent error
//! between value estimates and ground-truth Monte-Carlo returns, action
//! churn across training snapshots, and model unroll accuracy probes.

pub mod modelerror;
pub mod policychange;
pub mod searchfail;
pub mod valueerror;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use modelerror::{dynamics_error, unroll_error, ProbeSegment, SegmentErrors, UNROLL_STEPS};
pub use policychange::policy_change_metric;
pub use searchfail::{
    replanned_episode_success, search_call_success, search_success_probability,
    simulate_random_search, SearchFailureQuery,
};
pub use valueerror::{
    percent_error, value_error_percent, OracleChainAgent, ValueAgent, ValueErrorReport,
    ValueProbeError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("environment does not support state save and restore")]
    SnapshotsUnsupported,
}

/// Probe counts and constants shared by the restore-and-rollout
/// diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticConfig {
    /// State-action probes collected with the final policy.
    pub probes: usize,
    /// Environment steps between consecutive probes.
    pub probe_spacing: usize,
    /// Monte-Carlo rollouts averaged per probe.
    pub rollouts_per_probe: usize,
    /// Steps between policy-churn snapshots during training.
    pub snapshot_interval: usize,
    /// Discount used for ground-truth returns and unroll errors.
    pub gamma: f64,
    /// Floor on the percent-error denominator.
    pub epsilon: f64,
}

impl Default for DiagnosticConfig {
    fn default() -> Self {
        DiagnosticConfig {
            probes: 50,
            probe_spacing: 20,
            rollouts_per_probe: 100,
            snapshot_interval: 1000,
            gamma: 0.99,
            epsilon: 1e-3,
        }
    }
}
