//! Sampling-based action search over a latent model. Each planning call
//! rolls candidate action sequences through the model, scores them by
//! discounted decoded reward plus a terminal value bootstrap, and refines a
//! per-step Gaussian sampling distribution toward the highest-value
//! sequences. The executed action is the first step of an elite sequence
//! drawn in proportion to its score, with no extra exploration noise.

pub mod mppi;
pub mod oracle;
pub mod search;
#[cfg(test)]
pub(crate) mod stubs;

use serde::{Deserialize, Serialize};

pub use mppi::{mppi_plan, score_and_refit, PlanError, PlanOutcome, PlanStats, Refit};
pub use oracle::ChainOracle;
pub use search::{
    estimate_value, estimate_value_with_threads, planner_threads, SearchModel, SearchStep,
    EVAL_CHUNK,
};

/// Search hyperparameters for one planning call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// Length of each candidate action sequence.
    pub horizon: usize,
    /// Refinement iterations per planning call; zero skips refinement and
    /// executes a policy-seeded candidate directly.
    pub iterations: usize,
    /// Candidate sequences evaluated per iteration.
    pub candidates: usize,
    /// How many of the candidates are rolled out from the policy head
    /// instead of sampled from the refitted Gaussian.
    pub policy_candidates: usize,
    /// Elite sequences kept for refitting and the final draw.
    pub elites: usize,
    /// Std of the noise added to policy-head actions when rolling
    /// policy-seeded candidates.
    pub policy_noise_std: f64,
    /// Initial per-dimension sampling std, and the ceiling after refits.
    pub sigma_max: f64,
    /// Floor on the refitted sampling std.
    pub sigma_min: f64,
    /// Temperature converting elite values into scores.
    pub temperature: f64,
    /// Discount applied per model step.
    pub gamma: f64,
    /// Bootstrap the sequence tail with the ensemble minimum; when off the
    /// ensemble mean is used instead.
    pub min_in_mpc: bool,
    /// Execute the highest-value elite instead of drawing one by score.
    pub argmax_eval: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            horizon: 3,
            iterations: 6,
            candidates: 512,
            policy_candidates: 24,
            elites: 64,
            policy_noise_std: 0.1,
            sigma_max: 2.0,
            sigma_min: 0.05,
            temperature: 0.5,
            gamma: 0.99,
            min_in_mpc: true,
            argmax_eval: false,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.horizon == 0 {
            return Err("horizon must be at least 1".into());
        }
        if self.candidates == 0 {
            return Err("candidates must be at least 1".into());
        }
        if self.policy_candidates >= self.candidates {
            return Err(format!(
                "policy_candidates {} must be fewer than candidates {}",
                self.policy_candidates, self.candidates
            ));
        }
        if self.elites == 0 || self.elites > self.candidates {
            return Err(format!(
                "elites {} must be between 1 and candidates {}",
                self.elites, self.candidates
            ));
        }
        if !(self.sigma_min >= 0.0) {
            return Err("sigma_min must be non-negative".into());
        }
        if !(self.sigma_max > 0.0) || !self.sigma_max.is_finite() {
            return Err("sigma_max must be positive and finite".into());
        }
        if self.sigma_min > self.sigma_max {
            return Err(format!(
                "sigma_min {} must not exceed sigma_max {}",
                self.sigma_min, self.sigma_max
            ));
        }
        if !(self.policy_noise_std >= 0.0) || !self.policy_noise_std.is_finite() {
            return Err("policy_noise_std must be non-negative and finite".into());
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err("temperature must be positive and finite".into());
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err("gamma must be in (0, 1]".into());
        }
        Ok(())
    }
}

/// Sampling mean carried between consecutive planning calls of one episode.
/// The refit produced at the end of a call seeds the next call shifted one
/// step forward, so the search resumes near the previous solution.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WarmStart {
    mean: Option<Vec<Vec<f64>>>,
}

impl WarmStart {
    pub fn new() -> Self {
        WarmStart::default()
    }

    /// Drop the carried mean. Call at every episode start so a new episode
    /// never inherits the previous episode's solution.
    pub fn clear(&mut self) {
        self.mean = None;
    }

    pub fn is_warm(&self) -> bool {
        self.mean.is_some()
    }

    /// The refitted mean stored by the previous planning call, if any.
    pub fn mean(&self) -> Option<&[Vec<f64>]> {
        self.mean.as_deref()
    }

    /// Initial sampling mean for the next call: the stored mean shifted one
    /// step forward with a zero final step. Cold starts and shape mismatches
    /// fall back to all zeros.
    pub fn shifted_mean(&self, horizon: usize, action_dim: usize) -> Vec<Vec<f64>> {
        let mut shifted = vec![vec![0.0; action_dim]; horizon];
        if let Some(stored) = &self.mean {
            let shapes_match = stored.len() == horizon
                && stored.iter().all(|step| step.len() == action_dim);
            if shapes_match {
                for t in 0..horizon.saturating_sub(1) {
                    shifted[t].copy_from_slice(&stored[t + 1]);
                }
            }
        }
        shifted
    }

    /// Store the refitted mean at the end of a planning call.
    pub fn store(&mut self, mean: Vec<Vec<f64>>) {
        self.mean = Some(mean);
    }
}
