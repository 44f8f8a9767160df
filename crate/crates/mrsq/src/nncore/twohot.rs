//! Scalar-to-categorical reward coding: rewards are compressed with a
//! signed-log transform, spread over the two nearest bins of a fixed grid,
//! and decoded as the inverse transform of the expected bin value.

/// Signed logarithmic compression, `sign(x) * ln(1 + |x|)`.
pub fn symlog(x: f64) -> f64 {
    x.signum() * x.abs().ln_1p()
}

/// Inverse of [`symlog`], `sign(x) * (e^|x| - 1)`.
pub fn symexp(x: f64) -> f64 {
    x.signum() * x.abs().exp_m1()
}

/// Two-hot coder over a uniform grid in transformed space.
#[derive(Debug, Clone)]
pub struct TwoHot {
    centers: Vec<f64>,
}

/// Default bin count used by the reward head.
pub const REWARD_BINS: usize = 65;
/// Default grid bounds in transformed space; covers roughly ±22k in raw
/// reward after decompression.
pub const REWARD_LOW: f64 = -10.0;
pub const REWARD_HIGH: f64 = 10.0;

impl Default for TwoHot {
    fn default() -> Self {
        TwoHot::new(REWARD_BINS, REWARD_LOW, REWARD_HIGH)
    }
}

impl TwoHot {
    pub fn new(bins: usize, low: f64, high: f64) -> Self {
        assert!(bins >= 2 && high > low, "degenerate two-hot grid");
        let step = (high - low) / (bins - 1) as f64;
        let centers = (0..bins).map(|i| low + step * i as f64).collect();
        TwoHot { centers }
    }

    pub fn bins(&self) -> usize {
        self.centers.len()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Probability vector with mass on the (at most two) bins bracketing the
    /// transformed target. Targets beyond the grid clamp to the edge bins.
    pub fn encode(&self, target: f64) -> Vec<f64> {
        let mut probs = vec![0.0; self.centers.len()];
        self.encode_into(target, &mut probs);
        probs
    }

    pub fn encode_into(&self, target: f64, probs: &mut [f64]) {
        assert_eq!(probs.len(), self.centers.len());
        probs.fill(0.0);
        let x = symlog(target);
        let low = self.centers[0];
        let high = *self.centers.last().unwrap();
        if x <= low {
            probs[0] = 1.0;
            return;
        }
        if x >= high {
            probs[self.centers.len() - 1] = 1.0;
            return;
        }
        let step = self.centers[1] - self.centers[0];
        let pos = (x - low) / step;
        let k = (pos.floor() as usize).min(self.centers.len() - 2);
        let w = (x - self.centers[k]) / step;
        if w <= 0.0 {
            probs[k] = 1.0;
        } else {
            probs[k] = 1.0 - w;
            probs[k + 1] = w;
        }
    }

    /// Expected transformed value under `probs`, mapped back to raw scale.
    pub fn expected(&self, probs: &[f64]) -> f64 {
        assert_eq!(probs.len(), self.centers.len());
        let x: f64 = probs.iter().zip(&self.centers).map(|(p, c)| p * c).sum();
        symexp(x)
    }

    /// Softmax over the logits followed by [`TwoHot::expected`].
    pub fn decode_logits(&self, logits: &[f64]) -> f64 {
        assert_eq!(logits.len(), self.centers.len());
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= sum;
        }
        self.expected(&probs)
    }

    /// Width of the raw-scale interval covered by the bin pair around `r`,
    /// i.e. the coder's local resolution before interpolation.
    pub fn local_quantum(&self, r: f64) -> f64 {
        let step = self.centers[1] - self.centers[0];
        let x = symlog(r).clamp(self.centers[0], *self.centers.last().unwrap());
        symexp(x + step / 2.0) - symexp(x - step / 2.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn zero_reward_takes_the_center_bin_and_decodes_exactly() {
        let coder = TwoHot::default();
        let probs = coder.encode(0.0);
        assert_eq!(probs[32], 1.0);
        assert_eq!(probs.iter().filter(|p| **p != 0.0).count(), 1);
        assert_eq!(coder.expected(&probs), 0.0);
    }

    #[test]
    fn effective_range_is_roughly_22k() {
        // The grid edge sits at e^10 - 1 in raw units.
        let coder = TwoHot::default();
        let edge = symexp(10.0);
        assert_relative_eq!(edge, 22025.465794806718, max_relative = 1e-12);
        let probs = coder.encode(1e9);
        assert_eq!(probs[64], 1.0);
        assert_relative_eq!(coder.expected(&probs), edge, max_relative = 1e-12);
    }

    #[test]
    fn round_trip_error_stays_under_the_local_quantum_across_the_grid() {
        let coder = TwoHot::default();
        for i in 0..1000 {
            let x = -10.0 + 20.0 * i as f64 / 999.0;
            let r = symexp(x);
            let decoded = coder.expected(&coder.encode(r));
            let quantum = coder.local_quantum(r);
            assert!(
                (decoded - r).abs() <= quantum,
                "round trip at r={r}: decoded {decoded}, quantum {quantum}"
            );
        }
    }

    #[test]
    fn round_trip_of_a_mid_scale_reward_is_tight() {
        let coder = TwoHot::default();
        let decoded = coder.expected(&coder.encode(5.0));
        assert!((decoded - 5.0).abs() <= coder.local_quantum(5.0) / 2.0);
    }

    #[test]
    fn decode_logits_matches_expected_after_softmax() {
        let coder = TwoHot::new(5, -2.0, 2.0);
        let logits = vec![0.0; 5];
        // Uniform probabilities over symmetric centers give zero expectation.
        assert_relative_eq!(coder.decode_logits(&logits), 0.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn mass_always_sums_to_one_exactly(r in -25000.0f64..25000.0) {
            let coder = TwoHot::default();
            let probs = coder.encode(r);
            let sum: f64 = probs.iter().sum();
            prop_assert_eq!(sum, 1.0);
            prop_assert!(probs.iter().filter(|p| **p != 0.0).count() <= 2);
        }

        #[test]
        fn symlog_symexp_are_inverse(x in -20.0f64..20.0) {
            prop_assert!((symlog(symexp(x)) - x).abs() < 1e-9);
        }
    }
}
