//! How much the selected action moves between training snapshots, measured
//! on a fixed set of probe states.

/// Mean squared action difference between consecutive snapshots. The input
/// is snapshot-major: `snapshots[k][p]` is the action chosen at probe `p`
/// when snapshot `k` was taken, with every component scaled to `[-1, 1]`.
/// Fewer than two snapshots yield an empty series.
pub fn policy_change_metric(snapshots: &[Vec<Vec<f64>>]) -> Vec<f64> {
    if snapshots.len() < 2 {
        return Vec::new();
    }
    let probes = snapshots[0].len();
    assert!(probes > 0, "need at least one probe state");
    let action_dim = snapshots[0][0].len();
    for snapshot in snapshots {
        assert_eq!(snapshot.len(), probes, "probe count changed between snapshots");
        for action in snapshot {
            assert_eq!(action.len(), action_dim, "action width changed between snapshots");
        }
    }

    snapshots
        .windows(2)
        .map(|pair| {
            let mut total = 0.0;
            for (before, after) in pair[0].iter().zip(&pair[1]) {
                for (b, a) in before.iter().zip(after) {
                    let diff = a - b;
                    total += diff * diff;
                }
            }
            total / (probes * action_dim) as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fewer_than_two_snapshots_yield_an_empty_series() {
        assert!(policy_change_metric(&[]).is_empty());
        assert!(policy_change_metric(&[vec![vec![0.5]]]).is_empty());
    }

    #[test]
    fn identical_snapshots_measure_zero() {
        let snapshot = vec![vec![0.3, -0.2], vec![-0.9, 0.1]];
        let series = policy_change_metric(&[snapshot.clone(), snapshot.clone(), snapshot]);
        assert_eq!(series, vec![0.0, 0.0]);
    }

    #[test]
    fn a_full_flip_of_a_one_dimensional_action_measures_four() {
        let before = vec![vec![-1.0], vec![-1.0], vec![-1.0]];
        let after = vec![vec![1.0], vec![1.0], vec![1.0]];
        assert_eq!(policy_change_metric(&[before, after]), vec![4.0]);
    }

    #[test]
    fn random_snapshots_match_a_direct_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let snapshots: Vec<Vec<Vec<f64>>> = (0..5)
            .map(|_| {
                (0..7)
                    .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .collect()
            })
            .collect();
        let series = policy_change_metric(&snapshots);
        assert_eq!(series.len(), 4);
        for (k, value) in series.iter().enumerate() {
            let mut total = 0.0;
            let mut count = 0usize;
            for p in 0..7 {
                for d in 0..3 {
                    let diff = snapshots[k + 1][p][d] - snapshots[k][p][d];
                    total += diff * diff;
                    count += 1;
                }
            }
            assert!((value - total / count as f64).abs() <= 1e-12);
        }
    }
}
