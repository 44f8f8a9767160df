//! Compares the closed-form random-search success rate on the chain task
//! against Monte-Carlo simulation on the true environment, over a grid of
//! action counts, depths, and sample budgets.
//!
//! Usage: cargo run --release --example nchain_search -- [trials]

use anyhow::Result;
use mrsq::analysis::{search_success_probability, simulate_random_search, SearchFailureQuery};
use mrsq::harness::stream_rng;

fn main() -> Result<()> {
    let trials: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(2000);
    let mut rng = stream_rng(0, "nchain-search-example");

    println!("{:>3} {:>3} {:>6} {:>12} {:>12} {:>9}", "A", "n", "m", "closed", "empirical", "diff");
    for &actions in &[2usize, 4, 10] {
        for &depth in &[2usize, 3, 4] {
            for &samples in &[10usize, 100] {
                let closed = search_success_probability(actions, depth, samples);
                let query = SearchFailureQuery {
                    actions,
                    depth,
                    samples,
                    trials,
                    exhaustive: false,
                };
                let empirical = simulate_random_search(&query, &mut rng);
                println!(
                    "{actions:>3} {depth:>3} {samples:>6} {closed:>12.6} {empirical:>12.6} {:>+9.4}",
                    empirical - closed
                );
            }
        }
    }
    println!("\nempirical rates average {trials} independent trials per cell");
    Ok(())
}
