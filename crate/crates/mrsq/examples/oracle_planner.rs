//! Runs the sampling-based planner over the exact chain model with
//! closed-form values, so every failure is a search failure rather than a
//! model error. Two probes: single planning calls whose horizon spans the
//! whole chain (can the search surface even one rewarding candidate?), and
//! full episodes replanned each step at the short default horizon. Random
//! candidates almost never survive the deep single call but a handful of
//! policy-seeded candidates makes it near-perfect; replanning at a short
//! horizon softens the gap, which is the case for keeping search horizons
//! short.
//!
//! Usage: cargo run --release --example oracle_planner -- [episodes]

use anyhow::Result;
use mrsq::analysis::{replanned_episode_success, search_call_success};
use mrsq::envs::NChainSpec;
use mrsq::harness::stream_rng;
use mrsq::planner::PlannerConfig;

fn main() -> Result<()> {
    let episodes: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(200);

    let spec = NChainSpec { states: 11, actions: 10 };
    let depth = spec.states - 1;
    let base = PlannerConfig::default();
    println!(
        "chain: {} states, {} actions, goal {depth} correct steps away",
        spec.states, spec.actions
    );
    println!(
        "search: {} candidates, {} iterations, {episodes} trials per arm\n",
        base.candidates, base.iterations
    );

    println!("single call, horizon {depth} (rewarding candidate surfaced)");
    for policy_candidates in [0usize, base.policy_candidates] {
        let config = PlannerConfig { horizon: depth, policy_candidates, ..base };
        let mut rng = stream_rng(7, "oracle-planner-calls");
        let rate = search_call_success(spec, &config, episodes, &mut rng);
        println!("  policy-seeded candidates {policy_candidates:>2}: {:>5.1}%", 100.0 * rate);
    }

    println!("\nfull episodes, horizon {} with replanning (goal reached)", base.horizon);
    for policy_candidates in [0usize, base.policy_candidates] {
        let config = PlannerConfig { policy_candidates, ..base };
        let mut rng = stream_rng(7, "oracle-planner-episodes");
        let rate = replanned_episode_success(spec, &config, episodes, &mut rng);
        println!("  policy-seeded candidates {policy_candidates:>2}: {:>5.1}%", 100.0 * rate);
    }
    Ok(())
}
