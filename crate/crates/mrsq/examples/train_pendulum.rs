//! Trains the planning agent on the pendulum swing-up task at desk scale
//! and prints the evaluation curve.
//!
//! Usage: cargo run --release --example train_pendulum -- [seed] [steps] [out_dir]

use anyhow::Result;
use mrsq::envs::EnvConfig;
use mrsq::harness::{train, RunConfig};

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let steps: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(50_000);
    let out_dir = args.next().unwrap_or_else(|| format!("runs/pendulum_seed{seed}"));

    let mut cfg = RunConfig::desk(EnvConfig::Pendulum);
    cfg.run.seed = seed;
    cfg.run.total_steps = steps;
    cfg.run.out_dir = out_dir;

    let started = std::time::Instant::now();
    let outcome = train(&cfg)?;
    let elapsed = started.elapsed().as_secs_f64();
    println!(
        "seed {seed}: {} steps in {elapsed:.1}s ({:.0} steps/s)",
        outcome.steps,
        outcome.steps as f64 / elapsed
    );

    println!("\n  step  mean_return  mean_length");
    for (step, eval) in &outcome.evals {
        println!("{step:>6}  {:>11.2}  {:>11.1}", eval.mean_return, eval.mean_length);
    }
    println!("\nmetrics:    {}", outcome.metrics_path.display());
    println!("checkpoint: {}", outcome.checkpoint_path.display());
    Ok(())
}
