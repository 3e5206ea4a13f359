//! Self-trains on the full, random, pruned, oracle-pruned and coverage-pruned
//! pools of the overlapping-Gaussians scenario and prints mean final accuracy.
//!
//! cargo run --release --example compare_pools -- [repetitions] [seed] [labels per class]

use std::time::Instant;

use prunessl::ssl_sim::{compare_pools, Scenario, SimulationConfig};

fn main() -> prunessl::Result<()> {
    let mut args = std::env::args().skip(1);
    let reps = args.next().map_or(5, |a| a.parse().expect("repetitions"));
    let seed = args.next().map_or(1, |a| a.parse().expect("seed"));

    let mut scenario = Scenario::overlapping_gaussians();
    if let Some(per_class) = args.next() {
        scenario.per_class_labeled = per_class.parse().expect("labels per class");
    }
    let config = SimulationConfig {
        repetitions: reps,
        ..SimulationConfig::new(seed)
    };
    let start = Instant::now();
    let report = compare_pools(&scenario, &config)?;
    for s in &report.summary {
        println!(
            "{:<9} final accuracy {:.4} +- {:.4}  (pool {:.0})",
            s.variant.name(),
            s.final_accuracy.mean,
            s.final_accuracy.stderr,
            s.pool_size.mean
        );
    }
    println!("{} repetitions in {:.1?}", reps, start.elapsed());
    Ok(())
}
