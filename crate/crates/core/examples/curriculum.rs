//! Self-trains on the pruned pool, then reintroduces the pruned examples and
//! keeps going; compares against a run that never pruned.
//!
//! cargo run --release --example curriculum -- [repetitions] [seed]

use prunessl::ssl_sim::{curriculum_reintroduce, Scenario, SimulationConfig};

fn main() -> prunessl::Result<()> {
    let mut args = std::env::args().skip(1);
    let reps = args.next().map_or(5, |a| a.parse().expect("repetitions"));
    let seed = args.next().map_or(1, |a| a.parse().expect("seed"));

    let config = SimulationConfig {
        repetitions: reps,
        ..SimulationConfig::new(seed)
    };
    let report = curriculum_reintroduce(&Scenario::overlapping_gaussians(), &config, 10, 10)?;
    let s = &report.summary;
    for (name, m) in [
        ("phase 1 final", s.phase1_final),
        ("phase 1 peak", s.phase1_peak),
        ("phase 2 final", s.phase2_final),
        ("never pruned", s.never_pruned_final),
    ] {
        println!("{name:<14} {:.4} +- {:.4}", m.mean, m.stderr);
    }
    Ok(())
}
