//! Random and coverage pruning of the same pool, with kept-set separability.
//!
//! cargo run --example baseline_pruners

use prunessl::metrics::{report, ReportOptions};
use prunessl::prune::{prune_coverage, prune_random};
use prunessl::synthetic::{make_synthetic, ScenarioKind};

fn main() -> prunessl::Result<()> {
    let (pool, truth) = make_synthetic(ScenarioKind::TwoGaussians, 1000, 1.5, 2, 4)?;
    let options = ReportOptions::default();
    let random = prune_random(&pool, 0.6, 4)?;
    let coverage = prune_coverage(&pool, 50, 0.6, 4)?;
    for (name, result) in [("random", &random), ("coverage k=50", &coverage)] {
        let r = report(&pool, Some(&result.kept_ids), Some(&truth), None, &options)?;
        println!(
            "{name:<14} kept {:>4}  probe {:.4}  silhouette {:.4}",
            r.n,
            r.linear_probe_accuracy.unwrap(),
            r.silhouette_mean.unwrap()
        );
    }
    Ok(())
}
