//! Linear probe, silhouette and cluster purity for each synthetic scenario,
//! printed as the JSON the `report` subcommand writes.
//!
//! cargo run --example separability_report

use prunessl::metrics::{report, ReportOptions};
use prunessl::pseudo_label::{kmeans_assign, kmeans_fit, KMeansParams};
use prunessl::synthetic::{make_synthetic, ScenarioKind};

fn main() -> prunessl::Result<()> {
    for kind in [ScenarioKind::TwoGaussians, ScenarioKind::Moons, ScenarioKind::RingVsBlob] {
        let (data, truth) = make_synthetic(kind, 300, 1.5, 2, 6)?;
        let clusters = kmeans_assign(&kmeans_fit(&data, &KMeansParams::new(2, 6))?, &data)?;
        let r = report(&data, None, Some(&truth), Some(&clusters), &ReportOptions::default())?;
        println!("{kind}: {}", serde_json::to_string(&r)?);
    }
    Ok(())
}
