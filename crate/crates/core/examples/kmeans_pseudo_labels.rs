//! Pseudo-labels an unlabeled pool with k-means and measures how well the
//! clusters agree with the hidden classes.
//!
//! cargo run --example kmeans_pseudo_labels

use prunessl::metrics::cluster_purity;
use prunessl::pseudo_label::{kmeans_assign, kmeans_fit, KMeansParams};
use prunessl::synthetic::{make_synthetic, ScenarioKind};

fn main() -> prunessl::Result<()> {
    for kind in [ScenarioKind::TwoGaussians, ScenarioKind::Moons, ScenarioKind::RingVsBlob] {
        let (data, truth) = make_synthetic(kind, 500, 1.5, 2, 3)?;
        let model = kmeans_fit(&data, &KMeansParams::new(2, 3))?;
        let clusters = kmeans_assign(&model, &data)?;
        println!(
            "{kind:<14} inertia {:>9.2} after {:>2} iterations, purity {:.3}",
            model.inertia,
            model.iterations_run,
            cluster_purity(&clusters, &truth)?
        );
    }
    Ok(())
}
