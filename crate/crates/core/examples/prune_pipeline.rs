//! The full pipeline on an unlabeled pool: k-means pseudo-labels, an RBF SVM,
//! confidence scores, and the 60% most confident examples kept. The same
//! pool is pruned with the true labels for comparison.
//!
//! cargo run --example prune_pipeline

use prunessl::classifiers::ClassifierConfig;
use prunessl::metrics::{report, ReportOptions};
use prunessl::prune::{run_prunessl, LabelMode, PseudoLabelOptions};
use prunessl::synthetic::{make_synthetic, ScenarioKind};

fn main() -> prunessl::Result<()> {
    let (pool, truth) = make_synthetic(ScenarioKind::TwoGaussians, 1000, 1.5, 2, 21)?;
    let classifier = ClassifierConfig::rbf_svm();
    let options = ReportOptions::default();
    let full = report(&pool, None, Some(&truth), None, &options)?;
    println!("full pool       n {:>4}  probe {:.4}", full.n, full.linear_probe_accuracy.unwrap());

    for mode in [LabelMode::Pseudo, LabelMode::Oracle] {
        let pseudo = PseudoLabelOptions {
            k: Some(2),
            l2_normalize: false,
        };
        let result = run_prunessl(&pool, mode, Some(&truth), &classifier, 0.6, 21, &pseudo)?;
        let kept = report(&pool, Some(&result.kept_ids), Some(&truth), None, &options)?;
        println!(
            "{:<15} n {:>4}  probe {:.4}  classes kept {:?}",
            format!("{mode:?} pruned"),
            kept.n,
            kept.linear_probe_accuracy.unwrap(),
            result.class_histogram_kept.unwrap()
        );
    }
    Ok(())
}
