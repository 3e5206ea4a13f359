//! Trains linear and RBF SVMs with the SMO solver and prints the least and
//! most confident examples under their own labels.
//!
//! cargo run --example svm_confidence

use prunessl::classifiers::ClassifierConfig;
use prunessl::synthetic::{make_synthetic, ScenarioKind};

fn main() -> prunessl::Result<()> {
    let (data, labels) = make_synthetic(ScenarioKind::TwoGaussians, 300, 1.5, 2, 8)?;
    for config in [ClassifierConfig::linear_svm(), ClassifierConfig::rbf_svm()] {
        let model = config.train(&data, &labels, 8)?;
        let scores = model.confidence(&data, &labels)?.scores;
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
        let show = |i: usize| format!("id {:>3} at {:?} -> {:+.3}", data.ids()[i], data.row(i), scores[i]);
        println!("{:?}", config.kind());
        println!("  least confident: {}", show(order[0]));
        println!("  most confident:  {}", show(order[order.len() - 1]));
        let negative = scores.iter().filter(|&&s| s < 0.0).count();
        println!("  {negative} of {} examples sit on the wrong side of the boundary", data.len());
    }
    Ok(())
}
