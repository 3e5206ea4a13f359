//! Trains the small network on a non-linear scenario and scores examples by
//! the logit of their own label.
//!
//! cargo run --example mlp_confidence

use prunessl::classifiers::{mlp_confidence, mlp_train, MlpParams};
use prunessl::synthetic::{make_synthetic, ScenarioKind};

fn main() -> prunessl::Result<()> {
    let (data, labels) = make_synthetic(ScenarioKind::RingVsBlob, 200, 1.5, 2, 2)?;
    let params = MlpParams {
        hidden_sizes: vec![32, 32],
        epochs: 100,
        seed: 2,
        ..MlpParams::default()
    };
    let model = mlp_train(&data, &labels, &params)?;
    let first = model.loss_history[0];
    let last = *model.loss_history.last().unwrap();
    println!("cross-entropy {first:.4} -> {last:.4} over {} epochs", params.epochs);

    let scores = mlp_confidence(&model, &data, &labels)?.scores;
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    println!("own-label logit: mean {mean:.3}, min {min:.3}");
    Ok(())
}
