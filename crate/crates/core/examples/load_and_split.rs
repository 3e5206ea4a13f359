//! Writes a synthetic dataset in both embedding formats, loads it back, and
//! splits it into a class-balanced labeled pool, an unlabeled pool and a test
//! split.
//!
//! cargo run --example load_and_split

use prunessl::dataset::{self, EmbeddingFormat};
use prunessl::synthetic::{make_synthetic, ScenarioKind};

fn main() -> prunessl::Result<()> {
    let (data, labels) = make_synthetic(ScenarioKind::Moons, 200, 1.5, 4, 11)?;
    let dir = std::env::temp_dir().join("prunessl-load-and-split");
    std::fs::create_dir_all(&dir).expect("temp dir");

    let bin = dir.join("moons.sepb");
    let csv = dir.join("moons.csv");
    dataset::write_embeddings(&data, &bin, EmbeddingFormat::Binary)?;
    dataset::write_embeddings(&data, &csv, EmbeddingFormat::Csv)?;
    dataset::write_labels(&dir.join("labels.csv"), data.ids(), &labels)?;

    let from_bin = dataset::load_embeddings(&bin, EmbeddingFormat::Binary)?;
    let from_csv = dataset::load_embeddings(&csv, EmbeddingFormat::Csv)?;
    assert_eq!(from_bin, data);
    assert_eq!(from_csv, data);
    let labels = dataset::load_labels(&dir.join("labels.csv"), from_bin.ids(), true)?;

    let split = dataset::make_split(&from_bin, &labels, 20, 0.25, 5)?;
    println!(
        "n = {}, d = {}: |L| = {}, |U| = {}, |test| = {}",
        from_bin.len(),
        from_bin.dim(),
        split.labeled_ids.len(),
        split.unlabeled_ids.len(),
        split.test_ids.len()
    );
    println!("files in {}", dir.display());
    Ok(())
}
