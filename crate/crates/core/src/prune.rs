//! Selection of the reduced unlabeled pool.
//!
//! * [`run_prunessl`]: pseudo-label (or take known labels), train the simple
//!   classifier, score every example by its own-label confidence and keep the
//!   highest-scoring fraction.
//! * [`prune_random`]: uniform subsample of the same size.
//! * [`prune_coverage`]: keep the examples closest to their k-means centroid.
//!
//! Kept-set size is always `ceil(keep_fraction * n)`. Ranking is by score,
//! descending, with the lower id winning ties.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::classifiers::{ClassifierConfig, ClassifierKind, ConfidenceScores};
use crate::dataset::{self, EmbeddingDataset, LabelAssignment, Provenance};
use crate::error::{Error, Result};
use crate::pseudo_label::{self, KMeansParams};
use crate::rng;

/// Fraction of the unlabeled pool retained by default.
pub const DEFAULT_KEEP_FRACTION: f64 = 0.6;
pub const DEFAULT_COVERAGE_K: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Confidence,
    Random,
    Coverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    Pseudo,
    Oracle,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    pub keep_fraction: f64,
    pub policy: Policy,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label_mode: Option<LabelMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage_k: Option<usize>,
    pub seed: u64,
}

/// Provenance details that let a reader tell `U'_prune` from `U'_oracle`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PruneMetadata {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label_provenance: Option<Provenance>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classifier: Option<ClassifierConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classifier_kind: Option<ClassifierKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pseudo_k: Option<usize>,
    pub l2_normalized: bool,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneResult {
    /// Ascending ids of the retained pool.
    pub kept_ids: Vec<u64>,
    /// Ascending ids of the removed examples.
    pub pruned_ids: Vec<u64>,
    /// Per-row scores aligned with the pruned dataset (absent for random).
    pub scores: Option<Vec<f64>>,
    /// Score of the lowest-ranked kept example.
    pub threshold: Option<f64>,
    pub config: PruneConfig,
    pub class_histogram_kept: Option<Vec<usize>>,
    pub metadata: PruneMetadata,
    /// k-means labels of every row when the pseudo-labeling step ran.
    #[serde(skip)]
    pub pseudo_labels: Option<LabelAssignment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub kept_min: f64,
    pub pruned_max: Option<f64>,
}

/// The serialized form of a [`PruneResult`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PruneDocument {
    pub config: PruneConfig,
    pub metadata: PruneMetadata,
    pub threshold: Option<f64>,
    pub kept_ids: Vec<u64>,
    pub pruned_ids: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class_histogram_kept: Option<Vec<usize>>,
    pub score_stats: Option<ScoreStats>,
}

impl PruneResult {
    pub fn score_stats(&self, data: &EmbeddingDataset) -> Option<ScoreStats> {
        let scores = self.scores.as_ref()?;
        let kept: HashSet<u64> = self.kept_ids.iter().copied().collect();
        let mut kept_min = f64::INFINITY;
        let mut pruned_max: Option<f64> = None;
        for (id, &s) in data.ids().iter().zip(scores) {
            if kept.contains(id) {
                kept_min = kept_min.min(s);
            } else {
                pruned_max = Some(pruned_max.map_or(s, |m| m.max(s)));
            }
        }
        Some(ScoreStats {
            min: scores.iter().copied().fold(f64::INFINITY, f64::min),
            max: scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: scores.iter().sum::<f64>() / scores.len() as f64,
            kept_min,
            pruned_max,
        })
    }

    pub fn document(&self, data: &EmbeddingDataset) -> PruneDocument {
        PruneDocument {
            config: self.config.clone(),
            metadata: self.metadata.clone(),
            threshold: self.threshold,
            kept_ids: self.kept_ids.clone(),
            pruned_ids: self.pruned_ids.clone(),
            class_histogram_kept: self.class_histogram_kept.clone(),
            score_stats: self.score_stats(data),
        }
    }

    pub fn to_json(&self, data: &EmbeddingDataset) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.document(data))?)
    }

    /// Writes the id-only CSV of the kept set.
    pub fn write_kept_csv(&self, path: &Path) -> Result<()> {
        dataset::write_id_list(path, &self.kept_ids)
    }

    /// Per-class counts of the kept set under `labels` (aligned with `data`).
    pub fn class_histogram(&self, data: &EmbeddingDataset, labels: &LabelAssignment) -> Result<Vec<usize>> {
        labels.check_len(data.len())?;
        let rows = data.rows_for_ids(&self.kept_ids)?;
        Ok(labels.select_rows(&rows).histogram())
    }
}

/// `ceil(keep_fraction * n)`, ignoring floating-point noise just above an integer.
pub fn keep_count(n: usize, keep_fraction: f64) -> usize {
    let x = keep_fraction * n as f64;
    let nearest = x.round();
    let count = if (x - nearest).abs() <= 1e-9 * (n as f64).max(1.0) {
        nearest
    } else {
        x.ceil()
    };
    (count as usize).clamp(1, n)
}

fn validate_keep(keep_fraction: f64) -> Result<()> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::param(format!(
            "keep fraction must lie in (0, 1], got {keep_fraction}"
        )));
    }
    Ok(())
}

/// Row indices ranked by `(score desc, id asc)`.
pub fn rank_rows(ids: &[u64], scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(ids[a].cmp(&ids[b])));
    order
}

fn split_by_rows(data: &EmbeddingDataset, kept_rows: &[usize]) -> (Vec<u64>, Vec<u64>) {
    let mut is_kept = vec![false; data.len()];
    for &r in kept_rows {
        is_kept[r] = true;
    }
    let mut kept = Vec::with_capacity(kept_rows.len());
    let mut pruned = Vec::with_capacity(data.len() - kept_rows.len());
    for (r, &id) in data.ids().iter().enumerate() {
        if is_kept[r] {
            kept.push(id);
        } else {
            pruned.push(id);
        }
    }
    kept.sort_unstable();
    pruned.sort_unstable();
    (kept, pruned)
}

fn top_fraction(
    data: &EmbeddingDataset,
    scores: Vec<f64>,
    keep_fraction: f64,
    config: PruneConfig,
) -> Result<PruneResult> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    validate_keep(keep_fraction)?;
    if scores.len() != data.len() {
        return Err(Error::LengthMismatch {
            expected: data.len(),
            found: scores.len(),
        });
    }
    let count = keep_count(data.len(), keep_fraction);
    let ranked = rank_rows(data.ids(), &scores);
    let threshold = scores[ranked[count - 1]];
    let (kept_ids, pruned_ids) = split_by_rows(data, &ranked[..count]);
    Ok(PruneResult {
        kept_ids,
        pruned_ids,
        scores: Some(scores),
        threshold: Some(threshold),
        config,
        class_histogram_kept: None,
        metadata: PruneMetadata {
            n: data.len(),
            ..PruneMetadata::default()
        },
        pseudo_labels: None,
    })
}

/// Keeps the `ceil(keep_fraction * n)` highest-scoring examples.
pub fn prune_confidence(
    data: &EmbeddingDataset,
    scores: &ConfidenceScores,
    keep_fraction: f64,
) -> Result<PruneResult> {
    let config = PruneConfig {
        keep_fraction,
        policy: Policy::Confidence,
        label_mode: None,
        coverage_k: None,
        seed: 0,
    };
    let mut result = top_fraction(data, scores.scores.clone(), keep_fraction, config)?;
    result.metadata.classifier_kind = Some(scores.classifier_kind);
    result.metadata.label_provenance = Some(scores.label_source);
    Ok(result)
}

/// Uniform sample without replacement of `ceil(keep_fraction * n)` examples.
pub fn prune_random(data: &EmbeddingDataset, keep_fraction: f64, seed: u64) -> Result<PruneResult> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    validate_keep(keep_fraction)?;
    let count = keep_count(data.len(), keep_fraction);
    let mut rng = rng::stream(seed, "prune-random");
    let rows = index::sample(&mut rng, data.len(), count).into_vec();
    let (kept_ids, pruned_ids) = split_by_rows(data, &rows);
    Ok(PruneResult {
        kept_ids,
        pruned_ids,
        scores: None,
        threshold: None,
        config: PruneConfig {
            keep_fraction,
            policy: Policy::Random,
            label_mode: None,
            coverage_k: None,
            seed,
        },
        class_histogram_kept: None,
        metadata: PruneMetadata {
            n: data.len(),
            ..PruneMetadata::default()
        },
        pseudo_labels: None,
    })
}

/// Keeps the examples nearest to their k-means centroid (score = negative
/// euclidean distance).
pub fn prune_coverage(
    data: &EmbeddingDataset,
    coverage_k: usize,
    keep_fraction: f64,
    seed: u64,
) -> Result<PruneResult> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    validate_keep(keep_fraction)?;
    if coverage_k == 0 || coverage_k > data.len() {
        return Err(Error::param(format!(
            "coverage k = {coverage_k} must lie in [1, n = {}]",
            data.len()
        )));
    }
    let model = pseudo_label::kmeans_fit(
        data,
        &KMeansParams::new(coverage_k, rng::derive_seed(seed, "coverage-kmeans", 0)),
    )?;
    let scores = pseudo_label::distances_to_centroids(&model, data)?
        .into_iter()
        .map(|d| -d)
        .collect();
    let config = PruneConfig {
        keep_fraction,
        policy: Policy::Coverage,
        label_mode: None,
        coverage_k: Some(coverage_k),
        seed,
    };
    top_fraction(data, scores, keep_fraction, config)
}

/// How the pseudo-labeling step runs in [`run_prunessl`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[derive(Default)]
pub struct PseudoLabelOptions {
    /// k-means cluster count; defaults to the class count of supplied labels.
    pub k: Option<usize>,
    /// Cluster on L2-normalized rows.
    pub l2_normalize: bool,
}


/// Trains `classifier` on `labels`, scores every example by its own-label
/// confidence and keeps the top fraction.
pub fn prune_with_labels(
    data: &EmbeddingDataset,
    labels: &LabelAssignment,
    classifier: &ClassifierConfig,
    keep_fraction: f64,
    seed: u64,
) -> Result<PruneResult> {
    validate_keep(keep_fraction)?;
    labels.check_len(data.len())?;
    let model = classifier.train(data, labels, rng::derive_seed(seed, "prune-classifier", 0))?;
    let scores = model.confidence(data, labels)?;
    let mut result = prune_confidence(data, &scores, keep_fraction)?;
    result.config.seed = seed;
    result.metadata.classifier = Some(classifier.clone());
    result.class_histogram_kept = Some(result.class_histogram(data, labels)?);
    Ok(result)
}

/// Runs the full pipeline on the unlabeled pool `data`: obtain labels
/// (k-means pseudo-labels, or the supplied labels), train the simple
/// classifier, score, and keep the most confident fraction.
///
/// In pseudo mode, supplied `labels` only set the default `k` and the kept
/// class histogram; they never influence which examples are kept.
pub fn run_prunessl(
    data: &EmbeddingDataset,
    label_mode: LabelMode,
    labels: Option<&LabelAssignment>,
    classifier: &ClassifierConfig,
    keep_fraction: f64,
    seed: u64,
    pseudo: &PseudoLabelOptions,
) -> Result<PruneResult> {
    validate_keep(keep_fraction)?;
    let (used, pseudo_k) = match label_mode {
        LabelMode::Pseudo => {
            let k = pseudo
                .k
                .or(labels.map(LabelAssignment::num_classes))
                .ok_or_else(|| Error::param("pseudo mode needs a cluster count k"))?;
            let clustered = if pseudo.l2_normalize {
                data.l2_normalized()
            } else {
                data.clone()
            };
            let params = KMeansParams::new(k, rng::derive_seed(seed, "pseudo-kmeans", 0));
            let model = pseudo_label::kmeans_fit(&clustered, &params)?;
            (pseudo_label::kmeans_assign(&model, &clustered)?, Some(k))
        }
        LabelMode::Oracle => {
            let l = labels.ok_or_else(|| Error::param("oracle mode needs labels"))?;
            (pseudo_label::oracle_labels(l), None)
        }
        LabelMode::External => {
            let l = labels.ok_or_else(|| Error::param("external mode needs labels"))?;
            (l.clone().with_provenance(Provenance::External), None)
        }
    };
    let mut result = prune_with_labels(data, &used, classifier, keep_fraction, seed)?;
    if let (LabelMode::Pseudo, Some(truth)) = (label_mode, labels) {
        result.class_histogram_kept = Some(result.class_histogram(data, truth)?);
    }
    if label_mode == LabelMode::Pseudo {
        result.pseudo_labels = Some(used);
    }
    result.config.label_mode = Some(label_mode);
    result.metadata.pseudo_k = pseudo_k;
    result.metadata.l2_normalized = pseudo.l2_normalize && label_mode == LabelMode::Pseudo;
    Ok(result)
}
