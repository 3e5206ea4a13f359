//! Separability diagnostics for a pool: linear-probe accuracy, mean
//! silhouette, and cluster purity against known labels.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::svm::{self, SvmParams};
use crate::dataset::{EmbeddingDataset, LabelAssignment};
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_FOLDS: usize = 5;

/// Stratified fold index of every row. Each populated class is shuffled and
/// dealt round-robin so fold sizes per class differ by at most one.
pub fn stratified_folds(labels: &LabelAssignment, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::param(format!("need at least 2 folds, got {folds}")));
    }
    if labels.populated_classes() < 2 {
        return Err(Error::SingleClass);
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); labels.num_classes()];
    for (i, &l) in labels.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    let mut assignment = vec![0; labels.len()];
    for (class, members) in by_class.iter_mut().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < folds {
            return Err(Error::ClassTooSmall {
                class,
                available: members.len(),
                required: folds,
            });
        }
        members.shuffle(&mut rng::substream(seed, "probe-folds", class as u64));
        for (pos, &row) in members.iter().enumerate() {
            assignment[row] = pos % folds;
        }
    }
    Ok(assignment)
}

/// Mean held-out accuracy of a linear SVM over stratified folds.
pub fn linear_probe(data: &EmbeddingDataset, labels: &LabelAssignment, folds: usize, seed: u64) -> Result<f64> {
    labels.check_len(data.len())?;
    let fold_of = stratified_folds(labels, folds, seed)?;
    let accuracies = (0..folds)
        .map(|f| {
            let (train, test): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|&i| fold_of[i] != f);
            let params = SvmParams::linear().with_seed(rng::derive_seed(seed, "probe-svm", f as u64));
            let model = svm::svm_train(&data.select_rows(&train)?, &labels.select_rows(&train), &params)?;
            let correct = test
                .par_iter()
                .filter(|&&i| argmax(&model.decision_values(data.row(i))) == labels.labels()[i])
                .count();
            Ok(correct as f64 / test.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(accuracies.iter().sum::<f64>() / folds as f64)
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = c;
        }
    }
    best
}

/// Fraction of points whose cluster's majority true class matches their own.
pub fn cluster_purity(clusters: &LabelAssignment, truth: &LabelAssignment) -> Result<f64> {
    truth.check_len(clusters.len())?;
    if clusters.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let k = truth.num_classes();
    let mut counts = vec![0usize; clusters.num_classes() * k];
    for (&c, &t) in clusters.labels().iter().zip(truth.labels()) {
        counts[c * k + t] += 1;
    }
    let majority: usize = counts.chunks(k).map(|row| row.iter().copied().max().unwrap_or(0)).sum();
    Ok(majority as f64 / clusters.len() as f64)
}

fn euclidean(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = f64::from(*x) - f64::from(*y);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Per-point silhouette `(b - a) / max(a, b)` under euclidean distance.
/// Members of singleton clusters score 0, as do points with `a = b = 0`.
pub fn silhouette_samples(data: &EmbeddingDataset, labels: &LabelAssignment) -> Result<Vec<f64>> {
    labels.check_len(data.len())?;
    if labels.populated_classes() < 2 {
        return Err(Error::SingleClass);
    }
    let sizes = labels.histogram();
    let lab = labels.labels();
    Ok((0..data.len())
        .into_par_iter()
        .map(|i| {
            let own = lab[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; sizes.len()];
            for j in 0..data.len() {
                if j != i {
                    sums[lab[j]] += euclidean(data.row(i), data.row(j));
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..sizes.len())
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom == 0.0 {
                0.0
            } else {
                (b - a) / denom
            }
        })
        .collect())
}

pub fn silhouette(data: &EmbeddingDataset, labels: &LabelAssignment) -> Result<f64> {
    let s = silhouette_samples(data, labels)?;
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityReport {
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub linear_probe_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub silhouette_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub purity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class_histogram: Option<Vec<usize>>,
}

impl SeparabilityReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// What [`report`] computes; label-dependent metrics need `labels`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    pub folds: usize,
    pub seed: u64,
    pub probe: bool,
    pub silhouette: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            folds: DEFAULT_FOLDS,
            seed: 0,
            probe: true,
            silhouette: true,
        }
    }
}

/// Diagnostics for the rows of `data` selected by `ids` (all rows when `None`).
/// `labels` and `clusters` are aligned with `data`. A metric whose
/// preconditions the subset does not meet is omitted rather than an error.
pub fn report(
    data: &EmbeddingDataset,
    ids: Option<&[u64]>,
    labels: Option<&LabelAssignment>,
    clusters: Option<&LabelAssignment>,
    options: &ReportOptions,
) -> Result<SeparabilityReport> {
    let rows: Vec<usize> = match ids {
        Some(ids) => data.rows_for_ids(ids)?,
        None => (0..data.len()).collect(),
    };
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let subset = data.select_rows(&rows)?;
    let labels = labels
        .map(|l| {
            l.check_len(data.len())?;
            Ok::<_, Error>(l.select_rows(&rows))
        })
        .transpose()?;
    let clusters = clusters
        .map(|c| {
            c.check_len(data.len())?;
            Ok::<_, Error>(c.select_rows(&rows))
        })
        .transpose()?;

    let mut out = SeparabilityReport {
        n: subset.len(),
        linear_probe_accuracy: None,
        silhouette_mean: None,
        purity: None,
        class_histogram: None,
    };
    if let Some(l) = &labels {
        let hist = l.histogram();
        let populated = l.populated_classes();
        if options.probe && populated >= 2 && hist.iter().all(|&c| c == 0 || c >= options.folds) {
            out.linear_probe_accuracy = Some(linear_probe(&subset, l, options.folds, options.seed)?);
        }
        if options.silhouette && populated >= 2 && subset.len() >= 3 {
            out.silhouette_mean = Some(silhouette(&subset, l)?);
        }
        if let Some(c) = &clusters {
            out.purity = Some(cluster_purity(c, l)?);
        }
        out.class_histogram = Some(hist);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Provenance;

    fn labels(v: Vec<usize>) -> LabelAssignment {
        LabelAssignment::infer(v, Provenance::Oracle).unwrap()
    }

    #[test]
    fn silhouette_of_two_points_per_cluster() {
        // Clusters {0, 1} and {10, 11} on a line.
        let data = EmbeddingDataset::from_rows(&[vec![0.0], vec![1.0], vec![10.0], vec![11.0]]).unwrap();
        let s = silhouette_samples(&data, &labels(vec![0, 0, 1, 1])).unwrap();
        // Point 0: a = 1, b = (10 + 11) / 2 = 10.5.
        assert!((s[0] - 9.5 / 10.5).abs() < 1e-12);
        // Point 1: a = 1, b = (9 + 10) / 2 = 9.5.
        assert!((s[1] - 8.5 / 9.5).abs() < 1e-12);
    }

    #[test]
    fn singleton_scores_zero() {
        let data = EmbeddingDataset::from_rows(&[vec![0.0], vec![1.0], vec![5.0]]).unwrap();
        let s = silhouette_samples(&data, &labels(vec![0, 0, 1])).unwrap();
        assert_eq!(s[2], 0.0);
    }

    #[test]
    fn coincident_points_score_zero() {
        let data = EmbeddingDataset::from_rows(&[vec![1.0], vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        let s = silhouette_samples(&data, &labels(vec![0, 0, 1, 1])).unwrap();
        assert!(s.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_class_is_an_error() {
        let data = EmbeddingDataset::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let l = LabelAssignment::new(vec![0, 0], 2, Provenance::Oracle).unwrap();
        assert!(matches!(silhouette(&data, &l), Err(Error::SingleClass)));
    }

    #[test]
    fn purity_counts_majorities() {
        let clusters = labels(vec![0, 0, 0, 1, 1, 1]);
        let truth = labels(vec![0, 0, 1, 1, 1, 0]);
        assert!((cluster_purity(&clusters, &truth).unwrap() - 4.0 / 6.0).abs() < 1e-12);
        assert_eq!(cluster_purity(&truth, &truth).unwrap(), 1.0);
    }

    #[test]
    fn folds_are_stratified() {
        let l = labels((0..23).map(|i| usize::from(i >= 10)).collect());
        let f = stratified_folds(&l, 5, 3).unwrap();
        for fold in 0..5 {
            let zeros = (0..23).filter(|&i| f[i] == fold && l.labels()[i] == 0).count();
            assert_eq!(zeros, 2);
            let ones = (0..23).filter(|&i| f[i] == fold && l.labels()[i] == 1).count();
            assert!((2..=3).contains(&ones));
        }
        assert!(stratified_folds(&labels(vec![0, 0, 1]), 2, 0).is_err());
    }

    #[test]
    fn report_omits_what_it_cannot_compute() {
        let data = EmbeddingDataset::from_rows(&[vec![0.0], vec![1.0], vec![5.0], vec![6.0]]).unwrap();
        let l = labels(vec![0, 0, 1, 1]);
        let r = report(&data, Some(&[2]), Some(&l), None, &ReportOptions::default()).unwrap();
        assert_eq!(r.n, 1);
        assert_eq!(r.class_histogram, Some(vec![0, 1]));
        assert_eq!(r.silhouette_mean, None);
        assert_eq!(r.linear_probe_accuracy, None);
        let r = report(&data, None, None, None, &ReportOptions::default()).unwrap();
        assert_eq!((r.n, r.class_histogram), (4, None));
        assert!(report(&data, Some(&[7]), None, None, &ReportOptions::default()).is_err());
    }

    #[test]
    fn probe_on_separated_line_is_perfect() {
        let rows: Vec<Vec<f32>> = (0..20).map(|i| vec![if i < 10 { i as f32 } else { 20.0 + i as f32 }]).collect();
        let data = EmbeddingDataset::from_rows(&rows).unwrap();
        let l = labels((0..20).map(|i| usize::from(i >= 10)).collect());
        assert_eq!(linear_probe(&data, &l, 5, 1).unwrap(), 1.0);
    }
}
