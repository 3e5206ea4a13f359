//! Pseudo-labels for the unlabeled pool: k-means (k-means++ seeding followed by
//! Lloyd iterations) in the embedding space, or passthrough of known labels.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{EmbeddingDataset, LabelAssignment, Provenance};
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_MAX_ITERS: usize = 300;
pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub k: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    /// Row-major `k x dim`.
    pub centroids: Vec<f64>,
    pub k: usize,
    pub dim: usize,
    pub inertia: f64,
    pub iterations_run: usize,
    /// Inertia after every assignment step, starting with the seeding.
    pub inertia_trace: Vec<f64>,
    /// Row indices of the points chosen by k-means++ seeding.
    pub seed_points: Vec<usize>,
    pub converged: bool,
}

impl KMeansModel {
    pub fn centroid(&self, c: usize) -> &[f64] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }

    /// Nearest centroid and the squared distance to it, lowest index on ties.
    pub fn nearest(&self, x: &[f32]) -> (usize, f64) {
        nearest(&self.centroids, self.dim, x)
    }
}

pub(crate) fn sq_dist(x: &[f32], c: &[f64]) -> f64 {
    x.iter()
        .zip(c)
        .map(|(&a, &b)| {
            let d = f64::from(a) - b;
            d * d
        })
        .sum()
}

fn nearest(centroids: &[f64], dim: usize, x: &[f32]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(x, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign_all(data: &EmbeddingDataset, centroids: &[f64]) -> Vec<(usize, f64)> {
    let dim = data.dim();
    (0..data.len())
        .into_par_iter()
        .map(|i| nearest(centroids, dim, data.row(i)))
        .collect()
}

fn kmeans_plus_plus(data: &EmbeddingDataset, k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let n = data.len();
    let to_f64 = |i: usize| data.row(i).iter().map(|&v| f64::from(v)).collect::<Vec<_>>();

    let first = rng.random_range(0..n);
    let mut chosen = vec![first];
    let mut dist: Vec<f64> = (0..n).map(|i| sq_dist(data.row(i), &to_f64(first))).collect();
    while chosen.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in dist.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `target` just above the final partial sum.
            pick.unwrap_or_else(|| dist.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            // Every point coincides with a chosen centre: take the first unused row.
            (0..n).find(|i| !chosen.contains(i)).unwrap()
        };
        chosen.push(next);
        let c = to_f64(next);
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min(sq_dist(data.row(i), &c));
        }
    }
    chosen
}

/// Lloyd's algorithm from k-means++ seeds.
///
/// Iteration stops once an update step would move no centroid by more than
/// `tol` (euclidean), or after `max_iters` update steps. A cluster that empties out is re-seeded at the point
/// farthest from its current centroid.
pub fn kmeans_fit(data: &EmbeddingDataset, params: &KMeansParams) -> Result<KMeansModel> {
    let n = data.len();
    let dim = data.dim();
    let k = params.k;
    if k == 0 {
        return Err(Error::param("k must be at least 1"));
    }
    if k > n {
        return Err(Error::param(format!("k = {k} exceeds n = {n}")));
    }
    if params.max_iters == 0 {
        return Err(Error::param("max_iters must be at least 1"));
    }
    if !(params.tol >= 0.0) {
        return Err(Error::param("tol must be non-negative"));
    }

    let mut rng = rng::stream(params.seed, "kmeans-init");
    let seeds = kmeans_plus_plus(data, k, &mut rng);
    let mut centroids: Vec<f64> = seeds
        .iter()
        .flat_map(|&i| data.row(i).iter().map(|&v| f64::from(v)))
        .collect();

    let mut assignment = assign_all(data, &centroids);
    let mut trace = vec![assignment.iter().map(|a| a.1).sum::<f64>()];
    let mut iterations = 0;
    let mut converged = false;

    loop {
        // Sequential, index-ordered reduction keeps the result independent of
        // the thread count used for assignment.
        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &(c, _)) in assignment.iter().enumerate() {
            counts[c] += 1;
            for (s, &v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(data.row(i)) {
                *s += f64::from(v);
            }
        }
        let mut next = centroids.clone();
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..dim {
                    next[c * dim + j] = sums[c * dim + j] / counts[c] as f64;
                }
            }
        }
        let mut taken = vec![false; n];
        for c in (0..k).filter(|&c| counts[c] == 0) {
            let far = assignment
                .iter()
                .enumerate()
                .filter(|(i, _)| !taken[*i])
                .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i)
                .expect("k <= n leaves a free point");
            taken[far] = true;
            for j in 0..dim {
                next[c * dim + j] = f64::from(data.row(far)[j]);
            }
        }

        let shift = next
            .chunks_exact(dim)
            .zip(centroids.chunks_exact(dim))
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        // The current centroids are within `tol` of the means of the points
        // assigned to them: a fixed point up to tolerance.
        if shift <= params.tol {
            converged = true;
            break;
        }
        if iterations == params.max_iters {
            break;
        }
        iterations += 1;
        centroids = next;
        assignment = assign_all(data, &centroids);
        trace.push(assignment.iter().map(|a| a.1).sum::<f64>());
    }

    if centroids.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite centroid".into()));
    }
    Ok(KMeansModel {
        centroids,
        k,
        dim,
        inertia: *trace.last().unwrap(),
        iterations_run: iterations,
        inertia_trace: trace,
        seed_points: seeds,
        converged,
    })
}

/// Labels every row with its nearest centroid; provenance is `kmeans`.
///
/// With `k == 1` the labels still carry a class count of two so that the
/// result is a valid [`LabelAssignment`].
pub fn kmeans_assign(model: &KMeansModel, data: &EmbeddingDataset) -> Result<LabelAssignment> {
    if data.dim() != model.dim {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            found: data.dim(),
        });
    }
    let labels = assign_all(data, &model.centroids)
        .into_iter()
        .map(|(c, _)| c)
        .collect();
    LabelAssignment::new(labels, model.k.max(2), Provenance::Kmeans)
}

/// Euclidean distance of every row to its nearest centroid.
pub fn distances_to_centroids(model: &KMeansModel, data: &EmbeddingDataset) -> Result<Vec<f64>> {
    if data.dim() != model.dim {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            found: data.dim(),
        });
    }
    Ok(assign_all(data, &model.centroids)
        .into_iter()
        .map(|(_, d)| d.sqrt())
        .collect())
}

/// Known labels passed through unchanged, marked as oracle labels.
pub fn oracle_labels(labels: &LabelAssignment) -> LabelAssignment {
    labels.clone().with_provenance(Provenance::Oracle)
}
