//! Labeled synthetic scenarios with known ground truth.
//!
//! `overlap` scales the noise of every scenario so that 1.5 is the reference
//! difficulty: for `two_gaussians` the class means sit at `(+-1.5, 0, ..)`
//! and the per-coordinate standard deviation is `overlap / 1.5`, so
//! `overlap = 1.5` is the unit-covariance case and `overlap = 0` collapses
//! each class onto its mean.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{EmbeddingDataset, LabelAssignment, Provenance};
use crate::error::{Error, Result};
use crate::rng;

/// Overlap at which `two_gaussians` has unit covariance.
pub const REFERENCE_OVERLAP: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Isotropic Gaussians with means `(+-1.5, 0, ..)`.
    TwoGaussians,
    /// Interleaved half circles.
    Moons,
    /// A Gaussian blob at the origin surrounded by a ring of radius 3.
    RingVsBlob,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [ScenarioKind::TwoGaussians, ScenarioKind::Moons, ScenarioKind::RingVsBlob];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::TwoGaussians => "two_gaussians",
            ScenarioKind::Moons => "moons",
            ScenarioKind::RingVsBlob => "ring_vs_blob",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::param(format!("unknown scenario {s:?}")))
    }
}

/// Draws `n_per_class` examples of each of the two classes. Ids run `0..2n`,
/// class 0 first.
pub fn make_synthetic(
    kind: ScenarioKind,
    n_per_class: usize,
    overlap: f64,
    dim: usize,
    seed: u64,
) -> Result<(EmbeddingDataset, LabelAssignment)> {
    if n_per_class < 2 {
        return Err(Error::param("need at least 2 examples per class"));
    }
    if !(overlap >= 0.0 && overlap.is_finite()) {
        return Err(Error::param(format!("overlap must be a non-negative number, got {overlap}")));
    }
    if dim < 2 {
        return Err(Error::param("synthetic scenarios need at least 2 dimensions"));
    }
    let scale = overlap / REFERENCE_OVERLAP;
    let mut rng = rng::stream(seed, "synthetic");
    let mut features = Vec::with_capacity(2 * n_per_class * dim);
    let mut labels = Vec::with_capacity(2 * n_per_class);
    let gauss = |sigma: f64, rng: &mut rng::StreamRng| -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        sigma * z
    };
    for class in 0..2usize {
        for _ in 0..n_per_class {
            let (x0, x1, sigma) = match kind {
                ScenarioKind::TwoGaussians => {
                    let mean = if class == 0 { -1.5 } else { 1.5 };
                    (mean + gauss(scale, &mut rng), gauss(scale, &mut rng), scale)
                }
                ScenarioKind::Moons => {
                    let t = rng.random_range(0.0..std::f64::consts::PI);
                    let sigma = 0.2 * scale;
                    let (cx, cy) = if class == 0 {
                        (t.cos(), t.sin())
                    } else {
                        (1.0 - t.cos(), 0.5 - t.sin())
                    };
                    (cx + gauss(sigma, &mut rng), cy + gauss(sigma, &mut rng), sigma)
                }
                ScenarioKind::RingVsBlob => {
                    let sigma = 0.5 * scale;
                    if class == 0 {
                        (gauss(scale, &mut rng), gauss(scale, &mut rng), sigma)
                    } else {
                        let t = rng.random_range(0.0..std::f64::consts::TAU);
                        let r = 3.0 + gauss(sigma, &mut rng);
                        (r * t.cos(), r * t.sin(), sigma)
                    }
                }
            };
            features.push(x0 as f32);
            features.push(x1 as f32);
            for _ in 2..dim {
                features.push(gauss(sigma, &mut rng) as f32);
            }
            labels.push(class);
        }
    }
    let ids = (0..(2 * n_per_class) as u64).collect();
    Ok((
        EmbeddingDataset::new(ids, features, dim)?,
        LabelAssignment::new(labels, 2, Provenance::Oracle)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_data() {
        for kind in ScenarioKind::ALL {
            let a = make_synthetic(kind, 20, 1.5, 3, 4).unwrap();
            assert_eq!(a, make_synthetic(kind, 20, 1.5, 3, 4).unwrap());
            assert_ne!(a.0, make_synthetic(kind, 20, 1.5, 3, 5).unwrap().0);
            assert_eq!(a.0.len(), 40);
            assert_eq!(a.1.histogram(), vec![20, 20]);
        }
    }

    #[test]
    fn scenario_names_parse() {
        assert_eq!("moons".parse::<ScenarioKind>().unwrap(), ScenarioKind::Moons);
        assert!("spirals".parse::<ScenarioKind>().is_err());
    }

    #[test]
    fn zero_overlap_collapses_gaussians_to_means() {
        let (data, labels) = make_synthetic(ScenarioKind::TwoGaussians, 5, 0.0, 2, 0).unwrap();
        for i in 0..data.len() {
            let expected = if labels.labels()[i] == 0 { -1.5 } else { 1.5 };
            assert_eq!(data.row(i), &[expected, 0.0]);
        }
    }
}
