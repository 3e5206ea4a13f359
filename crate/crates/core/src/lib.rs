//! Confidence-based pruning of unlabeled embedding pools for semi-supervised
//! learning, the comparison pruners, and a small self-training harness to
//! measure what pruning buys.

pub mod classifiers;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod prune;
pub mod pseudo_label;
pub mod rng;
pub mod ssl_sim;
pub mod synthetic;

pub use classifiers::{ClassifierConfig, ClassifierKind, ConfidenceScores, TrainedClassifier};
pub use dataset::{EmbeddingDataset, EmbeddingFormat, LabelAssignment, Provenance, SplitSpec};
pub use error::{Error, ErrorKind, Result};
pub use prune::{LabelMode, Policy, PruneConfig, PruneResult};
