//! The "simple classifier" that scores how easy each example is: a linear or
//! RBF-kernel SVM, or a small fully connected network.

pub mod mlp;
pub mod svm;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{EmbeddingDataset, LabelAssignment, Provenance};
use crate::error::{Error, Result};

pub use mlp::{mlp_train, MlpModel, MlpParams};
pub use svm::{svm_train, Kernel, KernelKind, SvmEnsemble, SvmModel, SvmParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierKind {
    LinearSvm,
    RbfSvm,
    Mlp,
}

/// Hyperparameters of a simple classifier; the training seed is supplied
/// separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ClassifierConfig {
    LinearSvm {
        c: f64,
        tol: f64,
        max_passes: usize,
    },
    RbfSvm {
        c: f64,
        gamma: Option<f64>,
        tol: f64,
        max_passes: usize,
    },
    Mlp {
        hidden_sizes: Vec<usize>,
        epochs: usize,
        learning_rate: f64,
        batch_size: Option<usize>,
    },
}

impl ClassifierConfig {
    pub fn linear_svm() -> Self {
        ClassifierConfig::LinearSvm {
            c: svm::DEFAULT_C,
            tol: svm::DEFAULT_TOL,
            max_passes: svm::DEFAULT_MAX_PASSES,
        }
    }

    pub fn rbf_svm() -> Self {
        ClassifierConfig::RbfSvm {
            c: svm::DEFAULT_C,
            gamma: None,
            tol: svm::DEFAULT_TOL,
            max_passes: svm::DEFAULT_MAX_PASSES,
        }
    }

    pub fn mlp() -> Self {
        let p = MlpParams::default();
        ClassifierConfig::Mlp {
            hidden_sizes: p.hidden_sizes,
            epochs: p.epochs,
            learning_rate: p.learning_rate,
            batch_size: p.batch_size,
        }
    }

    pub fn kind(&self) -> ClassifierKind {
        match self {
            ClassifierConfig::LinearSvm { .. } => ClassifierKind::LinearSvm,
            ClassifierConfig::RbfSvm { .. } => ClassifierKind::RbfSvm,
            ClassifierConfig::Mlp { .. } => ClassifierKind::Mlp,
        }
    }

    pub fn svm_params(&self, seed: u64) -> Option<SvmParams> {
        match *self {
            ClassifierConfig::LinearSvm { c, tol, max_passes } => Some(SvmParams {
                c,
                tol,
                max_passes,
                seed,
                ..SvmParams::linear()
            }),
            ClassifierConfig::RbfSvm {
                c,
                gamma,
                tol,
                max_passes,
            } => Some(SvmParams {
                c,
                gamma,
                tol,
                max_passes,
                seed,
                ..SvmParams::rbf()
            }),
            ClassifierConfig::Mlp { .. } => None,
        }
    }

    pub fn train(
        &self,
        data: &EmbeddingDataset,
        labels: &LabelAssignment,
        seed: u64,
    ) -> Result<TrainedClassifier> {
        match self {
            ClassifierConfig::Mlp {
                hidden_sizes,
                epochs,
                learning_rate,
                batch_size,
            } => {
                let params = MlpParams {
                    hidden_sizes: hidden_sizes.clone(),
                    epochs: *epochs,
                    learning_rate: *learning_rate,
                    batch_size: *batch_size,
                    seed,
                };
                Ok(TrainedClassifier::Mlp(mlp_train(data, labels, &params)?))
            }
            svm_config => {
                let params = svm_config.svm_params(seed).expect("svm config");
                Ok(TrainedClassifier::Svm(svm_train(data, labels, &params)?))
            }
        }
    }
}

/// Per-example confidence; higher means more confidently assigned to its label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceScores {
    pub scores: Vec<f64>,
    pub classifier_kind: ClassifierKind,
    pub label_source: Provenance,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedClassifier {
    Svm(SvmEnsemble),
    Mlp(MlpModel),
}

impl TrainedClassifier {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            TrainedClassifier::Svm(e) => match e.kind() {
                KernelKind::Linear => ClassifierKind::LinearSvm,
                KernelKind::Rbf => ClassifierKind::RbfSvm,
            },
            TrainedClassifier::Mlp(_) => ClassifierKind::Mlp,
        }
    }

    fn dim(&self) -> usize {
        match self {
            TrainedClassifier::Svm(e) => e.dim(),
            TrainedClassifier::Mlp(m) => m.input_dim(),
        }
    }

    fn check_dim(&self, data: &EmbeddingDataset) -> Result<()> {
        if data.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: data.dim(),
            });
        }
        Ok(())
    }

    /// Raw per-class decision values (SVM margins or network logits).
    pub fn decision_values(&self, x: &[f32]) -> Vec<f64> {
        match self {
            TrainedClassifier::Svm(e) => e.decision_values(x),
            TrainedClassifier::Mlp(m) => m.logits(x),
        }
    }

    /// Arg-max class and its raw decision value for every row; ties go to the
    /// lower class index.
    pub fn predict(&self, data: &EmbeddingDataset) -> Result<Vec<(usize, f64)>> {
        self.check_dim(data)?;
        Ok((0..data.len())
            .into_par_iter()
            .map(|i| {
                let dv = self.decision_values(data.row(i));
                dv.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (c, &v)| {
                        if v > best.1 {
                            (c, v)
                        } else {
                            best
                        }
                    })
            })
            .collect())
    }

    /// Own-label confidence of every row.
    pub fn confidence(
        &self,
        data: &EmbeddingDataset,
        labels: &LabelAssignment,
    ) -> Result<ConfidenceScores> {
        match self {
            TrainedClassifier::Svm(e) => svm_confidence(e, data, labels),
            TrainedClassifier::Mlp(m) => mlp_confidence(m, data, labels),
        }
    }
}

/// Signed own-label SVM decision value; a geometric distance for linear kernels.
pub fn svm_confidence(
    models: &SvmEnsemble,
    data: &EmbeddingDataset,
    labels: &LabelAssignment,
) -> Result<ConfidenceScores> {
    labels.check_len(data.len())?;
    if data.dim() != models.dim() {
        return Err(Error::DimensionMismatch {
            expected: models.dim(),
            found: data.dim(),
        });
    }
    let scores = (0..data.len())
        .into_par_iter()
        .map(|i| models.own_label_score(data.row(i), labels.labels()[i]))
        .collect::<Result<Vec<_>>>()?;
    finish(scores, match models.kind() {
        KernelKind::Linear => ClassifierKind::LinearSvm,
        KernelKind::Rbf => ClassifierKind::RbfSvm,
    }, labels)
}

/// Pre-softmax logit of each row's own label.
pub fn mlp_confidence(
    model: &MlpModel,
    data: &EmbeddingDataset,
    labels: &LabelAssignment,
) -> Result<ConfidenceScores> {
    labels.check_len(data.len())?;
    if data.dim() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            found: data.dim(),
        });
    }
    if labels.num_classes() > model.num_outputs() {
        return Err(Error::LabelOutOfRange {
            label: labels.num_classes() - 1,
            num_classes: model.num_outputs(),
        });
    }
    let scores = (0..data.len())
        .into_par_iter()
        .map(|i| model.logits(data.row(i))[labels.labels()[i]])
        .collect();
    finish(scores, ClassifierKind::Mlp, labels)
}

fn finish(scores: Vec<f64>, kind: ClassifierKind, labels: &LabelAssignment) -> Result<ConfidenceScores> {
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Numerical(format!("non-finite confidence for row {i}")));
    }
    Ok(ConfidenceScores {
        scores,
        classifier_kind: kind,
        label_source: labels.provenance(),
    })
}
