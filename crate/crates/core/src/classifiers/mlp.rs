//! Small fully connected network: ReLU hidden layers, linear output logits,
//! softmax cross-entropy loss, mini-batch gradient descent.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{EmbeddingDataset, LabelAssignment};
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_EPOCHS: usize = 200;
pub const DEFAULT_LEARNING_RATE: f64 = 1e-2;
pub const DEFAULT_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden_sizes: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    /// `None` uses `min(64, n)`.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![DEFAULT_HIDDEN],
            epochs: DEFAULT_EPOCHS,
            learning_rate: DEFAULT_LEARNING_RATE,
            batch_size: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// Row-major `out x in`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub inputs: usize,
    pub outputs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layer_sizes: Vec<usize>,
    pub layers: Vec<Layer>,
    /// Mean training loss per epoch.
    pub loss_history: Vec<f64>,
}

/// Gradient with the same shape as [`MlpModel::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradient {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGradient {
    pub fn flatten(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b).copied())
            .collect()
    }
}

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

impl MlpModel {
    /// He-initialised network with zero biases.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::param("layer sizes must be non-empty and positive"));
        }
        let mut rng = rng::stream(seed, "mlp-init");
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let normal = Normal::new(0.0, (2.0 / inputs as f64).sqrt()).unwrap();
                Layer {
                    weights: (0..inputs * outputs).map(|_| normal.sample(&mut rng)).collect(),
                    biases: vec![0.0; outputs],
                    inputs,
                    outputs,
                }
            })
            .collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            layers,
            loss_history: Vec::new(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn num_outputs(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Activations of every layer; the last entry holds the logits.
    fn forward(&self, x: &[f32]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.iter().map(|&v| f64::from(v)).collect::<Vec<_>>()];
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let input = acts.last().unwrap();
            let out: Vec<f64> = (0..layer.outputs)
                .map(|o| {
                    let z = layer.weights[o * layer.inputs..(o + 1) * layer.inputs]
                        .iter()
                        .zip(input)
                        .map(|(w, a)| w * a)
                        .sum::<f64>()
                        + layer.biases[o];
                    if li == last { z } else { relu(z) }
                })
                .collect();
            acts.push(out);
        }
        acts
    }

    pub fn logits(&self, x: &[f32]) -> Vec<f64> {
        self.forward(x).pop().unwrap()
    }

    /// Mean softmax cross-entropy over `rows` and its gradient.
    pub fn loss_and_gradient(
        &self,
        data: &EmbeddingDataset,
        labels: &[usize],
        rows: &[usize],
    ) -> (f64, MlpGradient) {
        let mut grad = MlpGradient {
            weights: self.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: self.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        };
        let scale = 1.0 / rows.len() as f64;
        let mut loss = 0.0;
        for &r in rows {
            let acts = self.forward(data.row(r));
            let logits = acts.last().unwrap();
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            let target = labels[r];
            loss += -(logits[target] - max - sum.ln());

            // dL/dz for the output layer: softmax - onehot.
            let mut delta: Vec<f64> = exps.iter().map(|e| e / sum).collect();
            delta[target] -= 1.0;
            for li in (0..self.layers.len()).rev() {
                let layer = &self.layers[li];
                let input = &acts[li];
                for o in 0..layer.outputs {
                    let d = delta[o] * scale;
                    grad.biases[li][o] += d;
                    let row = &mut grad.weights[li][o * layer.inputs..(o + 1) * layer.inputs];
                    for (g, a) in row.iter_mut().zip(input) {
                        *g += d * a;
                    }
                }
                if li > 0 {
                    delta = (0..layer.inputs)
                        .map(|i| {
                            if input[i] <= 0.0 {
                                return 0.0;
                            }
                            (0..layer.outputs)
                                .map(|o| layer.weights[o * layer.inputs + i] * delta[o])
                                .sum()
                        })
                        .collect();
                }
            }
        }
        (loss * scale, grad)
    }

    pub fn params_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    pub fn set_params_flat(&mut self, params: &[f64]) {
        let mut it = params.iter().copied();
        for layer in &mut self.layers {
            for w in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                *w = it.next().expect("parameter vector too short");
            }
        }
    }

    fn apply(&mut self, grad: &MlpGradient, lr: f64) {
        for (li, layer) in self.layers.iter_mut().enumerate() {
            for (w, g) in layer.weights.iter_mut().zip(&grad.weights[li]) {
                *w -= lr * g;
            }
            for (b, g) in layer.biases.iter_mut().zip(&grad.biases[li]) {
                *b -= lr * g;
            }
        }
    }
}

pub fn mlp_train(data: &EmbeddingDataset, labels: &LabelAssignment, params: &MlpParams) -> Result<MlpModel> {
    labels.check_len(data.len())?;
    if params.hidden_sizes.is_empty() {
        return Err(Error::param("at least one hidden layer is required"));
    }
    if params.epochs == 0 {
        return Err(Error::param("epochs must be at least 1"));
    }
    if !(params.learning_rate > 0.0 && params.learning_rate.is_finite()) {
        return Err(Error::param("learning rate must be positive"));
    }
    let mut sizes = vec![data.dim()];
    sizes.extend(&params.hidden_sizes);
    sizes.push(labels.num_classes());
    let mut model = MlpModel::init(&sizes, params.seed)?;

    let n = data.len();
    let batch = params.batch_size.unwrap_or(DEFAULT_BATCH).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng::stream(params.seed, "mlp-batches");
    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            let (loss, grad) = model.loss_and_gradient(data, labels.labels(), chunk);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            total += loss * chunk.len() as f64;
            model.apply(&grad, params.learning_rate);
        }
        model.loss_history.push(total / n as f64);
    }
    if model.params_flat().iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFiniteLoss {
            epoch: params.epochs - 1,
        });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Provenance;

    #[test]
    fn logit_of_label_is_the_score() {
        // Single linear map with fixed weights: logits (2, -1) for input (1).
        let mut m = MlpModel::init(&[1, 1, 2], 0).unwrap();
        m.set_params_flat(&[1.0, 0.0, 2.0, -1.0, 0.0, 0.0]);
        assert_eq!(m.logits(&[1.0]), vec![2.0, -1.0]);
    }

    #[test]
    fn zero_epochs_is_an_error() {
        let data = EmbeddingDataset::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let labels = LabelAssignment::new(vec![0, 1], 2, Provenance::Oracle).unwrap();
        let params = MlpParams {
            epochs: 0,
            ..MlpParams::default()
        };
        assert!(mlp_train(&data, &labels, &params).is_err());
        let params = MlpParams {
            hidden_sizes: vec![],
            ..MlpParams::default()
        };
        assert!(mlp_train(&data, &labels, &params).is_err());
    }

    #[test]
    fn diverging_learning_rate_reports_epoch() {
        let rows: Vec<Vec<f32>> = (0..8).map(|i| vec![(i as f32 - 3.5) * 100.0, 1.0]).collect();
        let data = EmbeddingDataset::from_rows(&rows).unwrap();
        let labels = LabelAssignment::new((0..8).map(|i| i % 2).collect(), 2, Provenance::Oracle).unwrap();
        let params = MlpParams {
            learning_rate: 1e6,
            epochs: 50,
            hidden_sizes: vec![16],
            ..MlpParams::default()
        };
        assert!(matches!(
            mlp_train(&data, &labels, &params),
            Err(Error::NonFiniteLoss { .. })
        ));
    }
}
