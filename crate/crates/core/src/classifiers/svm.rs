//! Soft-margin support vector machines trained by sequential minimal
//! optimization.
//!
//! The solver follows the classic two-loop scheme: an outer loop visits
//! examples (in an order shuffled once by the seed) looking for KKT
//! violators, and for each violator the partner is the example with the
//! largest `|E_i - E_j|`, falling back to index order. When the sweep budget
//! is spent, or no heuristic step makes progress, the remaining violations
//! are removed by maximal-violating-pair steps, so a returned model always
//! satisfies the KKT conditions to `tol` unless it reports `converged: false`.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{EmbeddingDataset, LabelAssignment};
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_C: f64 = 1.0;
pub const DEFAULT_TOL: f64 = 1e-3;
pub const DEFAULT_MAX_PASSES: usize = 10;

/// Kernel matrices up to this many rows are computed once up front.
const KERNEL_CACHE_ROWS: usize = 2500;
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Rbf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f32], b: &[f32]) -> f64 {
        match *self {
            Kernel::Linear => a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum(),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a
                    .iter()
                    .zip(b)
                    .map(|(&x, &y)| {
                        let d = f64::from(x) - f64::from(y);
                        d * d
                    })
                    .sum();
                (-gamma * d2).exp()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub kind: KernelKind,
    pub c: f64,
    /// RBF width; `None` selects `1 / (d * var(features))`.
    pub gamma: Option<f64>,
    pub tol: f64,
    /// Budget of full sweeps for the heuristic phase.
    pub max_passes: usize,
    pub seed: u64,
    /// Record the dual objective after every successful pair update.
    pub record_trace: bool,
}

impl SvmParams {
    pub fn linear() -> Self {
        Self {
            kind: KernelKind::Linear,
            c: DEFAULT_C,
            gamma: None,
            tol: DEFAULT_TOL,
            max_passes: DEFAULT_MAX_PASSES,
            seed: 0,
            record_trace: false,
        }
    }

    pub fn rbf() -> Self {
        Self {
            kind: KernelKind::Rbf,
            ..Self::linear()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = Some(gamma);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::param(format!("C must be positive, got {}", self.c)));
        }
        if let Some(g) = self.gamma {
            if self.kind == KernelKind::Rbf && !(g > 0.0 && g.is_finite()) {
                return Err(Error::param(format!("gamma must be positive, got {g}")));
            }
        }
        if !(self.tol > 0.0) {
            return Err(Error::param("tol must be positive"));
        }
        Ok(())
    }
}

/// The "scale" heuristic `1 / (d * var)`, or 1 for constant data.
pub fn scale_gamma(data: &EmbeddingDataset) -> f64 {
    let var = data.feature_variance();
    if var > 0.0 {
        1.0 / (data.dim() as f64 * var)
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SolverStats {
    pub sweeps: usize,
    pub steps: usize,
    pub converged: bool,
    /// `max_{I_up} -y_i grad_i - min_{I_low} -y_i grad_i` at exit.
    pub final_gap: f64,
    pub dual_trace: Option<Vec<f64>>,
}

/// A trained binary SVM. Class `+1` is the positive class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub c: f64,
    pub bias: f64,
    /// Dual coefficient of every training example, in training order.
    pub support_alphas: Vec<f64>,
    /// `+1` / `-1` targets of the training examples.
    pub targets: Vec<f64>,
    pub training_ids: Vec<u64>,
    pub dim: usize,
    support_vectors: Vec<f32>,
    support_coef: Vec<f64>,
    weights: Option<Vec<f64>>,
    pub stats: SolverStats,
}

impl SvmModel {
    pub fn kind(&self) -> KernelKind {
        match self.kernel {
            Kernel::Linear => KernelKind::Linear,
            Kernel::Rbf { .. } => KernelKind::Rbf,
        }
    }

    /// Signed decision value `f(x) = sum_i alpha_i y_i K(x_i, x) + b`.
    pub fn decision(&self, x: &[f32]) -> f64 {
        match &self.weights {
            Some(w) => w.iter().zip(x).map(|(&wi, &xi)| wi * f64::from(xi)).sum::<f64>() + self.bias,
            None => {
                self.support_vectors
                    .chunks_exact(self.dim)
                    .zip(&self.support_coef)
                    .map(|(sv, &coef)| coef * self.kernel.eval(sv, x))
                    .sum::<f64>()
                    + self.bias
            }
        }
    }

    /// Primal weight vector (linear kernel only).
    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn weight_norm(&self) -> Option<f64> {
        self.weights
            .as_ref()
            .map(|w| w.iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    /// Decision value divided by `||w||` for linear models (the geometric
    /// distance to the hyperplane), raw decision value otherwise.
    pub fn distance(&self, x: &[f32]) -> f64 {
        let f = self.decision(x);
        match self.weight_norm() {
            Some(norm) if norm > 1e-12 => f / norm,
            _ => f,
        }
    }

    pub fn num_support_vectors(&self) -> usize {
        self.support_coef.len()
    }
}

struct Solver<'a> {
    x: &'a EmbeddingDataset,
    y: Vec<f64>,
    kernel: Kernel,
    c: f64,
    tol: f64,
    alpha: Vec<f64>,
    /// b-free error `F_i = sum_j alpha_j y_j K_ij - y_i`; `E_i = F_i + b`.
    err: Vec<f64>,
    b: f64,
    diag: Vec<f64>,
    cache: Option<Vec<f64>>,
    row1: Vec<f64>,
    row2: Vec<f64>,
    order: Vec<usize>,
    steps: usize,
    trace: Option<Vec<f64>>,
}

/// Rounds a coefficient within a relative `1e-12` of a bound onto it; a value
/// one ulp inside a bound would otherwise count as free.
fn snap(a: f64, c: f64) -> f64 {
    if a < 1e-12 * c {
        0.0
    } else if a > c * (1.0 - 1e-12) {
        c
    } else {
        a
    }
}

impl<'a> Solver<'a> {
    fn new(x: &'a EmbeddingDataset, y: Vec<f64>, kernel: Kernel, params: &SvmParams) -> Self {
        let n = x.len();
        let diag = (0..n).map(|i| kernel.eval(x.row(i), x.row(i))).collect();
        let cache = (n <= KERNEL_CACHE_ROWS).then(|| {
            let mut k = vec![0.0; n * n];
            for i in 0..n {
                for j in i..n {
                    let v = kernel.eval(x.row(i), x.row(j));
                    k[i * n + j] = v;
                    k[j * n + i] = v;
                }
            }
            k
        });
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::stream(params.seed, "smo-order"));
        let err = y.iter().map(|&t| -t).collect();
        Self {
            x,
            y,
            kernel,
            c: params.c,
            tol: params.tol,
            alpha: vec![0.0; n],
            err,
            b: 0.0,
            diag,
            cache,
            row1: vec![0.0; n],
            row2: vec![0.0; n],
            order,
            steps: 0,
            trace: params.record_trace.then(|| vec![0.0]),
        }
    }

    fn n(&self) -> usize {
        self.y.len()
    }

    fn fill_row(&self, i: usize, out: &mut [f64]) {
        let n = self.n();
        match &self.cache {
            Some(k) => out.copy_from_slice(&k[i * n..(i + 1) * n]),
            None => {
                let xi = self.x.row(i);
                for (j, o) in out.iter_mut().enumerate() {
                    *o = self.kernel.eval(xi, self.x.row(j));
                }
            }
        }
    }

    fn k(&self, i: usize, j: usize) -> f64 {
        match &self.cache {
            Some(k) => k[i * self.n() + j],
            None => self.kernel.eval(self.x.row(i), self.x.row(j)),
        }
    }

    fn is_free(&self, i: usize) -> bool {
        self.alpha[i] > 0.0 && self.alpha[i] < self.c
    }

    fn in_up(&self, i: usize) -> bool {
        (self.y[i] > 0.0 && self.alpha[i] < self.c) || (self.y[i] < 0.0 && self.alpha[i] > 0.0)
    }

    fn in_low(&self, i: usize) -> bool {
        (self.y[i] < 0.0 && self.alpha[i] < self.c) || (self.y[i] > 0.0 && self.alpha[i] > 0.0)
    }

    fn dual_objective(&self) -> f64 {
        // sum alpha - 1/2 sum alpha_i y_i g_i with g_i = F_i + y_i.
        self.alpha
            .iter()
            .zip(&self.y)
            .zip(&self.err)
            .map(|((&a, &y), &f)| a - 0.5 * a * y * (f + y))
            .sum()
    }

    fn take_step(&mut self, i1: usize, i2: usize) -> bool {
        if i1 == i2 {
            return false;
        }
        let (a1, a2) = (self.alpha[i1], self.alpha[i2]);
        let (y1, y2) = (self.y[i1], self.y[i2]);
        let (f1, f2) = (self.err[i1], self.err[i2]);
        let s = y1 * y2;
        let c = self.c;
        let (lo, hi) = if s < 0.0 {
            ((a2 - a1).max(0.0), (c + a2 - a1).min(c))
        } else {
            ((a1 + a2 - c).max(0.0), (a1 + a2).min(c))
        };
        if hi - lo < TAU {
            return false;
        }
        let k11 = self.diag[i1];
        let k22 = self.diag[i2];
        let k12 = self.k(i1, i2);
        let eta = (k11 + k22 - 2.0 * k12).max(TAU);
        let a2_new = snap((a2 + y2 * (f1 - f2) / eta).clamp(lo, hi), c);
        if (a2_new - a2).abs() < 1e-12 * (a2_new + a2 + 1e-12) {
            return false;
        }
        let a1_new = snap(a1 + s * (a2 - a2_new), c);
        let d1 = y1 * (a1_new - a1);
        let d2 = y2 * (a2_new - a2);

        let e1 = f1 + self.b;
        let e2 = f2 + self.b;
        let b1 = self.b - e1 - d1 * k11 - d2 * k12;
        let b2 = self.b - e2 - d1 * k12 - d2 * k22;
        self.b = if a1_new > 0.0 && a1_new < c {
            b1
        } else if a2_new > 0.0 && a2_new < c {
            b2
        } else {
            0.5 * (b1 + b2)
        };

        let mut row1 = std::mem::take(&mut self.row1);
        let mut row2 = std::mem::take(&mut self.row2);
        self.fill_row(i1, &mut row1);
        self.fill_row(i2, &mut row2);
        for ((e, &k1), &k2) in self.err.iter_mut().zip(&row1).zip(&row2) {
            *e += d1 * k1 + d2 * k2;
        }
        self.row1 = row1;
        self.row2 = row2;

        self.alpha[i1] = a1_new;
        self.alpha[i2] = a2_new;
        self.steps += 1;
        if self.trace.is_some() {
            let obj = self.dual_objective();
            if let Some(trace) = self.trace.as_mut() {
                trace.push(obj);
            }
        }
        true
    }

    fn violates(&self, i: usize) -> bool {
        let r = (self.err[i] + self.b) * self.y[i];
        (r < -self.tol && self.alpha[i] < self.c) || (r > self.tol && self.alpha[i] > 0.0)
    }

    fn examine(&mut self, i2: usize) -> bool {
        if !self.violates(i2) {
            return false;
        }
        let f2 = self.err[i2];
        let mut best: Option<(usize, f64)> = None;
        for &i in &self.order {
            if self.is_free(i) {
                let gap = (self.err[i] - f2).abs();
                if best.is_none_or(|(_, g)| gap > g) {
                    best = Some((i, gap));
                }
            }
        }
        if let Some((i1, _)) = best {
            if self.take_step(i1, i2) {
                return true;
            }
        }
        let order = std::mem::take(&mut self.order);
        let mut done = order
            .iter()
            .any(|&i1| self.is_free(i1) && self.take_step(i1, i2));
        if !done {
            done = order.iter().any(|&i1| self.take_step(i1, i2));
        }
        self.order = order;
        done
    }

    /// `(m, M, i_up, i_low)` with `m = max_{I_up} -F_i`, `M = min_{I_low} -F_i`.
    fn extreme_pair(&self) -> (f64, f64, Option<usize>, Option<usize>) {
        let (mut m, mut big_m) = (f64::NEG_INFINITY, f64::INFINITY);
        let (mut iu, mut il) = (None, None);
        for i in 0..self.n() {
            let v = -self.err[i];
            if self.in_up(i) && v > m {
                m = v;
                iu = Some(i);
            }
            if self.in_low(i) && v < big_m {
                big_m = v;
                il = Some(i);
            }
        }
        (m, big_m, iu, il)
    }

    fn heuristic_phase(&mut self, max_passes: usize) -> usize {
        let mut sweeps = 0;
        let mut examine_all = true;
        let step_budget = 200 * self.n() + 10_000;
        loop {
            let mut changed = 0;
            if examine_all {
                sweeps += 1;
                for idx in 0..self.n() {
                    let i = self.order[idx];
                    changed += usize::from(self.examine(i));
                }
            } else {
                for idx in 0..self.n() {
                    let i = self.order[idx];
                    if self.is_free(i) {
                        changed += usize::from(self.examine(i));
                    }
                }
            }
            if examine_all {
                if changed == 0 || sweeps >= max_passes {
                    break;
                }
                examine_all = false;
            } else if changed == 0 {
                examine_all = true;
            }
            if self.steps > step_budget {
                break;
            }
        }
        sweeps
    }

    /// Maximal-violating-pair steps until `m - M <= tol`.
    fn polish(&mut self) -> (bool, f64) {
        let budget = self.steps + 1000 * self.n() + 100_000;
        loop {
            let (m, big_m, iu, il) = self.extreme_pair();
            let gap = m - big_m;
            if gap <= self.tol || iu.is_none() || il.is_none() {
                return (true, gap.max(0.0));
            }
            if self.steps > budget || !self.take_step(iu.unwrap(), il.unwrap()) {
                return (false, gap);
            }
        }
    }

    /// Bias inside the KKT-feasible interval, preferring the free-vector mean.
    fn settle_bias(&mut self) {
        let (m, big_m, _, _) = self.extreme_pair();
        let half = 0.5 * self.tol;
        let free: Vec<f64> = (0..self.n())
            .filter(|&i| self.is_free(i))
            .map(|i| -self.err[i])
            .collect();
        let lo = m - half;
        let hi = big_m + half;
        let b = if !free.is_empty() {
            free.iter().sum::<f64>() / free.len() as f64
        } else if m.is_finite() && big_m.is_finite() {
            0.5 * (m + big_m)
        } else if m.is_finite() {
            m
        } else {
            big_m
        };
        self.b = if lo <= hi { b.clamp(lo, hi) } else { 0.5 * (m + big_m) };
    }
}

/// Trains a binary SVM on `targets` in `{-1, +1}`.
pub fn train_binary(data: &EmbeddingDataset, targets: &[f64], params: &SvmParams) -> Result<SvmModel> {
    params.validate()?;
    if targets.len() != data.len() {
        return Err(Error::LengthMismatch {
            expected: data.len(),
            found: targets.len(),
        });
    }
    if targets.iter().any(|&t| t != 1.0 && t != -1.0) {
        return Err(Error::param("binary targets must be +1 or -1"));
    }
    if targets.iter().all(|&t| t == targets[0]) {
        return Err(Error::SingleClass);
    }
    let kernel = match params.kind {
        KernelKind::Linear => Kernel::Linear,
        KernelKind::Rbf => Kernel::Rbf {
            gamma: params.gamma.unwrap_or_else(|| scale_gamma(data)),
        },
    };

    let mut solver = Solver::new(data, targets.to_vec(), kernel, params);
    let sweeps = solver.heuristic_phase(params.max_passes.max(1));
    let (converged, final_gap) = solver.polish();
    solver.settle_bias();

    if !solver.b.is_finite() || solver.alpha.iter().any(|a| !a.is_finite()) {
        return Err(Error::Numerical("SMO produced non-finite coefficients".into()));
    }

    let dim = data.dim();
    let mut support_vectors = Vec::new();
    let mut support_coef = Vec::new();
    for (i, (&a, &y)) in solver.alpha.iter().zip(&solver.y).enumerate() {
        if a > 0.0 {
            support_vectors.extend_from_slice(data.row(i));
            support_coef.push(a * y);
        }
    }
    let weights = matches!(kernel, Kernel::Linear).then(|| {
        let mut w = vec![0.0; dim];
        for (sv, &coef) in support_vectors.chunks_exact(dim).zip(&support_coef) {
            for (wj, &xj) in w.iter_mut().zip(sv) {
                *wj += coef * f64::from(xj);
            }
        }
        w
    });

    Ok(SvmModel {
        kernel,
        c: params.c,
        bias: solver.b,
        support_alphas: solver.alpha,
        targets: solver.y,
        training_ids: data.ids().to_vec(),
        dim,
        support_vectors,
        support_coef,
        weights,
        stats: SolverStats {
            sweeps,
            steps: solver.steps,
            converged,
            final_gap,
            dual_trace: solver.trace,
        },
    })
}

/// One binary model (K = 2, class 1 positive) or one-vs-rest models (K > 2,
/// `None` for classes without training examples).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SvmEnsemble {
    Binary(SvmModel),
    OneVsRest(Vec<Option<SvmModel>>),
}

impl SvmEnsemble {
    pub fn num_classes(&self) -> usize {
        match self {
            SvmEnsemble::Binary(_) => 2,
            SvmEnsemble::OneVsRest(models) => models.len(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SvmEnsemble::Binary(m) => m.dim,
            SvmEnsemble::OneVsRest(models) => models.iter().flatten().next().map_or(0, |m| m.dim),
        }
    }

    pub fn kind(&self) -> KernelKind {
        match self {
            SvmEnsemble::Binary(m) => m.kind(),
            SvmEnsemble::OneVsRest(models) => models
                .iter()
                .flatten()
                .next()
                .map_or(KernelKind::Linear, SvmModel::kind),
        }
    }

    pub fn models(&self) -> Vec<&SvmModel> {
        match self {
            SvmEnsemble::Binary(m) => vec![m],
            SvmEnsemble::OneVsRest(models) => models.iter().flatten().collect(),
        }
    }

    /// Raw per-class decision values; empty one-vs-rest classes get `-inf`.
    pub fn decision_values(&self, x: &[f32]) -> Vec<f64> {
        match self {
            SvmEnsemble::Binary(m) => {
                let f = m.decision(x);
                vec![-f, f]
            }
            SvmEnsemble::OneVsRest(models) => models
                .iter()
                .map(|m| m.as_ref().map_or(f64::NEG_INFINITY, |m| m.decision(x)))
                .collect(),
        }
    }

    /// Own-label score: the signed decision value of the model whose positive
    /// class is `label`, as a geometric distance for linear kernels.
    pub fn own_label_score(&self, x: &[f32], label: usize) -> Result<f64> {
        match self {
            SvmEnsemble::Binary(m) => {
                let sign = match label {
                    0 => -1.0,
                    1 => 1.0,
                    _ => {
                        return Err(Error::LabelOutOfRange {
                            label,
                            num_classes: 2,
                        })
                    }
                };
                Ok(sign * m.distance(x))
            }
            SvmEnsemble::OneVsRest(models) => models
                .get(label)
                .ok_or(Error::LabelOutOfRange {
                    label,
                    num_classes: models.len(),
                })?
                .as_ref()
                .map(|m| m.distance(x))
                .ok_or_else(|| Error::param(format!("no model was trained for class {label}"))),
        }
    }
}

/// Trains the per-class SVM collection for `labels`.
pub fn svm_train(
    data: &EmbeddingDataset,
    labels: &LabelAssignment,
    params: &SvmParams,
) -> Result<SvmEnsemble> {
    params.validate()?;
    labels.check_len(data.len())?;
    let k = labels.num_classes();
    if labels.populated_classes() < 2 {
        return Err(Error::SingleClass);
    }
    let targets_for = |class: usize| -> Vec<f64> {
        labels
            .labels()
            .iter()
            .map(|&l| if l == class { 1.0 } else { -1.0 })
            .collect()
    };
    if k == 2 {
        return Ok(SvmEnsemble::Binary(train_binary(data, &targets_for(1), params)?));
    }
    let hist = labels.histogram();
    let models = (0..k)
        .map(|c| {
            if hist[c] == 0 {
                Ok(None)
            } else {
                train_binary(data, &targets_for(c), params).map(Some)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SvmEnsemble::OneVsRest(models))
}
