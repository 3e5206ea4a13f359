//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use prunessl::classifiers::mlp::MlpModel;
use prunessl::classifiers::svm::{Kernel, SvmModel};
use prunessl::EmbeddingDataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, d: usize, spread: f32) -> EmbeddingDataset {
    let rows: Vec<Vec<f32>> = (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-spread..spread)).collect())
        .collect();
    EmbeddingDataset::from_rows(&rows).unwrap()
}

/// Random `+-1` targets containing both signs.
pub fn random_targets(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let y: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
        if y.iter().any(|&v| v > 0.0) && y.iter().any(|&v| v < 0.0) {
            return y;
        }
    }
}

pub fn gram(data: &EmbeddingDataset, kernel: &Kernel) -> Vec<Vec<f64>> {
    (0..data.len())
        .map(|i| (0..data.len()).map(|j| kernel.eval(data.row(i), data.row(j))).collect())
        .collect()
}

pub fn dual_objective(alpha: &[f64], y: &[f64], k: &[Vec<f64>]) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * k[i][j];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Largest KKT violation of a trained model, measured on `y_i f(x_i)`.
pub fn kkt_violation(model: &SvmModel, data: &EmbeddingDataset) -> f64 {
    let c = model.c;
    let mut worst: f64 = 0.0;
    for i in 0..data.len() {
        let a = model.support_alphas[i];
        let yf = model.targets[i] * model.decision(data.row(i));
        let v = if a <= 0.0 {
            (1.0 - yf).max(0.0)
        } else if a >= c {
            (yf - 1.0).max(0.0)
        } else {
            (yf - 1.0).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting; `None`
/// when a pivot is numerically zero.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    /// Every bias in this interval satisfies KKT with `alpha`; it is a single
    /// point when some coefficient is strictly between the bounds.
    pub bias_range: (f64, f64),
    pub objective: f64,
}

/// KKT-consistent bias interval for fixed coefficients.
pub fn bias_interval(alpha: &[f64], y: &[f64], k: &[Vec<f64>], c: f64) -> (f64, f64) {
    let n = alpha.len();
    let eps = 1e-9 * c;
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..n {
        let g: f64 = (0..n).map(|j| alpha[j] * y[j] * k[i][j]).sum();
        // y (g + b) >= 1 at alpha = 0, <= 1 at alpha = C, = 1 in between.
        let edge = y[i] - g;
        let at_zero = alpha[i] <= eps;
        let at_c = alpha[i] >= c - eps;
        if !at_c && !at_zero {
            lo = lo.max(edge);
            hi = hi.min(edge);
        } else if at_zero == (y[i] > 0.0) {
            lo = lo.max(edge);
        } else {
            hi = hi.min(edge);
        }
    }
    (lo, hi)
}

/// Exact soft-margin SVM by enumerating every assignment of each `alpha_i` to
/// {0, free, C}. For a pattern the free coefficients and the bias solve
/// `y_i f(x_i) = 1` on the free set together with `sum alpha_i y_i = 0`; a
/// pattern is accepted when the box and the KKT sign conditions hold. The
/// best accepted objective wins. Requires a non-singular kernel on free sets.
pub fn brute_force_svm(data: &EmbeddingDataset, y: &[f64], kernel: &Kernel, c: f64) -> Option<DualSolution> {
    let n = y.len();
    let k = gram(data, kernel);
    let eps = 1e-9;
    let mut best: Option<DualSolution> = None;
    for code in 0..3usize.pow(n as u32) {
        let mut pattern = vec![0u8; n];
        let mut rest = code;
        for p in pattern.iter_mut() {
            *p = (rest % 3) as u8;
            rest /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| pattern[i] == 1).collect();
        let mut alpha: Vec<f64> = pattern.iter().map(|&p| if p == 2 { c } else { 0.0 }).collect();

        let bias;
        if free.is_empty() {
            if alpha.iter().zip(y).map(|(a, t)| a * t).sum::<f64>().abs() > eps {
                continue;
            }
            // b is any value keeping every bound example KKT-consistent.
            let g: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| alpha[j] * y[j] * k[i][j]).sum())
                .collect();
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            for i in 0..n {
                // y (g + b) >= 1 at alpha = 0, <= 1 at alpha = C.
                let edge = y[i] - g[i];
                let lower = (pattern[i] == 0) == (y[i] > 0.0);
                if lower {
                    lo = lo.max(edge);
                } else {
                    hi = hi.min(edge);
                }
            }
            if lo > hi + 1e-9 {
                continue;
            }
            bias = if lo.is_finite() && hi.is_finite() {
                0.5 * (lo + hi)
            } else if lo.is_finite() {
                lo
            } else {
                hi
            };
        } else {
            let m = free.len();
            let mut a = vec![vec![0.0; m + 1]; m + 1];
            let mut rhs = vec![0.0; m + 1];
            for (r, &i) in free.iter().enumerate() {
                for (s, &j) in free.iter().enumerate() {
                    a[r][s] = y[j] * k[i][j];
                }
                a[r][m] = 1.0;
                let fixed: f64 = (0..n).filter(|&j| pattern[j] == 2).map(|j| c * y[j] * k[i][j]).sum();
                rhs[r] = y[i] - fixed;
            }
            for (s, &j) in free.iter().enumerate() {
                a[m][s] = y[j];
            }
            rhs[m] = -(0..n).filter(|&j| pattern[j] == 2).map(|j| c * y[j]).sum::<f64>();
            let Some(x) = solve(a, rhs) else { continue };
            if free.iter().zip(&x).any(|(_, &v)| v < -eps || v > c + eps) {
                continue;
            }
            for (&j, &v) in free.iter().zip(&x) {
                alpha[j] = v.clamp(0.0, c);
            }
            bias = x[m];
        }

        let ok = (0..n).all(|i| {
            let f: f64 = (0..n).map(|j| alpha[j] * y[j] * k[i][j]).sum::<f64>() + bias;
            let yf = y[i] * f;
            match pattern[i] {
                0 => yf >= 1.0 - 1e-7,
                2 => yf <= 1.0 + 1e-7,
                _ => true,
            }
        });
        if !ok {
            continue;
        }
        let objective = dual_objective(&alpha, y, &k);
        if best.as_ref().is_none_or(|b| objective > b.objective) {
            let bias_range = bias_interval(&alpha, y, &k, c);
            best = Some(DualSolution {
                alpha,
                bias,
                bias_range,
                objective,
            });
        }
    }
    best
}

/// Range of decision values at `x` over the solution's bias interval.
pub fn decision_range(sol: &DualSolution, data: &EmbeddingDataset, y: &[f64], kernel: &Kernel, x: &[f32]) -> (f64, f64) {
    let g: f64 = (0..y.len())
        .map(|j| sol.alpha[j] * y[j] * kernel.eval(data.row(j), x))
        .sum();
    (g + sol.bias_range.0, g + sol.bias_range.1)
}

/// Central-difference gradient of the mean cross-entropy.
pub fn finite_difference_gradient(
    model: &MlpModel,
    data: &EmbeddingDataset,
    labels: &[usize],
    rows: &[usize],
    h: f64,
) -> Vec<f64> {
    let base = model.params_flat();
    let mut probe = model.clone();
    (0..base.len())
        .map(|p| {
            let mut theta = base.clone();
            theta[p] = base[p] + h;
            probe.set_params_flat(&theta);
            let plus = probe.loss_and_gradient(data, labels, rows).0;
            theta[p] = base[p] - h;
            probe.set_params_flat(&theta);
            let minus = probe.loss_and_gradient(data, labels, rows).0;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}
