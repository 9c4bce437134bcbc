use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{argmax, find_tensor, matrix_tensor, name, tensor_matrix, EmbeddingSpace};
use crate::autodiff::{logsumexp, Tensor};
use crate::{Error, Matrix, Result};

/// Linear scorer `x · W + b` with one column per class.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// `dim × classes`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub iterations: usize,
    /// Whether the stopping criterion was met before the iteration cap.
    pub converged: bool,
}

impl LinearModel {
    fn zeros(dim: usize, classes: usize) -> Self {
        Self { weights: Matrix::zeros(dim, classes), bias: vec![0.0; classes], iterations: 0, converged: false }
    }

    pub fn dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn classes(&self) -> usize {
        self.weights.cols()
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        let mut s = self.bias.clone();
        for (xi, row) in x.iter().zip(self.weights.iter_rows()) {
            for (sc, w) in s.iter_mut().zip(row) {
                *sc += xi * w;
            }
        }
        s
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.scores(x))
    }

    pub fn to_tensors(&self) -> Vec<(String, Tensor)> {
        let b = Matrix::new(1, self.bias.len(), self.bias.clone()).expect("bias row");
        vec![(name("linear.weight"), matrix_tensor(&self.weights)), (name("linear.bias"), matrix_tensor(&b))]
    }

    pub fn from_tensors(tensors: &[(String, Tensor)]) -> Result<Self> {
        let weights = tensor_matrix(find_tensor(tensors, "linear.weight")?)?;
        let bias = tensor_matrix(find_tensor(tensors, "linear.bias")?)?;
        if bias.cols() != weights.cols() {
            return Err(Error::DimensionMismatch { left: bias.cols(), right: weights.cols() });
        }
        Ok(Self { weights, bias: bias.into_data(), iterations: 0, converged: true })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    pub max_iterations: usize,
    /// Stop once the full gradient norm drops below this.
    pub tolerance: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self { max_iterations: 5000, tolerance: 1e-6 }
    }
}

fn prepare(train: &EmbeddingSpace) -> Result<(&[usize], f64)> {
    let labels = train.require_labels()?;
    train.require_finite()?;
    if train.is_empty() {
        return Err(Error::Empty("training embeddings".into()));
    }
    // Mean squared norm of the bias-augmented inputs sets the step size.
    let mean_sq = train
        .points()
        .iter_rows()
        .map(|r| 1.0 + r.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        / train.len() as f64;
    Ok((labels, mean_sq))
}

/// Multinomial logistic regression by full-batch gradient descent.
///
/// The step is `1/L` for the curvature bound `L = mean‖x̃‖² / 2`, so every
/// step decreases the loss.
pub fn fit_logistic(train: &EmbeddingSpace, cfg: &LogisticConfig) -> Result<LinearModel> {
    let (labels, mean_sq) = prepare(train)?;
    let (n, d, k) = (train.len(), train.dim(), train.class_count());
    let step = 2.0 / mean_sq;
    let mut model = LinearModel::zeros(d, k);
    let mut gw = Matrix::zeros(d, k);
    let mut gb = vec![0.0; k];
    for it in 0..cfg.max_iterations {
        gw.data_mut().fill(0.0);
        gb.fill(0.0);
        for (x, &y) in train.points().iter_rows().zip(labels) {
            let mut p = model.scores(x);
            let lse = logsumexp(&p);
            for (c, v) in p.iter_mut().enumerate() {
                *v = libm::exp(*v - lse) - if c == y { 1.0 } else { 0.0 };
            }
            for (xi, row) in x.iter().zip(gw.data_mut().chunks_exact_mut(k)) {
                for (g, pc) in row.iter_mut().zip(&p) {
                    *g += xi * pc;
                }
            }
            gb.iter_mut().zip(&p).for_each(|(g, pc)| *g += pc);
        }
        let inv = 1.0 / n as f64;
        let norm = libm::sqrt(gw.data().iter().chain(&gb).map(|g| g * g).sum::<f64>()) * inv;
        model.iterations = it;
        if norm < cfg.tolerance {
            model.converged = true;
            break;
        }
        for (w, g) in model.weights.data_mut().iter_mut().zip(gw.data()) {
            *w -= step * g * inv;
        }
        for (b, g) in model.bias.iter_mut().zip(&gb) {
            *b -= step * g * inv;
        }
        model.iterations = it + 1;
    }
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    /// Hinge weight relative to the `½‖w‖²` regularizer.
    pub c: f64,
    pub iterations: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self { c: 1.0, iterations: 2000 }
    }
}

/// One-vs-rest linear SVM trained by full-batch subgradient descent on
/// `½λ‖w‖² + mean hinge` with `λ = 1/(C·N)`. The bias is not regularized.
/// The iterate with the lowest objective is kept for each class.
pub fn fit_svm(train: &EmbeddingSpace, cfg: &SvmConfig) -> Result<LinearModel> {
    if !(cfg.c > 0.0) || cfg.iterations == 0 {
        return Err(Error::InvalidConfig("svm needs c > 0 and at least one iteration".into()));
    }
    let (labels, mean_sq) = prepare(train)?;
    let (n, d, k) = (train.len(), train.dim(), train.class_count());
    let lambda = 1.0 / (cfg.c * n as f64);
    let eta0 = 1.0 / mean_sq;
    let inv = 1.0 / n as f64;
    let mut model = LinearModel::zeros(d, k);
    model.iterations = cfg.iterations;
    model.converged = true;
    let mut gw = vec![0.0; d];
    for class in 0..k {
        let target = |i: usize| if labels[i] == class { 1.0 } else { -1.0 };
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        let mut best = (f64::INFINITY, w.clone(), b);
        for t in 0..=cfg.iterations {
            gw.iter_mut().zip(&w).for_each(|(g, wi)| *g = lambda * wi);
            let mut gb = 0.0;
            let mut hinge = 0.0;
            for (i, x) in train.points().iter_rows().enumerate() {
                let y = target(i);
                let margin = y * (dot(&w, x) + b);
                if margin < 1.0 {
                    hinge += 1.0 - margin;
                    gw.iter_mut().zip(x).for_each(|(g, xi)| *g -= inv * y * xi);
                    gb -= inv * y;
                }
            }
            let objective = 0.5 * lambda * dot(&w, &w) + hinge * inv;
            if objective < best.0 {
                best = (objective, w.clone(), b);
            }
            if t == cfg.iterations {
                break;
            }
            let eta = eta0 / libm::sqrt(t as f64 + 1.0);
            w.iter_mut().zip(&gw).for_each(|(wi, g)| *wi -= eta * g);
            b -= eta * gb;
        }
        for (j, wj) in best.1.iter().enumerate() {
            model.weights.set(j, class, *wj);
        }
        model.bias[class] = best.2;
    }
    Ok(model)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
