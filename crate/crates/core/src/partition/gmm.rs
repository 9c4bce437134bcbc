use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use serde::{Deserialize, Serialize};

use super::{argmax, find_tensor, matrix_tensor, name, tensor_matrix};
use crate::autodiff::{logsumexp, Tensor};
use crate::matrix::squared_distance;
use crate::{rng, Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmConfig {
    pub components: usize,
    pub max_iterations: usize,
    /// Stop when the mean log-likelihood gains less than this.
    pub tolerance: f64,
    pub variance_floor: f64,
    pub seed: u64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self { components: 1, max_iterations: 500, tolerance: 1e-7, variance_floor: 1e-6, seed: 0 }
    }
}

/// Diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    /// `components × dim`.
    pub means: Matrix,
    /// `components × dim`, every entry at least the variance floor.
    pub variances: Matrix,
    /// Mean per-point log-likelihood after each E-step.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
}

impl GmmModel {
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.cols()
    }

    fn log_joint(&self, x: &[f64], out: &mut [f64]) {
        for (c, slot) in out.iter_mut().enumerate() {
            let mut lp = libm::log(self.weights[c]);
            for ((xi, m), v) in x.iter().zip(self.means.row(c)).zip(self.variances.row(c)) {
                let diff = xi - m;
                lp -= 0.5 * (libm::log(2.0 * PI * v) + diff * diff / v);
            }
            *slot = lp;
        }
    }

    /// Most probable component for `x`; ties go to the lowest index.
    pub fn assign(&self, x: &[f64]) -> usize {
        let mut lp = vec![0.0; self.components()];
        self.log_joint(x, &mut lp);
        argmax(&lp)
    }

    pub fn mean_log_likelihood(&self, points: &Matrix) -> f64 {
        let mut lp = vec![0.0; self.components()];
        let total: f64 = points
            .iter_rows()
            .map(|x| {
                self.log_joint(x, &mut lp);
                logsumexp(&lp)
            })
            .sum();
        total / points.rows().max(1) as f64
    }

    /// EM never decreases the likelihood; this checks the recorded trace
    /// allowing only rounding-level dips.
    pub fn is_monotone(&self) -> bool {
        self.log_likelihood
            .windows(2)
            .all(|w| w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0))
    }

    pub fn to_tensors(&self) -> Vec<(String, Tensor)> {
        let w = Matrix::new(1, self.weights.len(), self.weights.clone()).expect("weight row");
        vec![
            (name("gmm.weights"), matrix_tensor(&w)),
            (name("gmm.means"), matrix_tensor(&self.means)),
            (name("gmm.variances"), matrix_tensor(&self.variances)),
        ]
    }

    pub fn from_tensors(tensors: &[(String, Tensor)]) -> Result<Self> {
        let weights = tensor_matrix(find_tensor(tensors, "gmm.weights")?)?.into_data();
        let means = tensor_matrix(find_tensor(tensors, "gmm.means")?)?;
        let variances = tensor_matrix(find_tensor(tensors, "gmm.variances")?)?;
        if means.rows() != weights.len() || variances.rows() != means.rows() || variances.cols() != means.cols() {
            return Err(Error::InvalidConfig("inconsistent mixture tensors".into()));
        }
        Ok(Self { weights, means, variances, log_likelihood: Vec::new(), converged: true })
    }
}

/// Fits a diagonal GMM with k-means++ seeding and EM.
///
/// Fewer distinct points than needed to spread the components is fine; when
/// every point is identical the result is a single component at that point
/// with floored variance.
pub fn fit_gmm(points: &Matrix, cfg: &GmmConfig) -> Result<GmmModel> {
    let (n, d, k) = (points.rows(), points.cols(), cfg.components);
    if n == 0 {
        return Err(Error::Empty("mixture input".into()));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidConfig(alloc::format!("components must be in 1..={n}, got {k}")));
    }
    if !(cfg.variance_floor > 0.0) {
        return Err(Error::InvalidConfig("variance_floor must be positive".into()));
    }
    if points.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("mixture input".into()));
    }

    let first = points.row(0);
    if points.iter_rows().all(|r| r == first) {
        let mut model = GmmModel {
            weights: vec![1.0],
            means: Matrix::new(1, d, first.to_vec())?,
            variances: Matrix::new(1, d, vec![cfg.variance_floor; d])?,
            log_likelihood: Vec::new(),
            converged: true,
        };
        model.log_likelihood.push(model.mean_log_likelihood(points));
        return Ok(model);
    }

    // Seed responsibilities with a hard k-means assignment from k-means++
    // centres, so EM starts from separated components.
    let assignment = kmeans(points, kmeans_pp(points, k, cfg.seed), KMEANS_ROUNDS);
    let mut resp = Matrix::zeros(n, k);
    for (i, &c) in assignment.iter().enumerate() {
        resp.set(i, c, 1.0);
    }
    let mut model = GmmModel {
        weights: vec![0.0; k],
        means: Matrix::zeros(k, d),
        variances: Matrix::new(k, d, vec![cfg.variance_floor; k * d])?,
        log_likelihood: Vec::new(),
        converged: false,
    };
    let mut lp = vec![0.0; k];
    for _ in 0..cfg.max_iterations {
        maximize(&mut model, points, &resp, cfg.variance_floor);
        let mut total = 0.0;
        for (i, x) in points.iter_rows().enumerate() {
            model.log_joint(x, &mut lp);
            let lse = logsumexp(&lp);
            total += lse;
            for (r, l) in resp.row_mut(i).iter_mut().zip(&lp) {
                *r = libm::exp(l - lse);
            }
        }
        let ll = total / n as f64;
        let gain = model.log_likelihood.last().map(|prev| ll - prev);
        model.log_likelihood.push(ll);
        if gain.is_some_and(|g| g < cfg.tolerance) {
            model.converged = true;
            break;
        }
    }
    Ok(model)
}

const KMEANS_ROUNDS: usize = 20;

/// M-step. A component with no responsibility keeps its parameters and
/// gets zero weight.
fn maximize(model: &mut GmmModel, points: &Matrix, resp: &Matrix, floor: f64) {
    let (n, d) = (points.rows(), points.cols());
    for c in 0..model.components() {
        let nk: f64 = (0..n).map(|i| resp.get(i, c)).sum();
        model.weights[c] = nk / n as f64;
        if nk <= f64::MIN_POSITIVE {
            continue;
        }
        let mut mean = vec![0.0; d];
        for (i, x) in points.iter_rows().enumerate() {
            let r = resp.get(i, c);
            mean.iter_mut().zip(x).for_each(|(m, v)| *m += r * v);
        }
        mean.iter_mut().for_each(|m| *m /= nk);
        let mut var = vec![0.0; d];
        for (i, x) in points.iter_rows().enumerate() {
            let r = resp.get(i, c);
            var.iter_mut().zip(x).zip(&mean).for_each(|((s, v), m)| *s += r * (v - m) * (v - m));
        }
        model.means.row_mut(c).copy_from_slice(&mean);
        for (dst, s) in model.variances.row_mut(c).iter_mut().zip(var) {
            *dst = (s / nk).max(floor);
        }
    }
}

/// Lloyd iterations; returns the nearest-centre index of every point.
fn kmeans(points: &Matrix, mut centres: Matrix, rounds: usize) -> Vec<usize> {
    let (k, d) = (centres.rows(), centres.cols());
    let nearest = |centres: &Matrix, p: &[f64]| {
        let dist: Vec<f64> = centres.iter_rows().map(|c| -squared_distance(p, c)).collect();
        argmax(&dist)
    };
    let mut assignment: Vec<usize> = points.iter_rows().map(|p| nearest(&centres, p)).collect();
    for _ in 0..rounds {
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter_rows().zip(&assignment) {
            counts[c] += 1;
            sums.row_mut(c).iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                let inv = 1.0 / count as f64;
                for (dst, s) in centres.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s * inv;
                }
            }
        }
        let next: Vec<usize> = points.iter_rows().map(|p| nearest(&centres, p)).collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }
    assignment
}

fn kmeans_pp(points: &Matrix, k: usize, seed: u64) -> Matrix {
    let n = points.rows();
    let mut r = rng::seeded(seed);
    let mut chosen = vec![(rng::uniform(&mut r, 0.0, n as f64) as usize).min(n - 1)];
    let mut nearest: Vec<f64> = points.iter_rows().map(|p| squared_distance(p, points.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng::uniform(&mut r, 0.0, total);
            let mut pick = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            // Guard against rounding landing on an already-chosen point.
            if nearest[pick] == 0.0 {
                pick = argmax(&nearest);
            }
            pick
        } else {
            chosen.len() % n
        };
        chosen.push(next);
        for (slot, p) in nearest.iter_mut().zip(points.iter_rows()) {
            *slot = slot.min(squared_distance(p, points.row(next)));
        }
    }
    points.select_rows(&chosen)
}
