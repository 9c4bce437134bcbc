//! Exact t-SNE for 2-D layouts and the silhouette score.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::matrix::squared_distance;
use crate::{rng, Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    /// Step size; `None` picks `max(N / early_exaggeration / 4, 50)`, which
    /// keeps small layouts from oscillating.
    pub learning_rate: Option<f64>,
    pub early_exaggeration: f64,
    /// Iterations run with exaggerated attraction and the initial momentum.
    pub exaggeration_iterations: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    /// Standard deviation of the Gaussian initial layout.
    pub init_std: f64,
    /// KL divergence is recorded every this many iterations (and at the end).
    pub kl_every: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: None,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            init_std: 1e-4,
            kl_every: 50,
            seed: 0,
        }
    }
}

/// Per-point precision search outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    /// Precision `1 / (2σ²)` of each conditional distribution.
    pub betas: Vec<f64>,
    /// Achieved perplexity of each row.
    pub perplexities: Vec<f64>,
    /// Rows whose target perplexity could not be met within tolerance.
    pub unreachable: Vec<usize>,
}

pub const PERPLEXITY_TOLERANCE: f64 = 1e-4;
const MAX_SEARCH_STEPS: usize = 200;

/// Conditional affinities `p(j|i)` with a bisection on each row's precision
/// so that `exp(H(P_i))` matches `perplexity`. Returns the row-stochastic
/// matrix and the calibration report.
pub fn calibrate(distances_sq: &Matrix, perplexity: f64) -> (Matrix, Calibration) {
    let n = distances_sq.rows();
    let target = libm::log(perplexity);
    let mut p = Matrix::zeros(n, n);
    let mut cal = Calibration { betas: vec![1.0; n], perplexities: vec![0.0; n], unreachable: Vec::new() };
    let mut row = vec![0.0; n];
    for i in 0..n {
        let d = distances_sq.row(i);
        let d_min = (0..n).filter(|&j| j != i).map(|j| d[j]).fold(f64::INFINITY, f64::min);
        let (mut beta, mut lo, mut hi) = (1.0, 0.0, f64::INFINITY);
        let mut entropy = 0.0;
        let mut ok = false;
        for _ in 0..MAX_SEARCH_STEPS {
            entropy = conditional(d, i, d_min, beta, &mut row);
            if (libm::exp(entropy) - perplexity).abs() <= PERPLEXITY_TOLERANCE {
                ok = true;
                break;
            }
            if entropy > target {
                lo = beta;
                beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
            if !(beta.is_finite() && beta > 0.0) || (hi - lo).abs() <= f64::EPSILON * beta.abs() {
                break;
            }
        }
        if !ok {
            cal.unreachable.push(i);
        }
        cal.betas[i] = beta;
        cal.perplexities[i] = libm::exp(entropy);
        p.row_mut(i).copy_from_slice(&row);
    }
    (p, cal)
}

/// Fills `row` with `p(j|i)` at precision `beta`; returns the entropy (nats).
fn conditional(d: &[f64], i: usize, d_min: f64, beta: f64, row: &mut [f64]) -> f64 {
    let mut sum = 0.0;
    for (j, slot) in row.iter_mut().enumerate() {
        *slot = if j == i { 0.0 } else { libm::exp(-beta * (d[j] - d_min)) };
        sum += *slot;
    }
    let mut h = 0.0;
    for (j, slot) in row.iter_mut().enumerate() {
        *slot /= sum;
        if j != i && *slot > 0.0 {
            h -= *slot * libm::log(*slot);
        }
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneResult {
    /// `N × 2` layout.
    pub layout: Matrix,
    /// `(iteration, KL(P‖Q))` samples, unexaggerated.
    pub kl_trace: Vec<(usize, f64)>,
    pub calibration: Calibration,
}

/// Exact O(N²) t-SNE into two dimensions.
pub fn tsne(points: &Matrix, cfg: &TsneConfig) -> Result<TsneResult> {
    let n = points.rows();
    if points.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("t-SNE input".into()));
    }
    if !(cfg.perplexity > 1.0 && cfg.perplexity < n as f64 / 3.0) {
        return Err(Error::InvalidConfig(format!(
            "perplexity must be in (1, N/3) = (1, {:.3}), got {}",
            n as f64 / 3.0,
            cfg.perplexity
        )));
    }
    let learning_rate = cfg
        .learning_rate
        .unwrap_or_else(|| (n as f64 / cfg.early_exaggeration.max(1.0) / 4.0).max(50.0));
    if !(learning_rate > 0.0) || cfg.kl_every == 0 {
        return Err(Error::InvalidConfig("t-SNE needs learning_rate > 0 and kl_every > 0".into()));
    }

    let mut dist = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = squared_distance(points.row(i), points.row(j));
            dist.set(i, j, v);
            dist.set(j, i, v);
        }
    }
    let (cond, calibration) = calibrate(&dist, cfg.perplexity);
    let mut p = Matrix::zeros(n, n);
    let norm = 1.0 / (2.0 * n as f64);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p.set(i, j, ((cond.get(i, j) + cond.get(j, i)) * norm).max(1e-12));
            }
        }
    }

    let mut r = rng::seeded(cfg.seed);
    let mut y = Matrix::new(n, 2, (0..2 * n).map(|_| cfg.init_std * rng::normal(&mut r)).collect())?;
    let mut velocity = vec![0.0; 2 * n];
    let mut gains = vec![1.0f64; 2 * n];
    let mut grad = vec![0.0; 2 * n];
    let mut num = Matrix::zeros(n, n);
    let mut kl_trace = Vec::new();

    for it in 0..cfg.iterations {
        let early = it < cfg.exaggeration_iterations;
        let exaggeration = if early { cfg.early_exaggeration } else { 1.0 };
        let momentum = if early { cfg.initial_momentum } else { cfg.final_momentum };
        let z = affinities(&y, &mut num);
        grad.fill(0.0);
        for i in 0..n {
            let (yi0, yi1) = (y.get(i, 0), y.get(i, 1));
            let (mut g0, mut g1) = (0.0, 0.0);
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = num.get(i, j);
                let f = (exaggeration * p.get(i, j) - w / z) * w;
                g0 += f * (yi0 - y.get(j, 0));
                g1 += f * (yi1 - y.get(j, 1));
            }
            grad[2 * i] = 4.0 * g0;
            grad[2 * i + 1] = 4.0 * g1;
        }
        for ((g, v), gain) in grad.iter().zip(velocity.iter_mut()).zip(gains.iter_mut()) {
            *gain = if (*g > 0.0) != (*v > 0.0) { *gain + 0.2 } else { (*gain * 0.8).max(0.01) };
            *v = momentum * *v - learning_rate * *gain * g;
        }
        for (yv, v) in y.data_mut().iter_mut().zip(&velocity) {
            *yv += v;
        }
        center(&mut y);
        if (it + 1) % cfg.kl_every == 0 || it + 1 == cfg.iterations {
            let z = affinities(&y, &mut num);
            kl_trace.push((it + 1, kl_divergence(&p, &num, z)));
        }
    }
    if y.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("t-SNE layout diverged".into()));
    }
    Ok(TsneResult { layout: y, kl_trace, calibration })
}

/// Student-t kernel `1 / (1 + ‖yi − yj‖²)`; returns the normalizer.
fn affinities(y: &Matrix, num: &mut Matrix) -> f64 {
    let n = y.rows();
    let mut z = 0.0;
    for i in 0..n {
        num.set(i, i, 0.0);
        for j in (i + 1)..n {
            let w = 1.0 / (1.0 + squared_distance(y.row(i), y.row(j)));
            num.set(i, j, w);
            num.set(j, i, w);
            z += 2.0 * w;
        }
    }
    z
}

fn kl_divergence(p: &Matrix, num: &Matrix, z: f64) -> f64 {
    let n = p.rows();
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let pij = p.get(i, j);
                let qij = (num.get(i, j) / z).max(1e-300);
                kl += pij * libm::log(pij / qij);
            }
        }
    }
    kl
}

fn center(y: &mut Matrix) {
    let n = y.rows().max(1) as f64;
    for c in 0..2 {
        let mean = (0..y.rows()).map(|i| y.get(i, c)).sum::<f64>() / n;
        for i in 0..y.rows() {
            y.set(i, c, y.get(i, c) - mean);
        }
    }
}

/// Mean silhouette coefficient of `points` under `labels`. Points alone in
/// their cluster contribute 0.
pub fn silhouette_score(points: &Matrix, labels: &[usize]) -> Result<f64> {
    let n = points.rows();
    if labels.len() != n {
        return Err(Error::DimensionMismatch { left: labels.len(), right: n });
    }
    let k = labels.iter().map(|&l| l + 1).max().unwrap_or(0);
    let mut sizes = vec![0usize; k];
    labels.iter().for_each(|&l| sizes[l] += 1);
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::InvalidConfig("silhouette needs at least two clusters".into()));
    }
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        sums.fill(0.0);
        for j in 0..n {
            if i != j {
                sums[labels[j]] += libm::sqrt(squared_distance(points.row(i), points.row(j)));
            }
        }
        let own = labels[i];
        if sizes[own] < 2 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}
