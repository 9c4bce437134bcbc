use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{argmax, find_tensor, name, tensor_matrix, EmbeddingSpace};
use crate::autodiff::{Bindings, Graph, Tensor};
use crate::losses::softmax_ce_node;
use crate::{rng, Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Base step size, divided by the mean squared input norm (at least 1).
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self { hidden: 64, epochs: 200, batch_size: 32, learning_rate: 0.5, seed: 0 }
    }
}

/// One hidden ReLU layer followed by a softmax classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpHead {
    w1: Tensor,
    b1: Tensor,
    w2: Tensor,
    b2: Tensor,
}

const NAMES: [&str; 4] = ["mlp.w1", "mlp.b1", "mlp.w2", "mlp.b2"];

impl MlpHead {
    fn init(dim: usize, hidden: usize, classes: usize, seed: u64) -> Self {
        let mut r = rng::seeded(seed);
        let mut uniform = |rows: usize, cols: usize| {
            let a = libm::sqrt(6.0 / rows as f64);
            let data = (0..rows * cols).map(|_| rng::uniform(&mut r, -a, a)).collect();
            Tensor::from_parts(vec![rows, cols], data).tracked()
        };
        let w1 = uniform(dim, hidden);
        let w2 = uniform(hidden, classes);
        Self {
            w1,
            b1: Tensor::zeros(vec![hidden]).tracked(),
            w2,
            b2: Tensor::zeros(vec![classes]).tracked(),
        }
    }

    pub fn dim(&self) -> usize {
        self.w1.shape()[0]
    }

    pub fn classes(&self) -> usize {
        self.w2.shape()[1]
    }

    fn tensors(&self) -> [&Tensor; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    fn graph(g: &mut Graph) -> (crate::autodiff::NodeId, crate::autodiff::NodeId) {
        let x = g.input("x");
        let [w1, b1, w2, b2] = NAMES.map(|n| g.input(n));
        let h = g.matmul(x, w1);
        let h = g.add_bias(h, b1);
        let h = g.relu(h);
        let o = g.matmul(h, w2);
        (x, g.add_bias(o, b2))
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let (d, h) = (self.dim(), self.b1.len());
        let mut hidden = self.b1.data().to_vec();
        for (i, xi) in x.iter().enumerate().take(d) {
            let row = &self.w1.data()[i * h..(i + 1) * h];
            hidden.iter_mut().zip(row).for_each(|(a, w)| *a += xi * w);
        }
        let k = self.classes();
        let mut out = self.b2.data().to_vec();
        for (j, a) in hidden.iter().enumerate() {
            let a = a.max(0.0);
            let row = &self.w2.data()[j * k..(j + 1) * k];
            out.iter_mut().zip(row).for_each(|(o, w)| *o += a * w);
        }
        out
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }

    pub fn to_tensors(&self) -> Vec<(String, Tensor)> {
        NAMES.iter().zip(self.tensors()).map(|(n, t)| (name(n), t.clone())).collect()
    }

    pub fn from_tensors(tensors: &[(String, Tensor)]) -> Result<Self> {
        let w1 = tensor_matrix(find_tensor(tensors, NAMES[0])?)?;
        let w2 = tensor_matrix(find_tensor(tensors, NAMES[2])?)?;
        let b1 = find_tensor(tensors, NAMES[1])?.clone();
        let b2 = find_tensor(tensors, NAMES[3])?.clone();
        if w1.cols() != w2.rows() || b1.len() != w1.cols() || b2.len() != w2.cols() {
            return Err(Error::InvalidConfig("inconsistent mlp head tensors".into()));
        }
        let m = |m: Matrix| Tensor::from_parts(vec![m.rows(), m.cols()], m.into_data());
        Ok(Self { w1: m(w1), b1, w2: m(w2), b2 })
    }
}

/// Trains an MLP head with minibatch SGD on cross-entropy. Zero epochs
/// returns the random initialization.
pub fn fit_mlp(train: &EmbeddingSpace, cfg: &MlpConfig) -> Result<MlpHead> {
    let labels = train.require_labels()?;
    train.require_finite()?;
    if train.is_empty() {
        return Err(Error::Empty("training embeddings".into()));
    }
    if cfg.hidden == 0 || cfg.batch_size == 0 || !(cfg.learning_rate >= 0.0) {
        return Err(Error::InvalidConfig("mlp head needs hidden > 0, batch_size > 0, learning_rate >= 0".into()));
    }
    let (n, d) = (train.len(), train.dim());
    let mut head = MlpHead::init(d, cfg.hidden, train.class_count(), cfg.seed);
    let mean_sq = train.points().iter_rows().map(|r| r.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / n as f64;
    let lr = cfg.learning_rate / mean_sq.max(1.0);

    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffler = rng::stream(cfg.seed, &[0x6d6c70]);
    for _ in 0..cfg.epochs {
        rng::shuffle(&mut order, &mut shuffler);
        for chunk in order.chunks(cfg.batch_size) {
            let x = Tensor::from_parts(vec![chunk.len(), d], chunk.iter().flat_map(|&i| train.points().row(i).iter().copied()).collect());
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let mut g = Graph::new();
            let (_, logits) = MlpHead::graph(&mut g);
            let loss = softmax_ce_node(&mut g, logits, &y);
            let grads = {
                let mut b = Bindings::new().with("x", &x);
                for (n, t) in NAMES.iter().zip(head.tensors()) {
                    b.bind(n, t);
                }
                g.evaluate(&b)?.backward(&g, loss)?
            };
            for (n, t) in NAMES.iter().zip(head.tensors_mut()) {
                if let Some(gr) = grads.get(n) {
                    t.data_mut().iter_mut().zip(gr).for_each(|(w, g)| *w -= lr * g);
                }
            }
        }
    }
    Ok(head)
}
