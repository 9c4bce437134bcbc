use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::Model;
use crate::autodiff::{Bindings, Graph, Tensor};
use crate::data::{self, AugmentOps, Dataset, SplitSpec};
use crate::losses::{batch_loss, LossConfig, LossKind};
use crate::mining::{batch_hard_mine, stratified_batches, Batch};
use crate::partition::{knn_predict_all, EmbeddingSpace};
use crate::rng;
use crate::{Error, Matrix, Result};

const STREAM_ORDER: u64 = 0x006f_7264_6572;
const STREAM_AUGMENT: u64 = 0x6175_676d;
const STREAM_VALIDATION: u64 = 0x0076_616c;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub epochs: usize,
    /// Plain SGD step size; zero leaves the parameters untouched.
    pub learning_rate: f64,
    /// P in the P×K batch composition.
    pub classes_per_batch: usize,
    /// K in the P×K batch composition.
    pub samples_per_class: usize,
    pub seed: u64,
    pub loss_config: LossConfig,
    /// Applied online with fresh draws every epoch.
    pub augment: AugmentOps,
    /// Stratified share of the training data held out for per-epoch
    /// validation accuracy. Zero disables validation.
    pub validation_fraction: f64,
    /// Neighbours used for validation accuracy.
    pub validation_k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Hybrid,
            epochs: 100,
            learning_rate: 0.01,
            classes_per_batch: 8,
            samples_per_class: 4,
            seed: 0,
            loss_config: LossConfig::default(),
            augment: AugmentOps::NONE,
            validation_fraction: 0.1,
            validation_k: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig("learning_rate must be finite and non-negative".into()));
        }
        if self.classes_per_batch == 0 || self.samples_per_class == 0 {
            return Err(Error::InvalidConfig("batch composition must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::InvalidConfig("validation_fraction must be in [0, 1)".into()));
        }
        self.loss_config.validate()
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean softmax cross-entropy of the classification head.
    pub softmax_loss: f64,
    /// Mean reciprocal triplet loss over mined triplets; logged for every
    /// loss kind, `None` when no batch yielded triplets.
    pub rtl_loss: Option<f64>,
    /// Mean of the optimized objective.
    pub total_loss: f64,
    pub val_accuracy: Option<f64>,
    /// Batches that had nothing to optimize.
    pub skipped_batches: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Samples drawn per class id over the whole run.
    pub class_sample_counts: Vec<u64>,
}

fn check_shape(model: &Model, dataset: &Dataset) -> Result<()> {
    if model.config().input_shape != dataset.shape() {
        return Err(Error::InvalidConfig(format!(
            "dataset samples are {:?} but the model expects {:?}",
            dataset.shape(),
            model.config().input_shape
        )));
    }
    Ok(())
}

/// Embeds every sample of `dataset` (no augmentation, no gradients).
pub fn embed(model: &Model, dataset: &Dataset) -> Result<Matrix> {
    check_shape(model, dataset)?;
    model.embed_samples(dataset.samples(), dataset.len())
}

pub fn embed_space(model: &Model, dataset: &Dataset) -> Result<EmbeddingSpace> {
    let points = embed(model, dataset)?;
    EmbeddingSpace::new(points, Some(dataset.labels().to_vec()), dataset.class_count())
}

/// Trains with plain SGD over stratified P×K batches. Fully deterministic
/// for a given (model, dataset, config).
pub fn train(mut model: Model, dataset: &Dataset, cfg: &TrainConfig) -> Result<(Model, TrainHistory)> {
    cfg.validate()?;
    check_shape(&model, dataset)?;
    let classes = model.config().num_classes;
    if let Some(&bad) = dataset.labels().iter().find(|&&l| l >= classes) {
        return Err(Error::IndexOutOfRange { index: bad, len: classes });
    }
    let present = dataset.class_counts().iter().filter(|&&c| c > 0).count();
    if cfg.loss.uses_triplets() && present < 2 {
        return Err(Error::InvalidConfig(format!(
            "{} loss needs at least two classes, dataset has {present}",
            cfg.loss.name()
        )));
    }
    if dataset.is_empty() {
        return Err(Error::Empty("training set".into()));
    }

    let (train_idx, val_idx) = if cfg.validation_fraction > 0.0 {
        let spec = SplitSpec::Holdout {
            test_fraction: cfg.validation_fraction,
            seed: rng::derive(cfg.seed, &[STREAM_VALIDATION]),
        };
        let s = data::split(dataset, &spec)?.remove(0);
        (s.train, s.test)
    } else {
        ((0..dataset.len()).collect(), Vec::new())
    };
    let labels = dataset.labels();
    let shape = dataset.shape();
    let per = shape.len();
    let d = model.embedding_dim();
    let mut history = TrainHistory {
        epochs: Vec::with_capacity(cfg.epochs),
        class_sample_counts: vec![0; dataset.class_count().max(classes)],
    };

    for epoch in 0..cfg.epochs {
        let mut order = rng::stream(cfg.seed, &[STREAM_ORDER, epoch as u64]);
        let batches = stratified_batches(
            &train_idx,
            labels,
            cfg.classes_per_batch,
            cfg.samples_per_class,
            &mut order,
        );
        let (mut ce_sum, mut total_sum, mut rtl_sum) = (0.0, 0.0, 0.0);
        let (mut steps, mut rtl_steps, mut skipped) = (0usize, 0usize, 0usize);

        for (batch_no, members) in batches.iter().enumerate() {
            let b = members.len();
            let mut input = Vec::with_capacity(b * per);
            for &i in members {
                history.class_sample_counts[labels[i]] += 1;
                if cfg.augment.is_none() {
                    input.extend_from_slice(dataset.sample(i));
                } else {
                    let mut r = rng::stream(cfg.seed, &[STREAM_AUGMENT, i as u64, epoch as u64]);
                    input.extend(data::augment(dataset.sample(i), shape, cfg.augment, &mut r)?);
                }
            }
            let batch_labels: Vec<usize> = members.iter().map(|&i| labels[i]).collect();
            let x = Tensor::new(model.input_dims(b), input)?;

            let step = {
                let mut g = Graph::new();
                let xn = g.input("x");
                let (emb, logits) = model.forward_graph(&mut g, xn);
                let mut bindings = Bindings::new();
                model.bind(&mut bindings);
                bindings.bind("x", &x);
                let mut ev = g.evaluate(&bindings)?;
                let emb_values = Matrix::new(b, d, ev.value(emb)?.data().to_vec())?;
                let mined = batch_hard_mine(&Batch::new(emb_values, batch_labels.clone(), members.clone())?);
                match batch_loss(&mut g, cfg.loss, emb, logits, &batch_labels, &mined.triplets, &cfg.loss_config) {
                    None => None,
                    Some(nodes) => {
                        ev.resume(&g, &bindings)?;
                        let total = ev.value(nodes.total)?.data()[0];
                        if !total.is_finite() {
                            return Err(Error::NonFiniteLoss { epoch: epoch + 1, batch: batch_no });
                        }
                        let ce = ev.value(nodes.softmax)?.data()[0];
                        let rtl = match nodes.rtl {
                            Some(r) => Some(ev.value(r)?.data()[0]),
                            None => None,
                        };
                        Some((ev.backward(&g, nodes.total)?, total, ce, rtl))
                    }
                }
            };
            let Some((grads, total, ce, rtl)) = step else {
                skipped += 1;
                continue;
            };
            for p in model.params_mut() {
                if let Some(grad) = grads.get(&p.name) {
                    let lr = cfg.learning_rate;
                    p.tensor.data_mut().iter_mut().zip(grad).for_each(|(w, g)| *w -= lr * g);
                }
            }
            ce_sum += ce;
            total_sum += total;
            steps += 1;
            if let Some(r) = rtl {
                rtl_sum += r;
                rtl_steps += 1;
            }
        }

        let val_accuracy = if val_idx.is_empty() {
            None
        } else {
            Some(validation_accuracy(&model, dataset, &train_idx, &val_idx, cfg.validation_k)?)
        };
        let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
        history.epochs.push(EpochRecord {
            epoch: epoch + 1,
            softmax_loss: mean(ce_sum, steps),
            rtl_loss: (rtl_steps > 0).then(|| rtl_sum / rtl_steps as f64),
            total_loss: mean(total_sum, steps),
            val_accuracy,
            skipped_batches: skipped,
        });
    }
    Ok((model, history))
}

fn validation_accuracy(model: &Model, dataset: &Dataset, train_idx: &[usize], val_idx: &[usize], k: usize) -> Result<f64> {
    let reference = embed_space(model, &dataset.subset(train_idx))?;
    let queries = embed(model, &dataset.subset(val_idx))?;
    let k = k.clamp(1, reference.len());
    let predicted = knn_predict_all(&reference, &queries, k)?;
    let correct = predicted
        .iter()
        .zip(val_idx)
        .filter(|(p, &i)| **p == dataset.labels()[i])
        .count();
    Ok(correct as f64 / val_idx.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedder::{build_model, ModelConfig};

    fn blobs() -> Dataset {
        data::gen_blobs(3, 20, 4, 6.0, 1).unwrap()
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let ds = blobs();
        let model = build_model(&ModelConfig::mlp(4, 8, 4, 3), 2).unwrap();
        let cfg = TrainConfig { epochs: 3, learning_rate: 0.0, ..TrainConfig::default() };
        let (trained, history) = train(model.clone(), &ds, &cfg).unwrap();
        for (a, b) in trained.params().iter().zip(model.params()) {
            assert_eq!(a.tensor.data(), b.tensor.data());
        }
        assert_eq!(history.epochs.len(), 3);
    }

    #[test]
    fn single_class_rejected_for_triplet_losses() {
        let ds = blobs();
        let only0: Vec<usize> = (0..20).collect();
        let one = ds.subset(&only0);
        let model = build_model(&ModelConfig::mlp(4, 8, 4, 3), 0).unwrap();
        let cfg = TrainConfig { epochs: 1, loss: LossKind::Rtl, ..TrainConfig::default() };
        assert!(matches!(train(model.clone(), &one, &cfg), Err(Error::InvalidConfig(_))));
        let softmax = TrainConfig { loss: LossKind::Softmax, ..cfg };
        assert!(train(model, &one, &softmax).is_ok());
    }

    #[test]
    fn embedding_nothing_gives_empty_matrix() {
        let model = build_model(&ModelConfig::mlp(4, 8, 6, 3), 0).unwrap();
        let e = model.embed_samples(&[], 0).unwrap();
        assert_eq!((e.rows(), e.cols()), (0, 6));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let model = build_model(&ModelConfig::mlp(5, 8, 6, 3), 0).unwrap();
        assert!(embed(&model, &blobs()).is_err());
    }
}
