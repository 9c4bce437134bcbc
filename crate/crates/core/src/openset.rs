//! Open-set protocol: train without some classes, then classify every test
//! sample by kNN against the embedded training split, withheld classes
//! included.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Split};
use crate::embedder::{embed, embed_space, train, Model, TrainConfig, TrainHistory};
use crate::metrics::{frequency_chance, MetricsReport};
use crate::partition::knn_predict_all;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenSetSpec {
    /// Class ids never shown to the embedder during training.
    pub withheld_classes: BTreeSet<usize>,
    pub train: TrainConfig,
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_k() -> usize {
    5
}

impl OpenSetSpec {
    pub fn new(withheld_classes: impl IntoIterator<Item = usize>, train: TrainConfig) -> Self {
        Self { withheld_classes: withheld_classes.into_iter().collect(), train, k: default_k() }
    }

    /// Checks the withheld set against a `classes`-way label space.
    pub fn validate(&self, classes: usize) -> Result<()> {
        if self.withheld_classes.is_empty() {
            return Err(Error::InvalidConfig("withheld class set is empty".into()));
        }
        if let Some(&bad) = self.withheld_classes.iter().find(|&&c| c >= classes) {
            return Err(Error::IndexOutOfRange { index: bad, len: classes });
        }
        if classes - self.withheld_classes.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "withholding {} of {classes} classes leaves fewer than two to train on",
                self.withheld_classes.len()
            )));
        }
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        self.train.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpenSetOutcome {
    /// Test samples of classes seen during training.
    pub seen: MetricsReport,
    /// Test samples of withheld classes. Weighted accuracy is
    /// `scores.accuracy`; macro accuracy is `scores.recall_macro`.
    pub unseen: MetricsReport,
    /// Frequency-weighted chance accuracy on the unseen test samples.
    pub unseen_chance: f64,
    pub history: TrainHistory,
    pub model: Model,
}

/// Runs the protocol on a prepared train/test split. `model` is the
/// untrained embedder.
pub fn run_open_set(model: Model, dataset: &Dataset, split: &Split, spec: &OpenSetSpec) -> Result<OpenSetOutcome> {
    spec.validate(dataset.class_count())?;
    let labels = dataset.labels();
    let seen_train: Vec<usize> = split
        .train
        .iter()
        .copied()
        .filter(|&i| !spec.withheld_classes.contains(&labels[i]))
        .collect();
    let outcome = fit_and_score(model, dataset, &seen_train, split, spec)?;
    // Instrumented loader check: no batch ever contained a withheld class.
    for &c in &spec.withheld_classes {
        let drawn = outcome.history.class_sample_counts.get(c).copied().unwrap_or(0);
        if drawn != 0 {
            return Err(Error::InvalidConfig(format!("withheld class {c} was sampled {drawn} times")));
        }
    }
    Ok(outcome)
}

/// Closed-set baseline for [`run_open_set`]: the same protocol with the
/// embedder trained on every class, scored on the same seen/unseen subsets.
pub fn run_closed_set(model: Model, dataset: &Dataset, split: &Split, spec: &OpenSetSpec) -> Result<OpenSetOutcome> {
    spec.validate(dataset.class_count())?;
    fit_and_score(model, dataset, &split.train, split, spec)
}

fn fit_and_score(
    model: Model,
    dataset: &Dataset,
    train_idx: &[usize],
    split: &Split,
    spec: &OpenSetSpec,
) -> Result<OpenSetOutcome> {
    if split.test.is_empty() {
        return Err(Error::Empty("test split".into()));
    }
    let (model, history) = train(model, &dataset.subset(train_idx), &spec.train)?;
    let reference = embed_space(&model, &dataset.subset(&split.train))?;
    let queries = embed(&model, &dataset.subset(&split.test))?;
    let k = spec.k.min(reference.len());
    let predicted = knn_predict_all(&reference, &queries, k)?;

    let classes = dataset.class_count();
    let labels = dataset.labels();
    let (mut seen, mut unseen) = ((Vec::new(), Vec::new()), (Vec::new(), Vec::new()));
    for (&i, &p) in split.test.iter().zip(&predicted) {
        let bucket = if spec.withheld_classes.contains(&labels[i]) { &mut unseen } else { &mut seen };
        bucket.0.push(labels[i]);
        bucket.1.push(p);
    }
    if unseen.0.is_empty() {
        return Err(Error::Empty("withheld classes have no test samples".into()));
    }
    let reference_labels = reference.labels().unwrap_or(&[]);
    Ok(OpenSetOutcome {
        seen: MetricsReport::from_predictions(&seen.0, &seen.1, classes)?,
        unseen: MetricsReport::from_predictions(&unseen.0, &unseen.1, classes)?,
        unseen_chance: frequency_chance(&unseen.0, reference_labels),
        history,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_blobs, split, SplitSpec};
    use crate::embedder::{build_model, ModelConfig};
    use crate::losses::LossKind;

    fn setup() -> (Dataset, Split, Model) {
        let ds = gen_blobs(4, 30, 6, 8.0, 3).unwrap();
        let s = split(&ds, &SplitSpec::Holdout { test_fraction: 0.3, seed: 1 }).unwrap().remove(0);
        let model = build_model(&ModelConfig::mlp(6, 16, 8, 4), 0).unwrap();
        (ds, s, model)
    }

    fn cfg() -> TrainConfig {
        TrainConfig { epochs: 3, loss: LossKind::Hybrid, learning_rate: 0.01, ..TrainConfig::default() }
    }

    #[test]
    fn withheld_classes_never_sampled() {
        let (ds, s, model) = setup();
        let out = run_open_set(model, &ds, &s, &OpenSetSpec::new([1, 3], cfg())).unwrap();
        assert_eq!(out.history.class_sample_counts[1], 0);
        assert_eq!(out.history.class_sample_counts[3], 0);
        assert!(out.history.class_sample_counts[0] > 0);
        let conf = out.unseen.confusion.as_ref().unwrap();
        assert_eq!(conf.classes(), 4);
        assert_eq!(conf.row(0).iter().sum::<u64>(), 0);
        assert!((out.unseen_chance - 0.25).abs() < 0.05);
    }

    #[test]
    fn invalid_withheld_sets_rejected() {
        let (ds, s, model) = setup();
        for withheld in [vec![], vec![0, 1, 2], vec![0, 1, 2, 3], vec![9]] {
            let spec = OpenSetSpec::new(withheld.clone(), cfg());
            assert!(run_open_set(model.clone(), &ds, &s, &spec).is_err(), "{withheld:?}");
        }
    }
}
