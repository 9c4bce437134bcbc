//! Post-hoc partitioners fitted on a frozen embedding space.

mod gmm;
mod knn;
mod linear;
mod mlp;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

pub use gmm::{fit_gmm, GmmConfig, GmmModel};
pub use knn::{knn_classify, knn_predict_all, KnnModel};
pub use linear::{fit_logistic, fit_svm, LinearModel, LogisticConfig, SvmConfig};
pub use mlp::{fit_mlp, MlpConfig, MlpHead};

use crate::autodiff::Tensor;
use crate::metrics::MetricsReport;
use crate::{Error, Matrix, Result};

/// Points in the embedding space, optionally labelled.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSpace {
    points: Matrix,
    labels: Option<Vec<usize>>,
    class_count: usize,
}

impl EmbeddingSpace {
    pub fn new(points: Matrix, labels: Option<Vec<usize>>, class_count: usize) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != points.rows() {
                return Err(Error::DimensionMismatch { left: l.len(), right: points.rows() });
            }
            if let Some(&bad) = l.iter().find(|&&c| c >= class_count) {
                return Err(Error::IndexOutOfRange { index: bad, len: class_count });
            }
        }
        Ok(Self { points, labels, class_count })
    }

    pub fn points(&self) -> &Matrix {
        &self.points
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub(crate) fn require_labels(&self) -> Result<&[usize]> {
        self.labels().ok_or_else(|| Error::InvalidConfig("partitioner needs labelled training points".into()))
    }

    pub(crate) fn require_finite(&self) -> Result<()> {
        if self.points.data().iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("embedding features".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionerKind {
    Knn,
    Lr,
    Svm,
    Mlp,
    Gmm,
}

impl PartitionerKind {
    pub const ALL: [PartitionerKind; 5] = [Self::Knn, Self::Lr, Self::Svm, Self::Mlp, Self::Gmm];

    pub fn name(self) -> &'static str {
        match self {
            Self::Knn => "knn",
            Self::Lr => "lr",
            Self::Svm => "svm",
            Self::Mlp => "mlp",
            Self::Gmm => "gmm",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(text.trim()))
    }

    /// Unsupervised partitioners produce cluster ids, not class ids.
    pub fn is_clustering(self) -> bool {
        self == Self::Gmm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PartitionerSettings {
    /// Neighbours for kNN.
    pub k: usize,
    /// Seed for partitioners with random initialization.
    pub seed: u64,
    /// Component count for the mixture model; zero means one per class.
    pub components: usize,
}

impl Default for PartitionerSettings {
    fn default() -> Self {
        Self { k: 5, seed: 0, components: 0 }
    }
}

/// A fitted partitioner.
#[derive(Debug, Clone, PartialEq)]
pub enum Partitioner {
    Knn(KnnModel),
    Lr(LinearModel),
    Svm(LinearModel),
    Mlp(MlpHead),
    Gmm(GmmModel),
}

pub fn fit_partitioner(kind: PartitionerKind, train: &EmbeddingSpace, settings: &PartitionerSettings) -> Result<Partitioner> {
    Ok(match kind {
        PartitionerKind::Knn => Partitioner::Knn(KnnModel::fit(train, settings.k)?),
        PartitionerKind::Lr => Partitioner::Lr(fit_logistic(train, &LogisticConfig::default())?),
        PartitionerKind::Svm => Partitioner::Svm(fit_svm(train, &SvmConfig::default())?),
        PartitionerKind::Mlp => {
            Partitioner::Mlp(fit_mlp(train, &MlpConfig { seed: settings.seed, ..MlpConfig::default() })?)
        }
        PartitionerKind::Gmm => {
            let components = if settings.components == 0 { train.class_count() } else { settings.components };
            Partitioner::Gmm(fit_gmm(train.points(), &GmmConfig { components, seed: settings.seed, ..GmmConfig::default() })?)
        }
    })
}

impl Partitioner {
    pub fn kind(&self) -> PartitionerKind {
        match self {
            Self::Knn(_) => PartitionerKind::Knn,
            Self::Lr(_) => PartitionerKind::Lr,
            Self::Svm(_) => PartitionerKind::Svm,
            Self::Mlp(_) => PartitionerKind::Mlp,
            Self::Gmm(_) => PartitionerKind::Gmm,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Knn(m) => m.dim(),
            Self::Lr(m) | Self::Svm(m) => m.dim(),
            Self::Mlp(m) => m.dim(),
            Self::Gmm(m) => m.dim(),
        }
    }

    /// Class id (or cluster id for the mixture model) of a single point.
    pub fn predict(&self, point: &[f64]) -> Result<usize> {
        if point.len() != self.dim() {
            return Err(Error::DimensionMismatch { left: point.len(), right: self.dim() });
        }
        if point.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("query point".into()));
        }
        Ok(match self {
            Self::Knn(m) => m.predict(point),
            Self::Lr(m) | Self::Svm(m) => m.predict(point),
            Self::Mlp(m) => m.predict(point),
            Self::Gmm(m) => m.assign(point),
        })
    }

    pub fn predict_all(&self, points: &Matrix) -> Result<Vec<usize>> {
        points.iter_rows().map(|p| self.predict(p)).collect()
    }

    /// Scores a labelled space. Clustering output is scored with the Rand
    /// index only; classifiers get accuracy, macro scores and the Rand index.
    pub fn evaluate(&self, space: &EmbeddingSpace) -> Result<MetricsReport> {
        let truth = space.require_labels()?;
        let predicted = self.predict_all(space.points())?;
        if self.kind().is_clustering() {
            MetricsReport::from_clustering(truth, &predicted)
        } else {
            let classes = space.class_count().max(predicted.iter().map(|&p| p + 1).max().unwrap_or(0));
            MetricsReport::from_predictions(truth, &predicted, classes)
        }
    }

    /// Named tensors describing the fitted state.
    pub fn to_tensors(&self) -> Vec<(String, Tensor)> {
        match self {
            Self::Knn(m) => m.to_tensors(),
            Self::Lr(m) | Self::Svm(m) => m.to_tensors(),
            Self::Mlp(m) => m.to_tensors(),
            Self::Gmm(m) => m.to_tensors(),
        }
    }

    pub fn from_tensors(kind: PartitionerKind, tensors: &[(String, Tensor)]) -> Result<Self> {
        Ok(match kind {
            PartitionerKind::Knn => Self::Knn(KnnModel::from_tensors(tensors)?),
            PartitionerKind::Lr => Self::Lr(LinearModel::from_tensors(tensors)?),
            PartitionerKind::Svm => Self::Svm(LinearModel::from_tensors(tensors)?),
            PartitionerKind::Mlp => Self::Mlp(MlpHead::from_tensors(tensors)?),
            PartitionerKind::Gmm => Self::Gmm(GmmModel::from_tensors(tensors)?),
        })
    }
}

pub(crate) fn find_tensor<'a>(tensors: &'a [(String, Tensor)], name: &str) -> Result<&'a Tensor> {
    tensors
        .iter()
        .find(|(n, _)| n == name)
        .map(|(_, t)| t)
        .ok_or_else(|| Error::InvalidConfig(format!("missing tensor `{name}`")))
}

pub(crate) fn matrix_tensor(m: &Matrix) -> Tensor {
    Tensor::from_parts(vec![m.rows(), m.cols()], m.data().to_vec())
}

pub(crate) fn tensor_matrix(t: &Tensor) -> Result<Matrix> {
    match t.shape() {
        [r, c] => Matrix::new(*r, *c, t.data().to_vec()),
        other => Err(Error::InvalidConfig(format!("expected a matrix tensor, got shape {other:?}"))),
    }
}

pub(crate) fn labels_tensor(labels: &[usize]) -> Tensor {
    Tensor::from_parts(vec![labels.len()], labels.iter().map(|&l| l as f64).collect())
}

pub(crate) fn tensor_labels(t: &Tensor) -> Result<Vec<usize>> {
    t.data()
        .iter()
        .map(|&v| {
            if v >= 0.0 && libm::trunc(v) == v && v < usize::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(Error::InvalidConfig(format!("invalid label value {v}")))
            }
        })
        .collect()
}

pub(crate) fn scalar_tensor(v: f64) -> Tensor {
    Tensor::from_parts(vec![1], vec![v])
}

pub(crate) fn name(s: &str) -> String {
    s.to_string()
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
