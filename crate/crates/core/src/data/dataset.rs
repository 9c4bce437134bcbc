use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Shape shared by every sample of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SampleShape {
    /// Single-channel `height×width` grid, values in `[0, 1]`.
    Grid { height: usize, width: usize },
    Vector { len: usize },
}

impl SampleShape {
    pub fn len(&self) -> usize {
        match *self {
            SampleShape::Grid { height, width } => height * width,
            SampleShape::Vector { len } => len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Labelled samples stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    shape: SampleShape,
    samples: Vec<f64>,
    labels: Vec<usize>,
    class_names: Vec<String>,
    provenance: String,
}

impl Dataset {
    pub fn new(
        shape: SampleShape,
        samples: Vec<f64>,
        labels: Vec<usize>,
        class_names: Vec<String>,
        provenance: String,
    ) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::InvalidConfig("samples must have at least one value".into()));
        }
        if samples.len() != labels.len() * shape.len() {
            return Err(Error::DimensionMismatch {
                left: labels.len() * shape.len(),
                right: samples.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: class_names.len(),
            });
        }
        Ok(Self {
            shape,
            samples,
            labels,
            class_names,
            provenance,
        })
    }

    pub fn shape(&self) -> SampleShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let n = self.shape.len();
        &self.samples[i * n..(i + 1) * n]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.shape.len();
        &mut self.samples[i * n..(i + 1) * n]
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Number of samples per class id.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = alloc::vec![0; self.class_count()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// New dataset holding `indices` in order, with the same class list.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let n = self.shape.len();
        let mut samples = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            samples.extend_from_slice(self.sample(i));
        }
        Dataset {
            shape: self.shape,
            samples,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
            provenance: self.provenance.clone(),
        }
    }
}
