//! Experiment configuration: one JSON document per run.

use std::fs;
use std::path::{Path, PathBuf};

use deepmetric_core::data::{AugmentOps, SplitSpec};
use deepmetric_core::embedder::{LayerSpec, TrainConfig};
use deepmetric_core::losses::LossKind;
use deepmetric_core::partition::{PartitionerKind, PartitionerSettings};
use deepmetric_core::projection::TsneConfig;
use deepmetric_core::rng;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Stream tags for seeds derived from the experiment seed.
pub mod stream {
    pub const DATA: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const MODEL: u64 = 3;
    pub const TRAIN: u64 = 4;
    pub const PARTITIONER: u64 = 5;
    pub const TSNE: u64 = 6;
    pub const TEST_AUGMENT: u64 = 7;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Gaussian blobs on a simplex.
    Blobs { classes: usize, per_class: usize, dim: usize, separation: f64 },
    /// Rendered radial glyph images.
    Glyphs { classes: usize, per_class: usize, size: usize },
    /// CSV manifest of `path_or_vector,label` rows. Relative paths resolve
    /// against the config file.
    Manifest { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SplitConfig {
    Holdout { test_fraction: f64 },
    Kfold { folds: usize, fold: usize },
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self::Holdout { test_fraction: 0.2 }
    }
}

impl SplitConfig {
    pub fn spec(&self, seed: u64) -> SplitSpec {
        let seed = rng::derive(seed, &[stream::SPLIT]);
        match *self {
            Self::Holdout { test_fraction } => SplitSpec::Holdout { test_fraction, seed },
            Self::Kfold { folds, .. } => SplitSpec::Kfold { folds, seed },
        }
    }

    pub fn fold(&self) -> usize {
        match *self {
            Self::Holdout { .. } => 0,
            Self::Kfold { fold, .. } => fold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub embedding_dim: usize,
    /// Explicit layer stack; the default picks a small CNN for images and
    /// an MLP for vectors.
    pub layers: Option<Vec<LayerSpec>>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { embedding_dim: 32, layers: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionerConfig {
    pub kind: PartitionerKind,
    pub k: usize,
    /// Mixture components; zero means one per class.
    pub components: usize,
}

impl Default for PartitionerConfig {
    fn default() -> Self {
        Self { kind: PartitionerKind::Knn, k: 5, components: 0 }
    }
}

impl PartitionerConfig {
    pub fn settings(&self, seed: u64) -> PartitionerSettings {
        PartitionerSettings {
            k: self.k,
            seed: rng::derive(seed, &[stream::PARTITIONER]),
            components: self.components,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    Losses,
    Partitioners,
    Augmentations,
    Resolutions,
}

impl SweepAxis {
    pub fn parse(text: &str) -> Option<Self> {
        serde_json::from_value(serde_json::Value::String(text.trim().to_ascii_lowercase())).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateConfig {
    pub axis: Option<SweepAxis>,
    /// Variant names to run; empty means the axis defaults.
    pub variants: Vec<String>,
    /// Glyph sizes for the resolution axis.
    pub resolutions: Vec<usize>,
}

impl Default for AblateConfig {
    fn default() -> Self {
        Self { axis: None, variants: Vec::new(), resolutions: vec![16, 24, 32] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpenSetConfig {
    pub withheld: Vec<usize>,
    pub k: usize,
}

impl Default for OpenSetConfig {
    fn default() -> Self {
        Self { withheld: Vec::new(), k: 5 }
    }
}

/// A full experiment. Only `seed` and `dataset` are required; every other
/// random stream is derived from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub partitioner: PartitionerConfig,
    /// Augmentation applied once to the test split before evaluation, e.g.
    /// `"R"` for a randomly rotated test set.
    #[serde(default = "no_augment")]
    pub test_augment: AugmentOps,
    #[serde(default)]
    pub tsne: TsneConfig,
    #[serde(default)]
    pub ablate: AblateConfig,
    #[serde(default)]
    pub openset: OpenSetConfig,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn no_augment() -> AugmentOps {
    AugmentOps::NONE
}

impl ExperimentConfig {
    /// Reads and validates a config; relative paths are made absolute
    /// against the config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| CliError::ConfigIo { path: path.to_path_buf(), source })?;
        let mut cfg: Self =
            serde_json::from_str(&text).map_err(|source| CliError::ConfigJson { path: path.to_path_buf(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let DatasetSpec::Manifest { path: m } = &mut cfg.dataset {
            if m.is_relative() {
                *m = base.join(&*m);
            }
        }
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Applies the `--seed` override and checks every section.
    pub fn resolve(mut self, seed_override: Option<u64>) -> Result<Self> {
        if let Some(seed) = seed_override {
            self.seed = seed;
        }
        self.train.seed = rng::derive(self.seed, &[stream::TRAIN]);
        self.tsne.seed = rng::derive(self.seed, &[stream::TSNE]);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.dataset {
            DatasetSpec::Blobs { classes, per_class, dim, separation } => {
                if *classes == 0 || *per_class == 0 || *dim == 0 || separation.is_nan() || *separation <= 0.0 {
                    return Err(CliError::Config("blobs need positive classes, per_class, dim and separation".into()));
                }
            }
            DatasetSpec::Glyphs { classes, per_class, .. } => {
                if *classes == 0 || *per_class == 0 {
                    return Err(CliError::Config("glyphs need positive classes and per_class".into()));
                }
            }
            DatasetSpec::Manifest { path } => {
                if !path.is_file() {
                    return Err(CliError::Config(format!("manifest {} does not exist", path.display())));
                }
            }
        }
        match self.split {
            SplitConfig::Holdout { test_fraction } if !(test_fraction > 0.0 && test_fraction < 1.0) => {
                return Err(CliError::Config("split.test_fraction must be in (0, 1)".into()));
            }
            SplitConfig::Kfold { folds, fold } if folds < 2 || fold >= folds => {
                return Err(CliError::Config("split needs folds >= 2 and fold < folds".into()));
            }
            _ => {}
        }
        if self.model.embedding_dim == 0 {
            return Err(CliError::Config("model.embedding_dim must be positive".into()));
        }
        if self.partitioner.k == 0 {
            return Err(CliError::Config("partitioner.k must be positive".into()));
        }
        self.train.validate()?;
        Ok(())
    }

    /// Name of the loss used for training, for reports.
    pub fn loss(&self) -> LossKind {
        self.train.loss
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = ExperimentConfig::from_json(
            r#"{"seed": 3, "dataset": {"kind": "blobs", "classes": 3, "per_class": 10, "dim": 4, "separation": 5.0}}"#,
        )
        .unwrap()
        .resolve(None)
        .unwrap();
        assert_eq!(cfg.partitioner.kind, PartitionerKind::Knn);
        assert_eq!(cfg.split, SplitConfig::Holdout { test_fraction: 0.2 });
        assert!(cfg.test_augment.is_none());
    }

    #[test]
    fn seed_is_mandatory() {
        let err = ExperimentConfig::from_json(r#"{"dataset": {"kind": "glyphs", "classes": 3, "per_class": 10, "size": 16}}"#);
        assert!(matches!(err, Err(CliError::Config(m)) if m.contains("seed")));
    }

    #[test]
    fn unknown_fields_rejected() {
        let err = ExperimentConfig::from_json(
            r#"{"seed": 1, "dataset": {"kind": "glyphs", "classes": 3, "per_class": 10, "size": 16}, "epochs": 4}"#,
        );
        assert!(err.is_err());
    }

    #[test]
    fn seed_override_changes_derived_seeds() {
        let text = r#"{"seed": 1, "dataset": {"kind": "glyphs", "classes": 3, "per_class": 10, "size": 16}}"#;
        let a = ExperimentConfig::from_json(text).unwrap().resolve(None).unwrap();
        let b = ExperimentConfig::from_json(text).unwrap().resolve(Some(2)).unwrap();
        assert_eq!(b.seed, 2);
        assert_ne!(a.train.seed, b.train.seed);
    }

    #[test]
    fn sweep_axis_names() {
        assert_eq!(SweepAxis::parse("losses"), Some(SweepAxis::Losses));
        assert_eq!(SweepAxis::parse("Resolutions"), Some(SweepAxis::Resolutions));
        assert_eq!(SweepAxis::parse("colors"), None);
    }
}
