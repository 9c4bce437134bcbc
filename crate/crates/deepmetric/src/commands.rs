//! The five experiment commands. Each writes its files into `out` and
//! returns the in-memory results for callers that want them.

use std::fs;
use std::path::{Path, PathBuf};

use deepmetric_core::data::{self, split, AugmentOps, Dataset, Split};
use deepmetric_core::embedder::{build_model, embed_space, train, Model, ModelConfig, TrainHistory};
use deepmetric_core::losses::LossKind;
use deepmetric_core::metrics::{rand_index, MetricsReport};
use deepmetric_core::openset::{run_open_set, OpenSetOutcome, OpenSetSpec};
use deepmetric_core::partition::{fit_partitioner, EmbeddingSpace, Partitioner, PartitionerKind};
use deepmetric_core::projection::{tsne, TsneResult};
use deepmetric_core::{rng, Matrix};
use serde_json::json;

use crate::checkpoint;
use crate::config::{stream, DatasetSpec, ExperimentConfig, PartitionerConfig, SweepAxis};
use crate::dataset::load_dataset;
use crate::error::{CliError, Result};
use crate::report::{self, LayoutPoint};

pub const VERSION: &str = concat!("deepmetric ", env!("CARGO_PKG_VERSION"));

pub const MODEL_FILE: &str = "model.ckpt";
pub const PARTITIONER_FILE: &str = "partitioner.ckpt";

/// Dataset plus the train/test split selected by the config.
pub struct Prepared {
    pub dataset: Dataset,
    pub split: Split,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let dataset = load_dataset(&cfg.dataset, cfg.seed)?;
    let mut splits = split(&dataset, &cfg.split.spec(cfg.seed))?;
    let fold = cfg.split.fold();
    if fold >= splits.len() {
        return Err(CliError::Config(format!("fold {fold} out of range")));
    }
    Ok(Prepared { dataset, split: splits.swap_remove(fold) })
}

impl Prepared {
    pub fn train_set(&self) -> Dataset {
        self.dataset.subset(&self.split.train)
    }

    /// Test subset with the config's test-time augmentation applied.
    pub fn test_set(&self, cfg: &ExperimentConfig) -> Result<Dataset> {
        let mut test = self.dataset.subset(&self.split.test);
        apply_test_augment(&mut test, &self.split.test, cfg.test_augment, cfg.seed)?;
        Ok(test)
    }
}

/// Draws each test sample's perturbation from its own stream keyed by the
/// sample's dataset index, so results do not depend on iteration order.
fn apply_test_augment(test: &mut Dataset, ids: &[usize], ops: AugmentOps, seed: u64) -> Result<()> {
    if ops.is_none() {
        return Ok(());
    }
    let shape = test.shape();
    for (i, &id) in ids.iter().enumerate() {
        let mut r = rng::stream(seed, &[stream::TEST_AUGMENT, id as u64]);
        let out = data::augment(test.sample(i), shape, ops, &mut r)?;
        test.sample_mut(i).copy_from_slice(&out);
    }
    Ok(())
}

pub fn model_config(cfg: &ExperimentConfig, dataset: &Dataset) -> ModelConfig {
    let classes = dataset.class_count();
    match &cfg.model.layers {
        Some(layers) => ModelConfig {
            input_shape: dataset.shape(),
            layers: layers.clone(),
            embedding_dim: cfg.model.embedding_dim,
            num_classes: classes,
        },
        None => ModelConfig::for_shape(dataset.shape(), cfg.model.embedding_dim, classes),
    }
}

pub fn untrained_model(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<Model> {
    let mc = model_config(cfg, dataset);
    mc.validate()?;
    Ok(build_model(&mc, rng::derive(cfg.seed, &[stream::MODEL]))?)
}

fn runtime<T>(r: deepmetric_core::Result<T>) -> Result<T> {
    r.map_err(CliError::Runtime)
}

pub fn train_model(cfg: &ExperimentConfig, prepared: &Prepared) -> Result<(Model, TrainHistory)> {
    let model = untrained_model(cfg, &prepared.dataset)?;
    let train_set = prepared.train_set();
    let present = train_set.class_counts().iter().filter(|&&c| c > 0).count();
    if cfg.train.loss.uses_triplets() && present < 2 {
        return Err(CliError::Config(format!("{} loss needs at least two classes", cfg.train.loss.name())));
    }
    runtime(train(model, &train_set, &cfg.train))
}

/// Fits the configured partitioner in the embedding space of the train
/// split and scores the test split.
pub fn evaluate_model(
    model: &Model,
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    pcfg: &PartitionerConfig,
) -> Result<(Partitioner, MetricsReport)> {
    check_model_shape(model, &prepared.dataset)?;
    let train_space = runtime(embed_space(model, &prepared.train_set()))?;
    let test_space = runtime(embed_space(model, &prepared.test_set(cfg)?))?;
    let mut pcfg = *pcfg;
    pcfg.k = pcfg.k.min(train_space.len());
    let partitioner = fit_partitioner(pcfg.kind, &train_space, &pcfg.settings(cfg.seed))?;
    let report = runtime(partitioner.evaluate(&test_space))?;
    Ok((partitioner, report))
}

fn check_model_shape(model: &Model, dataset: &Dataset) -> Result<()> {
    let mc = model.config();
    if mc.input_shape != dataset.shape() {
        return Err(CliError::Config(format!(
            "checkpoint expects {:?} samples, dataset has {:?}",
            mc.input_shape,
            dataset.shape()
        )));
    }
    if mc.num_classes < dataset.class_count() {
        return Err(CliError::Config(format!(
            "checkpoint knows {} classes, dataset has {}",
            mc.num_classes,
            dataset.class_count()
        )));
    }
    Ok(())
}

pub fn ensure_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|source| CliError::Output { path: out.to_path_buf(), source })
}

/// Writes `config.echo.json`: version stamp, command, resolved config and
/// command-specific provenance.
pub fn write_echo(out: &Path, command: &str, cfg: &ExperimentConfig, provenance: serde_json::Value) -> Result<()> {
    let doc = json!({ "version": VERSION, "command": command, "config": cfg, "provenance": provenance });
    let text = serde_json::to_string_pretty(&doc).expect("config serializes") + "\n";
    report::write_text(&out.join("config.echo.json"), &text)
}

fn dataset_provenance(prepared: &Prepared) -> serde_json::Value {
    json!({
        "dataset": prepared.dataset.provenance(),
        "samples": prepared.dataset.len(),
        "train": prepared.split.train.len(),
        "test": prepared.split.test.len(),
        "classes": prepared.dataset.class_names(),
    })
}

pub struct TrainOutcome {
    pub model: Model,
    pub history: TrainHistory,
    pub checkpoint: PathBuf,
}

pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> Result<TrainOutcome> {
    ensure_dir(out)?;
    let prepared = prepare(cfg)?;
    let (model, history) = train_model(cfg, &prepared)?;
    let checkpoint = out.join(MODEL_FILE);
    checkpoint::save_model(&checkpoint, &model, cfg)?;
    report::write_history(&out.join("history.csv"), &history)?;
    write_echo(out, "train", cfg, dataset_provenance(&prepared))?;
    Ok(TrainOutcome { model, history, checkpoint })
}

pub fn cmd_evaluate(
    model: &Model,
    cfg: &ExperimentConfig,
    pcfg: &PartitionerConfig,
    out: &Path,
) -> Result<MetricsReport> {
    ensure_dir(out)?;
    let prepared = prepare(cfg)?;
    let (partitioner, report) = evaluate_model(model, cfg, &prepared, pcfg)?;
    report::write_metrics(&out.join("metrics.csv"), &report, &[])?;
    match &report.confusion {
        Some(c) => report::write_confusion(&out.join("confusion.csv"), c, prepared.dataset.class_names())?,
        None => {
            let stale = out.join("confusion.csv");
            if stale.exists() {
                fs::remove_file(&stale).map_err(|source| CliError::Output { path: stale, source })?;
            }
        }
    }
    checkpoint::save_partitioner(&out.join(PARTITIONER_FILE), &partitioner)?;
    let mut cfg = cfg.clone();
    cfg.partitioner = *pcfg;
    write_echo(out, "evaluate", &cfg, dataset_provenance(&prepared))?;
    Ok(report)
}

/// One ablation variant's outcome.
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub axis: SweepAxis,
    pub variant: String,
    pub report: Option<MetricsReport>,
    pub error: Option<String>,
}

const LOSS_VARIANTS: [(&str, LossKind); 6] = [
    ("hybrid", LossKind::Hybrid),
    ("SM+TL", LossKind::SoftmaxTriplet),
    ("RTL", LossKind::Rtl),
    ("TL", LossKind::Triplet),
    ("SM", LossKind::Softmax),
    ("contrastive", LossKind::Contrastive),
];

fn default_variants(axis: SweepAxis, cfg: &ExperimentConfig) -> Vec<String> {
    match axis {
        SweepAxis::Losses => LOSS_VARIANTS[..5].iter().map(|(n, _)| n.to_string()).collect(),
        SweepAxis::Augmentations => ["R+S+G", "R", "S", "G", "none"].map(String::from).to_vec(),
        SweepAxis::Partitioners => PartitionerKind::ALL.iter().map(|k| k.name().to_string()).collect(),
        SweepAxis::Resolutions => cfg.ablate.resolutions.iter().map(usize::to_string).collect(),
    }
}

fn loss_variant(name: &str) -> Option<LossKind> {
    LOSS_VARIANTS
        .iter()
        .find(|(n, k)| n.eq_ignore_ascii_case(name) || k.name() == name)
        .map(|(_, k)| *k)
}

/// The config for one variant, or a message explaining why it is invalid.
fn variant_config(axis: SweepAxis, name: &str, base: &ExperimentConfig) -> Result<ExperimentConfig> {
    let mut cfg = base.clone();
    match axis {
        SweepAxis::Losses => {
            cfg.train.loss = loss_variant(name).ok_or_else(|| CliError::Config(format!("unknown loss variant `{name}`")))?;
        }
        SweepAxis::Augmentations => {
            cfg.train.augment =
                AugmentOps::parse(name).ok_or_else(|| CliError::Config(format!("unknown augmentation `{name}`")))?;
        }
        SweepAxis::Partitioners => {
            cfg.partitioner.kind =
                PartitionerKind::parse(name).ok_or_else(|| CliError::Config(format!("unknown partitioner `{name}`")))?;
        }
        SweepAxis::Resolutions => {
            let size: usize = name.parse().map_err(|_| CliError::Config(format!("bad resolution `{name}`")))?;
            match &mut cfg.dataset {
                DatasetSpec::Glyphs { size: s, .. } => *s = size,
                _ => return Err(CliError::Config("resolution sweeps need a glyph dataset".into())),
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs every variant of `axis` with the shared seed. A failing variant is
/// recorded in its row and the sweep continues.
pub fn cmd_ablate(cfg: &ExperimentConfig, axis: SweepAxis, out: &Path) -> Result<Vec<AblationRow>> {
    ensure_dir(out)?;
    if axis == SweepAxis::Resolutions && !matches!(cfg.dataset, DatasetSpec::Glyphs { .. }) {
        return Err(CliError::Config("resolution sweeps need a glyph dataset".into()));
    }
    let names = if cfg.ablate.variants.is_empty() { default_variants(axis, cfg) } else { cfg.ablate.variants.clone() };
    // Validate every variant before spending time on any of them.
    let configs = names.iter().map(|n| variant_config(axis, n, cfg)).collect::<Result<Vec<_>>>()?;

    // Partitioner variants share one trained embedder.
    let shared = if axis == SweepAxis::Partitioners {
        let prepared = prepare(cfg)?;
        let trained = train_model(cfg, &prepared);
        Some((prepared, trained))
    } else {
        None
    };

    let mut rows = Vec::with_capacity(names.len());
    for (name, vcfg) in names.iter().zip(&configs) {
        let result = match &shared {
            Some((prepared, trained)) => match trained {
                Ok((model, _)) => evaluate_model(model, vcfg, prepared, &vcfg.partitioner).map(|(_, r)| r),
                Err(e) => Err(CliError::Config(e.to_string())),
            },
            None => prepare(vcfg).and_then(|prepared| {
                let (model, _) = train_model(vcfg, &prepared)?;
                evaluate_model(&model, vcfg, &prepared, &vcfg.partitioner).map(|(_, r)| r)
            }),
        };
        let (report, error) = match result {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        };
        rows.push(AblationRow { axis, variant: name.clone(), report, error });
    }

    let header = ["axis", "variant", "accuracy_weighted", "precision_macro", "recall_macro", "f1_macro", "rand_index", "error"];
    let axis_name = serde_json::to_value(axis).expect("axis serializes");
    let csv_rows = rows.iter().map(|r| {
        let mut cells = vec![axis_name.as_str().unwrap_or_default().to_string(), r.variant.clone()];
        match &r.report {
            Some(rep) => cells.extend(report::metric_rows(rep).into_iter().map(|(_, v)| v)),
            None => cells.extend(std::iter::repeat_n(String::new(), 5)),
        }
        cells.push(r.error.clone().unwrap_or_default());
        cells
    });
    report::write_csv(&out.join("ablation.csv"), &header, csv_rows)?;
    write_echo(out, "ablate", cfg, json!({ "axis": axis, "variants": names }))?;
    Ok(rows)
}

pub struct ProjectOutcome {
    pub tsne: TsneResult,
    pub train_rand_index: f64,
    pub test_rand_index: f64,
    pub rows: usize,
}

/// Co-embeds train and test samples with t-SNE and annotates the kNN Rand
/// index of each split.
pub fn cmd_project(model: &Model, cfg: &ExperimentConfig, k: usize, out: &Path) -> Result<ProjectOutcome> {
    ensure_dir(out)?;
    let prepared = prepare(cfg)?;
    check_model_shape(model, &prepared.dataset)?;
    let train_set = prepared.train_set();
    let test_set = prepared.test_set(cfg)?;
    let train_space = runtime(embed_space(model, &train_set))?;
    let test_space = runtime(embed_space(model, &test_set))?;

    let knn = fit_partitioner(
        PartitionerKind::Knn,
        &train_space,
        &PartitionerConfig { kind: PartitionerKind::Knn, k: k.min(train_space.len()), components: 0 }.settings(cfg.seed),
    )?;
    let train_pred = runtime(knn.predict_all(train_space.points()))?;
    let test_pred = runtime(knn.predict_all(test_space.points()))?;
    let ri = |space: &EmbeddingSpace, pred: &[usize]| -> Result<f64> {
        runtime(rand_index(space.labels().unwrap_or(&[]), pred))
    };
    let (train_ri, test_ri) = (ri(&train_space, &train_pred)?, ri(&test_space, &test_pred)?);

    let mut all = train_space.points().data().to_vec();
    all.extend_from_slice(test_space.points().data());
    let n = train_space.len() + test_space.len();
    let joint = Matrix::new(n, train_space.dim(), all)?;
    let projected = tsne(&joint, &cfg.tsne).map_err(|e| match e {
        deepmetric_core::Error::InvalidConfig(m) => CliError::Config(m),
        other => CliError::Runtime(other),
    })?;

    let mut points = Vec::with_capacity(n);
    for (i, &id) in prepared.split.train.iter().enumerate() {
        points.push(LayoutPoint { id, truth: train_set.labels()[i], predicted: train_pred[i], split: "train" });
    }
    for (i, &id) in prepared.split.test.iter().enumerate() {
        points.push(LayoutPoint { id, truth: test_set.labels()[i], predicted: test_pred[i], split: "test" });
    }
    let names = prepared.dataset.class_names();
    report::write_layout(&out.join("layout.csv"), &projected.layout, &points, names)?;
    let caption = format!(
        "kNN (k={}) train RandIndex={} | test RandIndex={}",
        k,
        report::percent(train_ri),
        report::percent(test_ri)
    );
    report::write_text(&out.join("plot.svg"), &report::render_svg(&projected.layout, &points, names, &caption))?;
    let kl: Vec<_> = projected.kl_trace.iter().map(|&(it, v)| json!([it, v])).collect();
    write_echo(
        out,
        "project",
        cfg,
        json!({
            "train_rand_index": train_ri,
            "test_rand_index": test_ri,
            "kl_trace": kl,
            "unreachable_perplexity_rows": projected.calibration.unreachable,
        }),
    )?;
    Ok(ProjectOutcome { tsne: projected, train_rand_index: train_ri, test_rand_index: test_ri, rows: n })
}

/// Reference configuration for the full microfossil corpus: the ten tail
/// classes withheld in the original open-set study.
pub const REFERENCE_TAIL_CLASSES: [usize; 10] = [1, 5, 9, 14, 22, 23, 26, 29, 33, 34];

pub fn cmd_openset(cfg: &ExperimentConfig, withheld: &[usize], out: &Path) -> Result<OpenSetOutcome> {
    ensure_dir(out)?;
    let prepared = prepare(cfg)?;
    let spec = OpenSetSpec {
        withheld_classes: withheld.iter().copied().collect(),
        train: cfg.train.clone(),
        k: cfg.openset.k,
    };
    spec.validate(prepared.dataset.class_count())?;
    if !cfg.test_augment.is_none() {
        return Err(CliError::Config("open-set runs do not support test_augment".into()));
    }
    let model = untrained_model(cfg, &prepared.dataset)?;
    let outcome = run_open_set(model, &prepared.dataset, &prepared.split, &spec).map_err(|e| match e {
        deepmetric_core::Error::NonFinite(_) | deepmetric_core::Error::NonFiniteLoss { .. } => CliError::Runtime(e),
        other => CliError::from(other),
    })?;
    let unseen_extra = [
        ("accuracy_macro".to_string(), report::percent(outcome.unseen.scores.map_or(0.0, |s| s.recall_macro))),
        ("chance_weighted".to_string(), report::percent(outcome.unseen_chance)),
    ];
    let seen_extra = [(
        "accuracy_macro".to_string(),
        report::percent(outcome.seen.scores.map_or(0.0, |s| s.recall_macro)),
    )];
    report::write_metrics(&out.join("metrics.seen.csv"), &outcome.seen, &seen_extra)?;
    report::write_metrics(&out.join("metrics.unseen.csv"), &outcome.unseen, &unseen_extra)?;
    report::write_history(&out.join("history.csv"), &outcome.history)?;
    let names = prepared.dataset.class_names();
    let withheld_names: Vec<&String> = spec.withheld_classes.iter().map(|&c| &names[c]).collect();
    let mut echo = cfg.clone();
    echo.openset.withheld = spec.withheld_classes.iter().copied().collect();
    write_echo(
        out,
        "openset",
        &echo,
        json!({
            "withheld_classes": spec.withheld_classes,
            "withheld_names": withheld_names,
            "withheld_samples_drawn": spec.withheld_classes.iter().map(|&c| outcome.history.class_sample_counts[c]).collect::<Vec<_>>(),
            "reference_tail_classes": REFERENCE_TAIL_CLASSES,
            "dataset": dataset_provenance(&prepared),
        }),
    )?;
    Ok(outcome)
}
