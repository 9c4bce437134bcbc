use deepmetric_core::data::{gen_blobs, split, SplitSpec};
use deepmetric_core::embedder::{build_model, embed_space, train, ModelConfig, TrainConfig};
use deepmetric_core::losses::{LossConfig, LossKind};
use deepmetric_core::partition::{fit_partitioner, PartitionerKind, PartitionerSettings};

fn blob_config(loss: LossKind, epochs: usize) -> TrainConfig {
    TrainConfig { loss, epochs, seed: 4, validation_fraction: 0.0, ..TrainConfig::default() }
}

#[test]
fn hybrid_training_separates_blobs() {
    let ds = gen_blobs(4, 80, 6, 8.0, 1).unwrap();
    let parts = &split(&ds, &SplitSpec::Holdout { test_fraction: 0.25, seed: 2 }).unwrap()[0];
    let (train_set, test_set) = (ds.subset(&parts.train), ds.subset(&parts.test));
    let model = build_model(&ModelConfig::mlp(6, 32, 8, 4), 3).unwrap();
    let (model, history) = train(model, &train_set, &blob_config(LossKind::Hybrid, 15)).unwrap();
    assert_eq!(history.epochs.len(), 15);
    assert!(history.epochs.last().unwrap().total_loss < history.epochs[0].total_loss);
    let knn = fit_partitioner(PartitionerKind::Knn, &embed_space(&model, &train_set).unwrap(), &PartitionerSettings::default()).unwrap();
    let report = knn.evaluate(&embed_space(&model, &test_set).unwrap()).unwrap();
    assert!(report.accuracy().unwrap() > 0.95, "{:?}", report.accuracy());
}

#[test]
fn training_is_deterministic() {
    let ds = gen_blobs(3, 20, 4, 5.0, 7).unwrap();
    let run = || {
        let model = build_model(&ModelConfig::mlp(4, 8, 3, 3), 1).unwrap();
        let cfg = TrainConfig { validation_fraction: 0.2, ..blob_config(LossKind::Rtl, 4) };
        train(model, &ds, &cfg).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn zero_mix_hybrid_matches_softmax() {
    let ds = gen_blobs(3, 20, 4, 5.0, 7).unwrap();
    let run = |loss, lambda_mix| {
        let model = build_model(&ModelConfig::mlp(4, 8, 3, 3), 1).unwrap();
        let cfg = TrainConfig { loss_config: LossConfig { lambda_mix, ..LossConfig::default() }, ..blob_config(loss, 3) };
        train(model, &ds, &cfg).unwrap()
    };
    let (hybrid_model, hybrid) = run(LossKind::Hybrid, 0.0);
    let (softmax_model, softmax) = run(LossKind::Softmax, 0.01);
    assert_eq!(hybrid_model, softmax_model);
    for (h, s) in hybrid.epochs.iter().zip(&softmax.epochs) {
        assert_eq!(h.softmax_loss, s.softmax_loss);
        assert_eq!(h.total_loss, s.total_loss);
    }
}

#[test]
fn withheld_classes_are_never_sampled() {
    let ds = gen_blobs(4, 10, 3, 5.0, 2).unwrap();
    let keep: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels()[i] != 2).collect();
    let model = build_model(&ModelConfig::mlp(3, 8, 3, 4), 1).unwrap();
    let (_, history) = train(model, &ds.subset(&keep), &blob_config(LossKind::Hybrid, 2)).unwrap();
    assert_eq!(history.class_sample_counts[2], 0);
    assert_eq!(history.class_sample_counts[0], 20);
}
