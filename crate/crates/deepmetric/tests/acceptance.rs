//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! `cargo test -p deepmetric --test acceptance` runs everything; pass
//! criterion numbers (`-- 2 7`) to run a subset.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use deepmetric::commands::{self, prepare, train_model, untrained_model};
use deepmetric::config::{ExperimentConfig, PartitionerConfig, SweepAxis};
use deepmetric_core::autodiff::{finite_difference_check, Bindings, Graph, NodeId, Tensor};
use deepmetric_core::data::gen_blobs;
use deepmetric_core::embedder::embed_space;
use deepmetric_core::losses::{
    batch_loss, contrastive_node, rtl_node, softmax_ce_node, triplet_node, LossConfig, LossKind,
};
use deepmetric_core::metrics::{classification_metrics, rand_index, ConfusionMatrix};
use deepmetric_core::mining::{all_valid_triplets, batch_hard_mine, Batch, Triplet};
use deepmetric_core::openset::{run_closed_set, run_open_set, OpenSetSpec};
use deepmetric_core::partition::{fit_gmm, fit_partitioner, GmmConfig, PartitionerKind};
use deepmetric_core::projection::{silhouette_score, tsne, TsneConfig};
use deepmetric_core::rng::{self, Rng};
use deepmetric_core::Matrix;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

type Check = fn() -> Outcome;

const CRITERIA: [(u32, &str, Check); 10] = [
    (1, "gradient correctness", gradients),
    (2, "mining oracle", mining_oracle),
    (3, "closed-set synthetic benchmark", closed_set),
    (4, "loss ablation ordering", loss_ablation),
    (5, "augmentation effect", augmentation_effect),
    (6, "open-set property", open_set),
    (7, "metrics oracles", metrics_oracles),
    (8, "partitioner sanity", partitioner_sanity),
    (9, "t-SNE convergence and separation", tsne_behaviour),
    (10, "CLI determinism", determinism),
];

fn main() -> ExitCode {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let named: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-') && a.parse::<u32>().is_err()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, check) in CRITERIA {
        let selected = if wanted.is_empty() && named.is_empty() {
            true
        } else {
            wanted.contains(&id) || named.iter().any(|n| name.contains(n.as_str()))
        };
        if !selected {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {verdict}  {name}: {} [{:.1}s]", result.detail, start.elapsed().as_secs_f64());
        if !result.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

// ---------------------------------------------------------------- 1

const GRAD_SEEDS: u64 = 100;
const GRAD_STEP: f64 = 1e-5;
const GRAD_TOLERANCE: f64 = 1e-4;
/// Minimum distance of every hinge argument from its kink.
const KINK_CLEARANCE: f64 = 0.05;

fn random_tensor(r: &mut Rng, shape: Vec<usize>, scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| scale * rng::normal(r)).collect()).unwrap()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Embeddings, labels and triplets whose hinges are all clear of their
/// kinks (rejection sampled).
type LossInputs = (Tensor, Tensor, Vec<usize>, Vec<Triplet>, Vec<(usize, usize, bool)>);

fn loss_inputs(r: &mut Rng, cfg: &LossConfig) -> LossInputs {
    let (b, d, k) = (6, 4, 3);
    let labels = vec![0, 0, 1, 1, 2, 2];
    loop {
        let emb = random_tensor(r, vec![b, d], 0.6);
        let rows: Vec<&[f64]> = emb.data().chunks(d).collect();
        let triplets: Vec<Triplet> = all_valid_triplets(&Batch::new(Matrix::new(b, d, emb.data().to_vec()).unwrap(), labels.clone(), (0..b).collect()).unwrap())
            .into_iter()
            .step_by(3)
            .collect();
        let pairs: Vec<(usize, usize, bool)> = triplets
            .iter()
            .flat_map(|t| [(t.anchor, t.positive, false), (t.anchor, t.negative, true)])
            .collect();
        let clear = triplets.iter().all(|t| {
            let (dap, dan) = (dist(rows[t.anchor], rows[t.positive]), dist(rows[t.anchor], rows[t.negative]));
            (dap - dan + cfg.margin_alpha).abs() > KINK_CLEARANCE && dap > KINK_CLEARANCE && dan > KINK_CLEARANCE
        }) && pairs.iter().all(|&(i, j, _)| {
            let dd = dist(rows[i], rows[j]);
            (cfg.margin_alpha - dd).abs() > KINK_CLEARANCE && dd > KINK_CLEARANCE
        });
        if clear {
            let logits = random_tensor(r, vec![b, k], 1.5);
            return (emb.tracked(), logits.tracked(), labels, triplets, pairs);
        }
    }
}

fn check_graph(g: &Graph, b: &Bindings<'_>, out: NodeId) -> f64 {
    let report = finite_difference_check(g, b, out, GRAD_STEP, GRAD_TOLERANCE).unwrap();
    assert!(!report.entries.is_empty());
    if report.entries.iter().any(|e| e.non_finite) {
        return f64::INFINITY;
    }
    report.max_rel_error()
}

fn loss_case(name: &str, seed: u64) -> f64 {
    let cfg = LossConfig::default();
    let mut r = rng::stream(seed, &[1, name.len() as u64]);
    let (emb, logits, labels, triplets, pairs) = loss_inputs(&mut r, &cfg);
    let mut g = Graph::new();
    let (e, l) = (g.input("emb"), g.input("logits"));
    let out = match name {
        "contrastive" => contrastive_node(&mut g, e, &pairs, &cfg),
        "triplet" => triplet_node(&mut g, e, &triplets, &cfg),
        "rtl" => rtl_node(&mut g, e, &triplets, &cfg),
        "softmax" => softmax_ce_node(&mut g, l, &labels),
        "hybrid" => batch_loss(&mut g, LossKind::Hybrid, e, l, &labels, &triplets, &cfg).unwrap().total,
        "softmax-triplet" => batch_loss(&mut g, LossKind::SoftmaxTriplet, e, l, &labels, &triplets, &cfg).unwrap().total,
        _ => unreachable!(),
    };
    // Bind only what the loss reads so untouched inputs are not probed.
    let mut b = Bindings::new();
    b.bind("emb", &emb);
    b.bind("logits", &logits);
    check_graph(&g, &b, out)
}

/// Scalar probe `sum(y ⊙ w)` with a fixed random `w`, so every output
/// element contributes a distinct gradient.
fn probe(g: &mut Graph, y: NodeId, w: Tensor) -> NodeId {
    let c = g.constant(w);
    let m = g.mul(y, c);
    g.sum(m)
}

fn layer_case(name: &str, seed: u64) -> f64 {
    let mut r = rng::stream(seed, &[2, name.len() as u64]);
    let mut g = Graph::new();
    let x = g.input("x");
    match name {
        "dense" => {
            let (w, bias) = (g.input("w"), g.input("b"));
            let y = g.matmul(x, w);
            let y = g.add_bias(y, bias);
            let out = probe(&mut g, y, random_tensor(&mut r, vec![3, 5], 1.0));
            let (tx, tw, tb) = (
                random_tensor(&mut r, vec![3, 4], 1.0).tracked(),
                random_tensor(&mut r, vec![4, 5], 1.0).tracked(),
                random_tensor(&mut r, vec![5], 1.0).tracked(),
            );
            check_graph(&g, &Bindings::new().with("x", &tx).with("w", &tw).with("b", &tb), out)
        }
        "conv2d" => {
            let (w, bias) = (g.input("w"), g.input("b"));
            let y = g.conv2d(x, w, bias);
            let out = probe(&mut g, y, random_tensor(&mut r, vec![2, 3, 5, 5], 1.0));
            let (tx, tw, tb) = (
                random_tensor(&mut r, vec![2, 2, 5, 5], 1.0).tracked(),
                random_tensor(&mut r, vec![3, 2, 3, 3], 1.0).tracked(),
                random_tensor(&mut r, vec![3], 1.0).tracked(),
            );
            check_graph(&g, &Bindings::new().with("x", &tx).with("w", &tw).with("b", &tb), out)
        }
        "mean-pool" => {
            let y = g.mean_pool2d(x, 2);
            let out = probe(&mut g, y, random_tensor(&mut r, vec![2, 3, 2, 2], 1.0));
            let tx = random_tensor(&mut r, vec![2, 3, 4, 4], 1.0).tracked();
            check_graph(&g, &Bindings::new().with("x", &tx), out)
        }
        "relu" => {
            let y = g.relu(x);
            let out = probe(&mut g, y, random_tensor(&mut r, vec![4, 6], 1.0));
            let mut tx = random_tensor(&mut r, vec![4, 6], 1.0);
            // Keep inputs clear of the kink at zero.
            for v in tx.data_mut() {
                if v.abs() < KINK_CLEARANCE {
                    *v = KINK_CLEARANCE.copysign(*v) * 2.0;
                }
            }
            let tx = tx.tracked();
            check_graph(&g, &Bindings::new().with("x", &tx), out)
        }
        "flatten" => {
            let y = g.flatten(x);
            let out = probe(&mut g, y, random_tensor(&mut r, vec![2, 12], 1.0));
            let tx = random_tensor(&mut r, vec![2, 3, 2, 2], 1.0).tracked();
            check_graph(&g, &Bindings::new().with("x", &tx), out)
        }
        _ => unreachable!(),
    }
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let losses = ["contrastive", "triplet", "rtl", "softmax", "hybrid", "softmax-triplet"];
    let layers = ["dense", "conv2d", "mean-pool", "relu", "flatten"];
    let mut worst = (0.0f64, String::new());
    let mut checks = 0;
    for seed in 0..GRAD_SEEDS {
        for name in losses {
            let e = loss_case(name, seed);
            checks += 1;
            if e.is_nan() || e > worst.0 {
                worst = (e, format!("{name} seed {seed}"));
            }
        }
        for name in layers {
            let e = layer_case(name, seed);
            checks += 1;
            if e.is_nan() || e > worst.0 {
                worst = (e, format!("{name} seed {seed}"));
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = worst.0 < GRAD_TOLERANCE && elapsed < Duration::from_secs(60);
    outcome(
        pass,
        format!(
            "{checks} checks over {GRAD_SEEDS} seeds; max relative error {:.2e} ({}) < {GRAD_TOLERANCE:e}; {:.1}s < 60s",
            worst.0,
            worst.1,
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 2

/// Exhaustive oracle: for each anchor, the valid triplet maximizing
/// `d(a,p) − d(a,n)`, earliest in lexicographic order on ties.
fn exhaustive_hardest(batch: &Batch) -> Vec<Triplet> {
    let rows: Vec<&[f64]> = batch.embeddings.iter_rows().collect();
    let mut best: Vec<Option<(f64, f64, Triplet)>> = vec![None; batch.len()];
    for t in all_valid_triplets(batch) {
        let dap = dist(rows[t.anchor], rows[t.positive]);
        let dan = dist(rows[t.anchor], rows[t.negative]);
        let slot = &mut best[t.anchor];
        let better = match slot {
            None => true,
            Some((bp, bn, _)) => dap > *bp || (dap == *bp && dan < *bn),
        };
        if better {
            *slot = Some((dap, dan, t));
        }
    }
    best.into_iter().flatten().map(|(_, _, t)| t).collect()
}

fn mining_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng::seeded(2024);
    let mut mismatches = 0;
    let mut mined = 0;
    let mut with_duplicates = 0;
    for _ in 0..500 {
        let b = 2 + (rng::uniform(&mut r, 0.0, 15.0) as usize).min(14);
        let classes = 1 + (rng::uniform(&mut r, 0.0, 4.0) as usize).min(3);
        let dim = 1 + (rng::uniform(&mut r, 0.0, 4.0) as usize).min(3);
        let labels: Vec<usize> = (0..b).map(|_| (rng::uniform(&mut r, 0.0, classes as f64) as usize).min(classes - 1)).collect();
        let mut data: Vec<f64> = (0..b * dim).map(|_| rng::normal(&mut r)).collect();
        // Duplicate rows exercise the lowest-index tie-break.
        if rng::uniform(&mut r, 0.0, 1.0) < 0.3 && b >= 3 {
            with_duplicates += 1;
            let (src, dst) = (0, b - 1);
            let row: Vec<f64> = data[src * dim..(src + 1) * dim].to_vec();
            data[dst * dim..(dst + 1) * dim].copy_from_slice(&row);
        }
        let batch = Batch::new(Matrix::new(b, dim, data).unwrap(), labels, (0..b).collect()).unwrap();
        let got = batch_hard_mine(&batch).triplets;
        let want = exhaustive_hardest(&batch);
        mined += got.len();
        if got != want {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0 && elapsed < Duration::from_secs(60),
        format!(
            "500 batches (B <= 16, {with_duplicates} with duplicate rows), {mined} triplets, {mismatches} mismatches; {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 3

fn config(json: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(json).unwrap().resolve(None).unwrap()
}

/// Trains on the config's train split and scores the test split with kNN.
fn knn_accuracy(cfg: &ExperimentConfig) -> (f64, f64) {
    let prepared = prepare(cfg).unwrap();
    let (model, _) = train_model(cfg, &prepared).unwrap();
    let pcfg = PartitionerConfig { kind: PartitionerKind::Knn, k: 5, components: 0 };
    let (_, report) = commands::evaluate_model(&model, cfg, &prepared, &pcfg).unwrap();
    (report.accuracy().unwrap(), report.rand_index.unwrap())
}

fn closed_set() -> Outcome {
    let limit = Duration::from_secs(600);
    let blobs = config(
        r#"{"seed": 11, "dataset": {"kind": "blobs", "classes": 5, "per_class": 200, "dim": 10, "separation": 10.0},
            "train": {"loss": "hybrid", "epochs": 30, "learning_rate": 0.01, "validation_fraction": 0.0,
                      "loss_config": {"lambda_mix": 0.01}}}"#,
    );
    let t = Instant::now();
    let (blob_acc, _) = knn_accuracy(&blobs);
    let blob_time = t.elapsed();
    let glyphs = config(
        r#"{"seed": 11, "dataset": {"kind": "glyphs", "classes": 8, "per_class": 150, "size": 32},
            "train": {"loss": "hybrid", "epochs": 60, "learning_rate": 0.01, "validation_fraction": 0.0,
                      "loss_config": {"lambda_mix": 0.01}}}"#,
    );
    let t = Instant::now();
    let (glyph_acc, _) = knn_accuracy(&glyphs);
    let glyph_time = t.elapsed();
    let pass = blob_acc >= 0.95 && glyph_acc >= 0.90 && blob_time < limit && glyph_time < limit;
    outcome(
        pass,
        format!(
            "blobs kNN accuracy {:.1}% (>= 95%, {:.1}s); glyphs {:.1}% (>= 90%, {:.1}s)",
            100.0 * blob_acc,
            blob_time.as_secs_f64(),
            100.0 * glyph_acc,
            glyph_time.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 4, 5

fn sweep(cfg: &ExperimentConfig, axis: SweepAxis, variants: &[&str]) -> Vec<(f64, f64)> {
    let mut cfg = cfg.clone();
    cfg.ablate.variants = variants.iter().map(|s| s.to_string()).collect();
    let dir = tempfile::tempdir().unwrap();
    commands::cmd_ablate(&cfg, axis, dir.path())
        .unwrap()
        .into_iter()
        .map(|row| {
            let rep = row.report.unwrap_or_else(|| panic!("variant {} failed: {:?}", row.variant, row.error));
            (rep.accuracy().unwrap(), rep.rand_index.unwrap())
        })
        .collect()
}

const ABLATION_GLYPHS: &str = r#"{"kind": "glyphs", "classes": 8, "per_class": 100, "size": 32}"#;

fn loss_ablation() -> Outcome {
    let mut held = 0;
    let mut lines = Vec::new();
    for seed in [1u64, 2, 3] {
        let cfg = config(&format!(
            r#"{{"seed": {seed}, "dataset": {ABLATION_GLYPHS},
                "train": {{"epochs": 20, "learning_rate": 0.01, "validation_fraction": 0.0}}}}"#
        ));
        let rows = sweep(&cfg, SweepAxis::Losses, &["hybrid", "SM", "RTL"]);
        let (hybrid, softmax, rtl) = (rows[0], rows[1], rows[2]);
        let ok = hybrid.0 >= softmax.0 - 0.01 && hybrid.1 >= rtl.1;
        held += usize::from(ok);
        lines.push(format!(
            "seed {seed}: acc hybrid {:.1} vs SM {:.1}, RI hybrid {:.1} vs RTL {:.1} {}",
            100.0 * hybrid.0,
            100.0 * softmax.0,
            100.0 * hybrid.1,
            100.0 * rtl.1,
            if ok { "ok" } else { "violated" }
        ));
    }
    outcome(held >= 2, format!("{held}/3 seeds hold ({})", lines.join("; ")))
}

fn augmentation_effect() -> Outcome {
    let mut held = 0;
    let mut lines = Vec::new();
    for seed in [1u64, 2, 3] {
        let cfg = config(&format!(
            r#"{{"seed": {seed}, "dataset": {ABLATION_GLYPHS}, "test_augment": "R",
                "train": {{"epochs": 30, "learning_rate": 0.01, "validation_fraction": 0.0}}}}"#
        ));
        let rows = sweep(&cfg, SweepAxis::Augmentations, &["R+S+G", "none"]);
        let gap = rows[0].0 - rows[1].0;
        let ok = gap >= 0.05;
        held += usize::from(ok);
        lines.push(format!(
            "seed {seed}: R+S+G {:.1} vs none {:.1} (gap {:+.1})",
            100.0 * rows[0].0,
            100.0 * rows[1].0,
            100.0 * gap
        ));
    }
    outcome(held >= 2, format!("{held}/3 seeds with gap >= 5 points on a rotated test set ({})", lines.join("; ")))
}

// ---------------------------------------------------------------- 6

fn open_set() -> Outcome {
    let mut held = 0;
    let mut lines = Vec::new();
    for seed in 1u64..=5 {
        let cfg = config(&format!(
            r#"{{"seed": {seed}, "dataset": {ABLATION_GLYPHS},
                "train": {{"epochs": 20, "learning_rate": 0.01, "validation_fraction": 0.0}}}}"#
        ));
        let prepared = prepare(&cfg).unwrap();
        let spec = OpenSetSpec::new([6, 7], cfg.train.clone());
        let model = untrained_model(&cfg, &prepared.dataset).unwrap();
        let open = run_open_set(model.clone(), &prepared.dataset, &prepared.split, &spec).unwrap();
        let closed = run_closed_set(model, &prepared.dataset, &prepared.split, &spec).unwrap();
        let unseen = open.unseen.accuracy().unwrap();
        let (seen_open, seen_closed) = (open.seen.accuracy().unwrap(), closed.seen.accuracy().unwrap());
        let never_sampled = spec.withheld_classes.iter().all(|&c| open.history.class_sample_counts[c] == 0);
        let ok = never_sampled && unseen >= 2.0 * open.unseen_chance && (seen_open - seen_closed).abs() <= 0.03;
        held += usize::from(ok);
        lines.push(format!(
            "seed {seed}: unseen {:.1} vs 2x chance {:.1}, seen {:.1} vs closed {:.1}",
            100.0 * unseen,
            200.0 * open.unseen_chance,
            100.0 * seen_open,
            100.0 * seen_closed
        ));
    }
    outcome(held >= 4, format!("{held}/5 seeds hold ({})", lines.join("; ")))
}

// ---------------------------------------------------------------- 7

fn brute_rand_index(a: &[usize], b: &[usize]) -> f64 {
    let (mut agree, mut total) = (0u64, 0u64);
    for i in 0..a.len() {
        for j in (i + 1)..a.len() {
            total += 1;
            agree += u64::from((a[i] == a[j]) == (b[i] == b[j]));
        }
    }
    agree as f64 / total as f64
}

fn metrics_oracles() -> Outcome {
    let mut r = rng::seeded(77);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = 2 + (rng::uniform(&mut r, 0.0, 200.0) as usize);
        let ka = 1 + (rng::uniform(&mut r, 0.0, 6.0) as usize);
        let kb = 1 + (rng::uniform(&mut r, 0.0, 6.0) as usize);
        let a: Vec<usize> = (0..n).map(|_| rng::uniform(&mut r, 0.0, ka as f64) as usize).collect();
        let b: Vec<usize> = (0..n).map(|_| rng::uniform(&mut r, 0.0, kb as f64) as usize).collect();
        worst = worst.max((rand_index(&a, &b).unwrap() - brute_rand_index(&a, &b)).abs());
    }
    let c = ConfusionMatrix::from_counts(2, vec![9, 1, 4, 6]).unwrap();
    let s = classification_metrics(&c).unwrap();
    let expected = [
        15.0 / 20.0,
        (9.0 / 13.0 + 6.0 / 7.0) / 2.0,
        (9.0 / 10.0 + 6.0 / 10.0) / 2.0,
        (18.0 / 23.0 + 12.0 / 17.0) / 2.0,
    ];
    let got = [s.accuracy, s.precision_macro, s.recall_macro, s.f1_macro];
    let fixture_err = got.iter().zip(expected).map(|(g, e)| (g - e).abs()).fold(0.0, f64::max);
    outcome(
        worst <= 1e-12 && fixture_err <= 1e-12,
        format!(
            "Rand index max deviation {worst:.1e} over 100 partitions; [[9,1],[4,6]] acc/P/R/F1 = {:.4}/{:.4}/{:.4}/{:.4}, max error {fixture_err:.1e}",
            got[0], got[1], got[2], got[3]
        ),
    )
}

// ---------------------------------------------------------------- 8

fn partitioner_sanity() -> Outcome {
    let cfg = config(
        r#"{"seed": 5, "dataset": {"kind": "blobs", "classes": 5, "per_class": 200, "dim": 10, "separation": 10.0},
            "train": {"epochs": 30, "learning_rate": 0.01, "validation_fraction": 0.0}}"#,
    );
    let prepared = prepare(&cfg).unwrap();
    let (model, _) = train_model(&cfg, &prepared).unwrap();
    let train_space = embed_space(&model, &prepared.train_set()).unwrap();
    let test_space = embed_space(&model, &prepared.test_set(&cfg).unwrap()).unwrap();
    let truth = test_space.labels().unwrap().to_vec();
    let chance_acc = deepmetric_core::metrics::frequency_chance(&truth, train_space.labels().unwrap());
    // Chance Rand index: truth against its own shuffles.
    let mut r = rng::seeded(8);
    let chance_ri = (0..20)
        .map(|_| {
            let mut shuffled = truth.clone();
            rng::shuffle(&mut shuffled, &mut r);
            rand_index(&truth, &shuffled).unwrap()
        })
        .sum::<f64>()
        / 20.0;

    let mut pass = true;
    let mut parts = Vec::new();
    for kind in PartitionerKind::ALL {
        let p = fit_partitioner(kind, &train_space, &PartitionerConfig { kind, k: 5, components: 0 }.settings(cfg.seed)).unwrap();
        let report = p.evaluate(&test_space).unwrap();
        let (score, chance, metric) = match report.accuracy() {
            Some(a) => (a, chance_acc, "acc"),
            None => (report.rand_index.unwrap(), chance_ri, "RI"),
        };
        pass &= score > chance;
        parts.push(format!("{} {metric} {:.1} (chance {:.1})", kind.name(), 100.0 * score, 100.0 * chance));
    }
    let mut monotone = 0;
    let runs = 10;
    for seed in 0..runs {
        let g = fit_gmm(train_space.points(), &GmmConfig { components: 5, seed, ..GmmConfig::default() }).unwrap();
        monotone += usize::from(g.is_monotone());
    }
    pass &= monotone == runs as usize;
    outcome(pass, format!("{}; GMM log-likelihood non-decreasing in {monotone}/{runs} runs", parts.join(", ")))
}

// ---------------------------------------------------------------- 9

fn tsne_behaviour() -> Outcome {
    let runs = 20;
    let mut monotone = 0;
    let mut min_silhouette = f64::INFINITY;
    for seed in 0..runs {
        let ds = gen_blobs(5, 30, 10, 10.0, 100 + seed).unwrap();
        let points = Matrix::new(ds.len(), 10, ds.samples().to_vec()).unwrap();
        let cfg = TsneConfig { kl_every: 1, seed, ..TsneConfig::default() };
        let out = tsne(&points, &cfg).unwrap();
        let tail: Vec<f64> = out.kl_trace.iter().filter(|(it, _)| *it > 500).map(|&(_, v)| v).collect();
        if tail.windows(2).all(|w| w[1] <= w[0]) {
            monotone += 1;
        }
        min_silhouette = min_silhouette.min(silhouette_score(&out.layout, ds.labels()).unwrap());
    }
    outcome(
        monotone >= 19 && min_silhouette > 0.5,
        format!("KL non-increasing over the last 500 iterations in {monotone}/{runs} runs (>= 19); min silhouette {min_silhouette:.3} (> 0.5)"),
    )
}

// ---------------------------------------------------------------- 10

fn run_cli(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_deepmetric")).args(args).output().map(|o| o.status.success()).unwrap_or(false)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let configs = [
        ("blobs", r#"{"seed": 7, "dataset": {"kind": "blobs", "classes": 4, "per_class": 50, "dim": 6, "separation": 6.0}, "train": {"epochs": 5}}"#),
        ("glyphs", r#"{"seed": 7, "dataset": {"kind": "glyphs", "classes": 4, "per_class": 20, "size": 16}, "train": {"epochs": 3, "augment": "R+S+G"}}"#),
    ];
    let mut identical = 0;
    let mut compared = 0;
    let mut failures = Vec::new();
    for (name, json) in configs {
        let cfg_path = dir.path().join(format!("{name}.json"));
        std::fs::write(&cfg_path, json).unwrap();
        let cfg = cfg_path.to_str().unwrap();
        for run in ["a", "b"] {
            let out = dir.path().join(format!("{name}-{run}"));
            let out = out.to_str().unwrap();
            if !run_cli(&["train", "--config", cfg, "--out", out]) || !run_cli(&["evaluate", "--out", out]) {
                failures.push(format!("{name} run {run} failed"));
            }
        }
        for file in ["metrics.csv", "model.ckpt", "partitioner.ckpt"] {
            let read = |run: &str| std::fs::read(dir.path().join(format!("{name}-{run}")).join(file)).ok();
            compared += 1;
            match (read("a"), read("b")) {
                (Some(a), Some(b)) if a == b => identical += 1,
                _ => failures.push(format!("{name}/{file} differs")),
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!("{identical}/{compared} output files byte-identical across two runs{}", if failures.is_empty() { String::new() } else { format!(" ({})", failures.join(", ")) }),
    )
}
