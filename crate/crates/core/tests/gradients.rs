use deepmetric_core::autodiff::{finite_difference_check, Bindings, Graph, Tensor};
use deepmetric_core::embedder::{build_model, ModelConfig};
use deepmetric_core::losses::{batch_loss, LossConfig, LossKind};
use deepmetric_core::mining::{valid_triplets, Triplet};
use deepmetric_core::rng;

fn random(shape: Vec<usize>, seed: u64) -> Tensor {
    let mut r = rng::seeded(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng::normal(&mut r)).collect()).unwrap()
}

fn model_loss_check(config: ModelConfig, input: Tensor, kind: LossKind) {
    let model = build_model(&config, 9).unwrap();
    let labels = vec![0, 0, 1, 1];
    let triplets: Vec<Triplet> = valid_triplets(&labels);
    let mut g = Graph::new();
    let x = g.input("x");
    let (emb, logits) = model.forward_graph(&mut g, x);
    let loss = batch_loss(&mut g, kind, emb, logits, &labels, &triplets, &LossConfig::default())
        .unwrap()
        .total;
    let mut b = Bindings::new();
    model.bind(&mut b);
    b.bind("x", &input);
    let report = finite_difference_check(&g, &b, loss, 1e-6, 1e-4).unwrap();
    assert!(report.passed(), "max relative error {}", report.max_rel_error());
}

#[test]
fn mlp_model_gradients_match_finite_differences() {
    for kind in [LossKind::Softmax, LossKind::Hybrid, LossKind::Triplet] {
        model_loss_check(ModelConfig::mlp(5, 6, 3, 2), random(vec![4, 5], 1), kind);
    }
}

#[test]
fn conv_model_gradients_match_finite_differences() {
    model_loss_check(ModelConfig::conv(8, 8, 3, 2), random(vec![4, 1, 8, 8], 2), LossKind::Hybrid);
}

#[test]
fn untracked_inputs_get_no_gradient() {
    let mut g = Graph::new();
    let x = g.input("x");
    let w = g.input("w");
    let y = g.matmul(x, w);
    let out = g.sum(y);
    let (tx, tw) = (random(vec![2, 3], 3), random(vec![3, 2], 4).tracked());
    let b = Bindings::new().with("x", &tx).with("w", &tw);
    let grads = g.evaluate(&b).unwrap().backward(&g, out).unwrap();
    assert!(grads.get("x").is_none());
    assert_eq!(grads.get("w").unwrap().len(), 6);
}
