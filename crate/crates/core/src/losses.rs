//! Metric-learning losses.
//!
//! Each loss exists twice: as a direct scalar formula over plain slices, and
//! as a differentiable batch fragment appended to a [`Graph`]. Batch
//! fragments average over their pairs, triplets or samples.
//!
//! Conventions:
//! * distances are plain Euclidean, `sqrt(max(‖a−b‖², 1e-12))`;
//! * in the contrastive loss `y_different = true` marks a pair of different
//!   classes, whose distance is pushed above the margin;
//! * softmax cross-entropy is `−log softmax(logits)[class]`.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId, Tensor, SQRT_FLOOR};
use crate::mining::Triplet;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Margin of the contrastive and triplet losses.
    pub margin_alpha: f64,
    /// Weight of the metric term in the hybrid losses.
    pub lambda_mix: f64,
    /// Added to the negative distance before taking its reciprocal.
    pub rtl_epsilon: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            margin_alpha: 0.5,
            lambda_mix: 0.01,
            rtl_epsilon: 1e-8,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin_alpha >= 0.0) || !self.margin_alpha.is_finite() {
            return Err(Error::InvalidConfig("margin_alpha must be non-negative".into()));
        }
        if !(self.lambda_mix >= 0.0) || !self.lambda_mix.is_finite() {
            return Err(Error::InvalidConfig("lambda_mix must be non-negative".into()));
        }
        if !(self.rtl_epsilon > 0.0) {
            return Err(Error::InvalidConfig("rtl_epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Contrastive,
    Triplet,
    Rtl,
    Softmax,
    /// Softmax cross-entropy plus λ · reciprocal triplet loss.
    Hybrid,
    /// Softmax cross-entropy plus λ · margin triplet loss.
    SoftmaxTriplet,
}

impl LossKind {
    pub const ALL: [LossKind; 6] = [
        LossKind::Hybrid,
        LossKind::SoftmaxTriplet,
        LossKind::Rtl,
        LossKind::Triplet,
        LossKind::Softmax,
        LossKind::Contrastive,
    ];

    /// Whether the loss needs same/different-class triplets.
    pub fn uses_triplets(self) -> bool {
        !matches!(self, LossKind::Softmax)
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Contrastive => "contrastive",
            LossKind::Triplet => "triplet",
            LossKind::Rtl => "rtl",
            LossKind::Softmax => "softmax",
            LossKind::Hybrid => "hybrid",
            LossKind::SoftmaxTriplet => "softmax-triplet",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

pub fn euclidean_distance(x1: &[f64], x2: &[f64]) -> Result<f64> {
    check_dims(x1, x2)?;
    let ss = crate::matrix::squared_distance(x1, x2);
    Ok(libm::sqrt(ss.max(SQRT_FLOOR)))
}

pub fn contrastive_loss(x1: &[f64], x2: &[f64], y_different: bool, cfg: &LossConfig) -> Result<f64> {
    let d = euclidean_distance(x1, x2)?;
    Ok(if y_different {
        0.5 * (cfg.margin_alpha - d).max(0.0)
    } else {
        0.5 * d
    })
}

pub fn triplet_loss(xa: &[f64], xp: &[f64], xn: &[f64], cfg: &LossConfig) -> Result<f64> {
    let dap = euclidean_distance(xa, xp)?;
    let dan = euclidean_distance(xa, xn)?;
    Ok((dap - dan + cfg.margin_alpha).max(0.0))
}

pub fn reciprocal_triplet_loss(xa: &[f64], xp: &[f64], xn: &[f64], cfg: &LossConfig) -> Result<f64> {
    let dap = euclidean_distance(xa, xp)?;
    let dan = euclidean_distance(xa, xn)?;
    Ok(dap + 1.0 / (dan + cfg.rtl_epsilon))
}

pub fn softmax_cross_entropy(logits: &[f64], true_class: usize) -> Result<f64> {
    if true_class >= logits.len() {
        return Err(Error::IndexOutOfRange {
            index: true_class,
            len: logits.len(),
        });
    }
    Ok(crate::autodiff::logsumexp(logits) - logits[true_class])
}

pub fn hybrid_loss(
    logits: &[f64],
    true_class: usize,
    xa: &[f64],
    xp: &[f64],
    xn: &[f64],
    cfg: &LossConfig,
) -> Result<f64> {
    let ce = softmax_cross_entropy(logits, true_class)?;
    let rtl = reciprocal_triplet_loss(xa, xp, xn, cfg)?;
    Ok(ce + cfg.lambda_mix * rtl)
}

/// Row-wise guarded distances between two `T×D` nodes.
pub fn distance_rows(g: &mut Graph, a: NodeId, b: NodeId) -> NodeId {
    let diff = g.sub(a, b);
    let sq = g.square(diff);
    let ss = g.sum_rows(sq);
    g.sqrt(ss)
}

fn triplet_distances(g: &mut Graph, embeddings: NodeId, triplets: &[Triplet]) -> (NodeId, NodeId) {
    let anchors = g.gather_rows(embeddings, triplets.iter().map(|t| t.anchor).collect());
    let positives = g.gather_rows(embeddings, triplets.iter().map(|t| t.positive).collect());
    let negatives = g.gather_rows(embeddings, triplets.iter().map(|t| t.negative).collect());
    let dap = distance_rows(g, anchors, positives);
    let dan = distance_rows(g, anchors, negatives);
    (dap, dan)
}

/// Mean contrastive loss over `(i, j, y_different)` pairs of embedding rows.
pub fn contrastive_node(
    g: &mut Graph,
    embeddings: NodeId,
    pairs: &[(usize, usize, bool)],
    cfg: &LossConfig,
) -> NodeId {
    let first = g.gather_rows(embeddings, pairs.iter().map(|p| p.0).collect());
    let second = g.gather_rows(embeddings, pairs.iter().map(|p| p.1).collect());
    let d = distance_rows(g, first, second);
    let same_w = g.constant(Tensor::vector(pairs.iter().map(|p| if p.2 { 0.0 } else { 0.5 }).collect()));
    let diff_w = g.constant(Tensor::vector(pairs.iter().map(|p| if p.2 { 0.5 } else { 0.0 }).collect()));
    let neg_d = g.scale(d, -1.0);
    let gap = g.add_scalar(neg_d, cfg.margin_alpha);
    let hinge = g.relu(gap);
    let pull = g.mul(same_w, d);
    let push = g.mul(diff_w, hinge);
    let per_pair = g.add(pull, push);
    g.mean(per_pair)
}

/// Mean margin triplet loss.
pub fn triplet_node(g: &mut Graph, embeddings: NodeId, triplets: &[Triplet], cfg: &LossConfig) -> NodeId {
    let (dap, dan) = triplet_distances(g, embeddings, triplets);
    let gap = g.sub(dap, dan);
    let shifted = g.add_scalar(gap, cfg.margin_alpha);
    let hinge = g.relu(shifted);
    g.mean(hinge)
}

/// Mean reciprocal triplet loss.
pub fn rtl_node(g: &mut Graph, embeddings: NodeId, triplets: &[Triplet], cfg: &LossConfig) -> NodeId {
    let (dap, dan) = triplet_distances(g, embeddings, triplets);
    let guarded = g.add_scalar(dan, cfg.rtl_epsilon);
    let inv = g.reciprocal(guarded);
    let per = g.add(dap, inv);
    g.mean(per)
}

/// Mean softmax cross-entropy of `B×K` logits against `labels`.
pub fn softmax_ce_node(g: &mut Graph, logits: NodeId, labels: &[usize]) -> NodeId {
    let lse = g.logsumexp_rows(logits);
    let picked = g.pick_columns(logits, labels.to_vec());
    let per = g.sub(lse, picked);
    g.mean(per)
}

/// Nodes of one batch objective.
#[derive(Debug, Clone, Copy)]
pub struct LossNodes {
    /// What gets differentiated.
    pub total: NodeId,
    /// Softmax cross-entropy of the classification head (always computed).
    pub softmax: NodeId,
    /// Reciprocal triplet loss over the mined triplets, when any exist.
    pub rtl: Option<NodeId>,
}

/// Appends the batch objective for `kind`. Returns `None` when the loss
/// has nothing to optimize (a metric-only loss on a batch without
/// triplets).
pub fn batch_loss(
    g: &mut Graph,
    kind: LossKind,
    embeddings: NodeId,
    logits: NodeId,
    labels: &[usize],
    triplets: &[Triplet],
    cfg: &LossConfig,
) -> Option<LossNodes> {
    let softmax = softmax_ce_node(g, logits, labels);
    let rtl = (!triplets.is_empty()).then(|| rtl_node(g, embeddings, triplets, cfg));
    let mix = |g: &mut Graph, metric: NodeId| {
        // λ = 0 keeps the objective identical to plain softmax.
        if cfg.lambda_mix == 0.0 {
            softmax
        } else {
            let weighted = g.scale(metric, cfg.lambda_mix);
            g.add(softmax, weighted)
        }
    };
    let total = match kind {
        LossKind::Softmax => softmax,
        LossKind::Hybrid => match rtl {
            Some(r) => mix(g, r),
            None => softmax,
        },
        LossKind::SoftmaxTriplet => {
            if triplets.is_empty() {
                softmax
            } else {
                let t = triplet_node(g, embeddings, triplets, cfg);
                mix(g, t)
            }
        }
        LossKind::Rtl => rtl?,
        LossKind::Triplet => {
            if triplets.is_empty() {
                return None;
            }
            triplet_node(g, embeddings, triplets, cfg)
        }
        LossKind::Contrastive => {
            if triplets.is_empty() {
                return None;
            }
            let pairs: Vec<(usize, usize, bool)> = triplets
                .iter()
                .flat_map(|t| [(t.anchor, t.positive, false), (t.anchor, t.negative, true)])
                .collect();
            contrastive_node(g, embeddings, &pairs, cfg)
        }
    };
    Some(LossNodes { total, softmax, rtl })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    const CFG: LossConfig = LossConfig {
        margin_alpha: 0.5,
        lambda_mix: 0.01,
        rtl_epsilon: 1e-8,
    };

    /// Point at distance `d` from the origin along the first axis.
    fn at(d: f64) -> [f64; 2] {
        [d, 0.0]
    }

    #[test]
    fn distance_three_four_five() {
        assert_eq!(euclidean_distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert!(euclidean_distance(&[1.5, -2.0], &[1.5, -2.0]).unwrap() <= 1e-6);
        assert!(euclidean_distance(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn contrastive_hand_values() {
        let o = [0.0, 0.0];
        assert_eq!(contrastive_loss(&o, &at(2.0), false, &CFG).unwrap(), 1.0);
        let cfg = LossConfig { margin_alpha: 1.0, ..CFG };
        assert_eq!(contrastive_loss(&o, &at(1.0), true, &cfg).unwrap(), 0.0);
        assert_eq!(contrastive_loss(&o, &at(3.0), true, &cfg).unwrap(), 0.0);
        assert!((contrastive_loss(&o, &at(0.4), true, &cfg).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn triplet_hand_values() {
        let x = [0.3, -0.7];
        assert_eq!(triplet_loss(&x, &x, &x, &CFG).unwrap(), CFG.margin_alpha);
        let o = [0.0, 0.0];
        // zero distance is floored at 1e-6 by the guarded sqrt
        assert!(triplet_loss(&o, &o, &at(0.5), &CFG).unwrap() <= 1e-6 + 1e-15);
        assert!((triplet_loss(&o, &at(1.2), &at(0.7), &CFG).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rtl_hand_values() {
        let o = [0.0, 0.0];
        assert!((reciprocal_triplet_loss(&o, &at(0.5), &at(2.0), &CFG).unwrap() - 1.0).abs() < 1e-7);
        let far = reciprocal_triplet_loss(&o, &o, &at(1e6), &CFG).unwrap();
        assert!(far.abs() < 1e-5);
        let collapsed = reciprocal_triplet_loss(&o, &at(0.25), &o, &CFG).unwrap();
        assert!(collapsed.is_finite());
        assert!((collapsed - (0.25 + 1.0 / (1e-6 + 1e-8))).abs() < 1e-3);
    }

    #[test]
    fn softmax_hand_values() {
        let u = softmax_cross_entropy(&[0.7, 0.7, 0.7], 1).unwrap();
        assert!((u - libm::log(3.0)).abs() < 1e-12);
        assert!(softmax_cross_entropy(&[100.0, 0.0, 0.0], 0).unwrap() < 1e-40);
        // 3 − log(e + e² + e³) evaluated independently.
        let expected = 0.407_605_964_444_380_3;
        assert!((softmax_cross_entropy(&[1.0, 2.0, 3.0], 2).unwrap() - expected).abs() < 1e-12);
        assert!(softmax_cross_entropy(&[1.0], 1).is_err());
    }

    #[test]
    fn hybrid_composition() {
        let o = [0.0, 0.0];
        let logits = [0.2, -1.0, 0.5];
        let cfg0 = LossConfig { lambda_mix: 0.0, ..CFG };
        let ce = softmax_cross_entropy(&logits, 2).unwrap();
        let h0 = hybrid_loss(&logits, 2, &o, &at(0.5), &at(2.0), &cfg0).unwrap();
        assert_eq!(h0.to_bits(), ce.to_bits());
        let cfg1 = LossConfig { lambda_mix: 1.0, ..CFG };
        // CE of [0,0] over two classes is ln 2; use RTL = 1.0 from the hand case.
        let h1 = hybrid_loss(&[0.0, 0.0], 0, &o, &at(0.5), &at(2.0), &cfg1).unwrap();
        assert!((h1 - (core::f64::consts::LN_2 + 1.0)).abs() < 1e-7);
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in LossKind::ALL {
            assert_eq!(LossKind::parse(kind.name()), Some(kind));
        }
        assert!(!LossKind::Softmax.uses_triplets());
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig::default().validate().is_ok());
        assert!(LossConfig { lambda_mix: -1.0, ..CFG }.validate().is_err());
        assert!(LossConfig { rtl_epsilon: 0.0, ..CFG }.validate().is_err());
        assert!(LossConfig { margin_alpha: f64::NAN, ..CFG }.validate().is_err());
    }

    #[test]
    fn metric_only_loss_without_triplets_is_none() {
        let mut g = Graph::new();
        let e = g.input("e");
        let l = g.input("l");
        assert!(batch_loss(&mut g, LossKind::Triplet, e, l, &[0], &[], &CFG).is_none());
        assert!(batch_loss(&mut g, LossKind::Hybrid, e, l, &[0], &[], &CFG).is_some());
        let _ = vec![0];
    }
}
