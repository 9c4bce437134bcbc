//! Batch-hard triplet mining and the stratified P×K batch sampler.
//!
//! For every anchor the hardest positive (farthest same-class sample) and the
//! hardest negative (nearest different-class sample) are taken from within
//! the mini-batch. Ties go to the lowest batch index.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::losses::euclidean_distance;
use crate::rng::{self, Rng};
use crate::{Error, Matrix, Result};

/// Anchor, positive and negative indices into a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub embeddings: Matrix,
    pub labels: Vec<usize>,
    pub sample_ids: Vec<usize>,
}

impl Batch {
    pub fn new(embeddings: Matrix, labels: Vec<usize>, sample_ids: Vec<usize>) -> Result<Self> {
        if embeddings.rows() != labels.len() || labels.len() != sample_ids.len() {
            return Err(Error::DimensionMismatch {
                left: embeddings.rows(),
                right: labels.len(),
            });
        }
        Ok(Self {
            embeddings,
            labels,
            sample_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Symmetric `B×B` Euclidean distance matrix with an exact zero diagonal.
pub fn pairwise_distances(batch: &Batch) -> Matrix {
    let n = batch.len();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let d = euclidean_distance(batch.embeddings.row(i), batch.embeddings.row(j))
                .expect("rows share the matrix width");
            out.set(i, j, d);
            out.set(j, i, d);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MiningOutcome {
    pub triplets: Vec<Triplet>,
    /// Anchors without a same-class partner (or without any negative).
    pub skipped_anchors: usize,
    /// The batch held fewer than two classes, so nothing could be mined.
    pub single_class: bool,
}

pub fn batch_hard_mine(batch: &Batch) -> MiningOutcome {
    let labels = &batch.labels;
    let single_class = labels.windows(2).all(|w| w[0] == w[1]);
    if single_class {
        return MiningOutcome {
            triplets: Vec::new(),
            skipped_anchors: labels.len(),
            single_class: true,
        };
    }
    let dist = pairwise_distances(batch);
    let mut triplets = Vec::new();
    let mut skipped = 0;
    for a in 0..labels.len() {
        let mut positive: Option<(usize, f64)> = None;
        let mut negative: Option<(usize, f64)> = None;
        for j in 0..labels.len() {
            let d = dist.get(a, j);
            if labels[j] == labels[a] {
                if j != a && positive.is_none_or(|(_, best)| d > best) {
                    positive = Some((j, d));
                }
            } else if negative.is_none_or(|(_, best)| d < best) {
                negative = Some((j, d));
            }
        }
        match (positive, negative) {
            (Some((p, _)), Some((n, _))) => triplets.push(Triplet {
                anchor: a,
                positive: p,
                negative: n,
            }),
            _ => skipped += 1,
        }
    }
    MiningOutcome {
        triplets,
        skipped_anchors: skipped,
        single_class: false,
    }
}

/// Every valid `(anchor, positive, negative)` in lexicographic order.
pub fn all_valid_triplets(batch: &Batch) -> Vec<Triplet> {
    valid_triplets(&batch.labels)
}

pub fn valid_triplets(labels: &[usize]) -> Vec<Triplet> {
    let n = labels.len();
    let mut out = Vec::new();
    for a in 0..n {
        for p in 0..n {
            if p == a || labels[p] != labels[a] {
                continue;
            }
            for (neg, &l) in labels.iter().enumerate() {
                if l != labels[a] {
                    out.push(Triplet {
                        anchor: a,
                        positive: p,
                        negative: neg,
                    });
                }
            }
        }
    }
    out
}

/// Splits `indices` into mini-batches of up to `classes_per_batch` class
/// chunks of `samples_per_class` samples each. Every index appears exactly
/// once; chunks in one batch come from distinct classes while enough
/// classes remain.
pub fn stratified_batches(
    indices: &[usize],
    labels: &[usize],
    classes_per_batch: usize,
    samples_per_class: usize,
    rng: &mut Rng,
) -> Vec<Vec<usize>> {
    let k = samples_per_class.max(2);
    let p = classes_per_batch.max(1);
    let num_classes = indices.iter().map(|&i| labels[i] + 1).max().unwrap_or(0);
    let mut by_class: Vec<Vec<usize>> = alloc::vec![Vec::new(); num_classes];
    for &i in indices {
        by_class[labels[i]].push(i);
    }
    let mut chunks: Vec<(usize, Vec<usize>)> = Vec::new();
    for (class, members) in by_class.iter_mut().enumerate() {
        rng::shuffle(members, rng);
        let mut class_chunks: Vec<Vec<usize>> = members.chunks(k).map(<[usize]>::to_vec).collect();
        // A lone leftover sample has no positive; fold it into its neighbour.
        if class_chunks.len() > 1 && class_chunks.last().is_some_and(|c| c.len() == 1) {
            let last = class_chunks.pop().expect("checked non-empty");
            class_chunks.last_mut().expect("checked len > 1").extend(last);
        }
        chunks.extend(class_chunks.into_iter().map(|c| (class, c)));
    }
    rng::shuffle(&mut chunks, rng);

    let mut queue: VecDeque<(usize, Vec<usize>)> = chunks.into();
    let mut batches = Vec::new();
    while !queue.is_empty() {
        let mut batch = Vec::new();
        let mut classes = Vec::new();
        let mut pos = 0;
        while classes.len() < p && pos < queue.len() {
            if classes.contains(&queue[pos].0) {
                pos += 1;
                continue;
            }
            let (class, members) = queue.remove(pos).expect("pos < len");
            classes.push(class);
            batch.extend(members);
        }
        batches.push(batch);
    }
    // A trailing single-class batch has no negatives; merge it backwards.
    if batches.len() > 1 {
        let last = batches.last().expect("len > 1");
        if last.iter().all(|&i| labels[i] == labels[last[0]]) {
            let last = batches.pop().expect("len > 1");
            batches.last_mut().expect("len > 0").extend(last);
        }
    }
    batches
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn batch(points: &[[f64; 2]], labels: &[usize]) -> Batch {
        let rows: Vec<&[f64]> = points.iter().map(|p| &p[..]).collect();
        Batch::new(
            Matrix::from_rows(2, rows).unwrap(),
            labels.to_vec(),
            (0..labels.len()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn pairwise_small_cases() {
        let d = pairwise_distances(&batch(&[[1.0, 1.0]], &[0]));
        assert_eq!(d.data(), &[0.0]);
        let d = pairwise_distances(&batch(&[[0.0, 0.0], [3.0, 4.0]], &[0, 1]));
        assert_eq!(d.data(), &[0.0, 5.0, 5.0, 0.0]);
    }

    #[test]
    fn hand_placed_batch() {
        // class 0 at x=0 and x=1, class 1 at x=3 and x=10
        let b = batch(&[[0.0, 0.0], [1.0, 0.0], [3.0, 0.0], [10.0, 0.0]], &[0, 0, 1, 1]);
        let out = batch_hard_mine(&b);
        assert_eq!(out.skipped_anchors, 0);
        let t = |a, p, n| Triplet {
            anchor: a,
            positive: p,
            negative: n,
        };
        assert_eq!(out.triplets, vec![t(0, 1, 2), t(1, 0, 2), t(2, 3, 1), t(3, 2, 1)]);
    }

    #[test]
    fn identical_points_break_ties_low() {
        let b = batch(&[[0.5, 0.5]; 4], &[0, 1, 0, 1]);
        let out = batch_hard_mine(&b);
        assert_eq!(out.triplets[0], Triplet { anchor: 0, positive: 2, negative: 1 });
        assert_eq!(out.triplets[1], Triplet { anchor: 1, positive: 3, negative: 0 });
    }

    #[test]
    fn singleton_class_is_skipped() {
        let b = batch(&[[0.0, 0.0], [1.0, 0.0], [5.0, 5.0]], &[0, 0, 1]);
        let out = batch_hard_mine(&b);
        assert_eq!(out.skipped_anchors, 1);
        assert_eq!(out.triplets.len(), 2);
    }

    #[test]
    fn single_class_batch_flags() {
        let out = batch_hard_mine(&batch(&[[0.0, 0.0], [1.0, 0.0]], &[3, 3]));
        assert!(out.single_class);
        assert!(out.triplets.is_empty());
    }

    #[test]
    fn enumeration_cases() {
        let t = |a, p, n| Triplet {
            anchor: a,
            positive: p,
            negative: n,
        };
        assert_eq!(valid_triplets(&[0, 0, 1]), vec![t(0, 1, 2), t(1, 0, 2)]);
        assert!(valid_triplets(&[2, 2, 2]).is_empty());
        assert_eq!(valid_triplets(&[0, 0, 1, 1]).len(), 8);
    }

    #[test]
    fn stratified_batches_cover_every_index_once() {
        let labels: Vec<usize> = (0..53).map(|i| i % 5).collect();
        let indices: Vec<usize> = (0..53).collect();
        let mut rng = crate::rng::seeded(3);
        let batches = stratified_batches(&indices, &labels, 4, 4, &mut rng);
        let mut all: Vec<usize> = batches.concat();
        all.sort_unstable();
        assert_eq!(all, indices);
        for b in &batches {
            let mut classes: Vec<usize> = b.iter().map(|&i| labels[i]).collect();
            classes.dedup();
            assert!(classes.len() >= 2);
        }
        let again = stratified_batches(&indices, &labels, 4, 4, &mut crate::rng::seeded(3));
        assert_eq!(batches, again);
    }
}
