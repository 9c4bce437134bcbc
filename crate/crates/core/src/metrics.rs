//! Confusion matrices, weighted accuracy, macro precision/recall/F1 and the
//! (unadjusted) Rand index.
//!
//! Accuracy is the sample-weighted overall accuracy `trace / total`. Macro
//! averages run over the classes that occur in the ground truth; a class
//! whose precision or recall has a zero denominator contributes 0.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// `K×K` counts, rows = true class, columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != classes * classes {
            return Err(Error::DimensionMismatch {
                left: classes * classes,
                right: counts.len(),
            });
        }
        Ok(Self { classes, counts })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.classes..(truth + 1) * self.classes]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    /// Copy keeping only the rows of `truth_classes`.
    pub fn restricted_to(&self, truth_classes: &[usize]) -> Self {
        let mut out = Self {
            classes: self.classes,
            counts: vec![0; self.counts.len()],
        };
        for &c in truth_classes.iter().filter(|&&c| c < self.classes) {
            let k = self.classes;
            out.counts[c * k..(c + 1) * k].copy_from_slice(self.row(c));
        }
        out
    }
}

pub fn confusion_matrix(truth: &[usize], predicted: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::DimensionMismatch {
            left: truth.len(),
            right: predicted.len(),
        });
    }
    let mut counts = vec![0u64; classes * classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= classes || p >= classes {
            return Err(Error::IndexOutOfRange {
                index: t.max(p),
                len: classes,
            });
        }
        counts[t * classes + p] += 1;
    }
    Ok(ConfusionMatrix { classes, counts })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationScores {
    pub accuracy: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
}

pub fn classification_metrics(confusion: &ConfusionMatrix) -> Result<ClassificationScores> {
    let total = confusion.total();
    if total == 0 {
        return Err(Error::Empty("confusion matrix has no samples".into()));
    }
    let k = confusion.classes;
    let mut col_sums = vec![0u64; k];
    for t in 0..k {
        for (p, s) in col_sums.iter_mut().enumerate() {
            *s += confusion.get(t, p);
        }
    }
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let (mut p_sum, mut r_sum, mut f_sum, mut present) = (0.0, 0.0, 0.0, 0usize);
    for (c, &col_sum) in col_sums.iter().enumerate() {
        let row_sum: u64 = confusion.row(c).iter().sum();
        if row_sum == 0 {
            continue;
        }
        present += 1;
        let tp = confusion.get(c, c);
        let precision = ratio(tp, col_sum);
        let recall = ratio(tp, row_sum);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        p_sum += precision;
        r_sum += recall;
        f_sum += f1;
    }
    let n = present as f64;
    Ok(ClassificationScores {
        accuracy: confusion.trace() as f64 / total as f64,
        precision_macro: p_sum / n,
        recall_macro: r_sum / n,
        f1_macro: f_sum / n,
    })
}

fn pairs(n: u64) -> u128 {
    let n = n as u128;
    n * n.saturating_sub(1) / 2
}

/// Fraction of sample pairs on which the two partitions agree.
pub fn rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::Empty("Rand index needs at least two samples".into()));
    }
    let mut joint: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut left: BTreeMap<usize, u64> = BTreeMap::new();
    let mut right: BTreeMap<usize, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *left.entry(x).or_default() += 1;
        *right.entry(y).or_default() += 1;
    }
    let total = pairs(a.len() as u64);
    let both: u128 = joint.values().map(|&n| pairs(n)).sum();
    let in_a: u128 = left.values().map(|&n| pairs(n)).sum();
    let in_b: u128 = right.values().map(|&n| pairs(n)).sum();
    // agreements = together in both + apart in both
    let agree = total + 2 * both - in_a - in_b;
    Ok(agree as f64 / total as f64)
}

/// Accuracy of guessing labels at random with the reference frequencies.
pub fn frequency_chance(truth: &[usize], reference: &[usize]) -> f64 {
    if truth.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let mut ref_counts: BTreeMap<usize, u64> = BTreeMap::new();
    for &r in reference {
        *ref_counts.entry(r).or_default() += 1;
    }
    let n_ref = reference.len() as f64;
    truth
        .iter()
        .map(|t| ref_counts.get(t).copied().unwrap_or(0) as f64 / n_ref)
        .sum::<f64>()
        / truth.len() as f64
}

/// Evaluation summary. Classification fields are absent for clustering-only
/// partitioners, whose output is scored by the Rand index alone.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub samples: usize,
    pub confusion: Option<ConfusionMatrix>,
    pub scores: Option<ClassificationScores>,
    pub rand_index: Option<f64>,
}

impl MetricsReport {
    pub fn from_predictions(truth: &[usize], predicted: &[usize], classes: usize) -> Result<Self> {
        let confusion = confusion_matrix(truth, predicted, classes)?;
        let scores = classification_metrics(&confusion)?;
        let rand_index = if truth.len() >= 2 {
            Some(rand_index(truth, predicted)?)
        } else {
            None
        };
        Ok(Self {
            samples: truth.len(),
            confusion: Some(confusion),
            scores: Some(scores),
            rand_index,
        })
    }

    pub fn from_clustering(truth: &[usize], assignments: &[usize]) -> Result<Self> {
        Ok(Self {
            samples: truth.len(),
            confusion: None,
            scores: None,
            rand_index: Some(rand_index(truth, assignments)?),
        })
    }

    pub fn accuracy(&self) -> Option<f64> {
        self.scores.map(|s| s.accuracy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_rand(a: &[usize], b: &[usize]) -> f64 {
        let mut agree = 0u64;
        let mut total = 0u64;
        for i in 0..a.len() {
            for j in i + 1..a.len() {
                total += 1;
                if (a[i] == a[j]) == (b[i] == b[j]) {
                    agree += 1;
                }
            }
        }
        agree as f64 / total as f64
    }

    #[test]
    fn confusion_shapes() {
        let c = confusion_matrix(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!(c.trace(), 3);
        assert_eq!(c.total(), 3);
        let c = confusion_matrix(&[0, 1, 2, 2], &[0, 0, 0, 0], 3).unwrap();
        assert_eq!((0..3).map(|t| c.get(t, 0)).sum::<u64>(), 4);
        assert!(confusion_matrix(&[0], &[0, 1], 2).is_err());
        assert!(confusion_matrix(&[0], &[3], 2).is_err());
    }

    #[test]
    fn two_class_fixture() {
        let c = ConfusionMatrix::from_counts(2, vec![9, 1, 4, 6]).unwrap();
        let s = classification_metrics(&c).unwrap();
        assert!((s.accuracy - 0.75).abs() < 1e-15);
        assert!((s.precision_macro - (9.0 / 13.0 + 6.0 / 7.0) / 2.0).abs() < 1e-15);
        assert!((s.recall_macro - 0.75).abs() < 1e-15);
    }

    #[test]
    fn perfect_three_class() {
        let c = confusion_matrix(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap();
        let s = classification_metrics(&c).unwrap();
        assert_eq!((s.accuracy, s.precision_macro, s.recall_macro, s.f1_macro), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn never_predicted_class_scores_zero_precision() {
        let c = confusion_matrix(&[0, 0, 1, 1], &[0, 0, 0, 0], 2).unwrap();
        let s = classification_metrics(&c).unwrap();
        assert!((s.precision_macro - 0.25).abs() < 1e-15);
        assert!((s.recall_macro - 0.5).abs() < 1e-15);
    }

    #[test]
    fn absent_truth_class_excluded_from_macro() {
        let c = confusion_matrix(&[0, 0], &[0, 0], 3).unwrap();
        let s = classification_metrics(&c).unwrap();
        assert_eq!(s.recall_macro, 1.0);
        assert!(classification_metrics(&ConfusionMatrix::from_counts(2, vec![0; 4]).unwrap()).is_err());
    }

    #[test]
    fn rand_index_cases() {
        assert_eq!(rand_index(&[0, 0, 1, 2], &[5, 5, 7, 9]).unwrap(), 1.0);
        assert_eq!(rand_index(&[0, 0, 0], &[0, 1, 2]).unwrap(), 0.0);
        assert!(rand_index(&[0], &[0]).is_err());
    }

    #[test]
    fn chance_baseline() {
        assert!((frequency_chance(&[0, 1], &[0, 0, 0, 1]) - (0.75 + 0.25) / 2.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn rand_index_matches_pair_enumeration(
            a in proptest::collection::vec(0usize..5, 2..60),
            seed in any::<u64>(),
        ) {
            let b: Vec<usize> = a.iter().enumerate().map(|(i, _)| (crate::rng::derive(seed, &[i as u64]) % 4) as usize).collect();
            let fast = rand_index(&a, &b).unwrap();
            prop_assert!((fast - brute_rand(&a, &b)).abs() <= 1e-12);
            prop_assert_eq!(fast, rand_index(&b, &a).unwrap());
            let relabeled: Vec<usize> = a.iter().map(|&x| 10 - x).collect();
            prop_assert_eq!(fast, rand_index(&relabeled, &b).unwrap());
        }

        #[test]
        fn metrics_match_brute_force(counts in proptest::collection::vec(0u64..20, 16)) {
            prop_assume!(counts.iter().sum::<u64>() > 0);
            let c = ConfusionMatrix::from_counts(4, counts.clone()).unwrap();
            let s = classification_metrics(&c).unwrap();
            let g = |t: usize, p: usize| counts[t * 4 + p] as f64;
            let (mut ps, mut rs, mut fs, mut n) = (0.0, 0.0, 0.0, 0.0);
            for k in 0..4 {
                let row: f64 = (0..4).map(|p| g(k, p)).sum();
                if row == 0.0 { continue; }
                let col: f64 = (0..4).map(|t| g(t, k)).sum();
                let p = if col > 0.0 { g(k, k) / col } else { 0.0 };
                let r = g(k, k) / row;
                ps += p; rs += r; fs += if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 }; n += 1.0;
            }
            prop_assert!((s.precision_macro - ps / n).abs() < 1e-12);
            prop_assert!((s.recall_macro - rs / n).abs() < 1e-12);
            prop_assert!((s.f1_macro - fs / n).abs() < 1e-12);
            // micro precision = micro recall = accuracy for single-label data
            let total: f64 = counts.iter().sum::<u64>() as f64;
            let micro: f64 = (0..4).map(|k| g(k, k)).sum::<f64>() / total;
            prop_assert!((s.accuracy - micro).abs() < 1e-15);
        }
    }
}
