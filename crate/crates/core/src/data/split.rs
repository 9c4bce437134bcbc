use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::rng;
use crate::{Error, Result};

/// How to split a dataset. Splits are always stratified by class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SplitSpec {
    Holdout { test_fraction: f64, seed: u64 },
    Kfold { folds: usize, seed: u64 },
}

/// Sorted, disjoint train/test index sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// One split for holdout, one per fold for k-fold.
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<Vec<Split>> {
    let seed = match *spec {
        SplitSpec::Holdout { test_fraction, seed } => {
            if !(test_fraction > 0.0 && test_fraction < 1.0) {
                return Err(Error::InvalidConfig("holdout test_fraction must be in (0, 1)".into()));
            }
            seed
        }
        SplitSpec::Kfold { folds, seed } => {
            if folds < 2 {
                return Err(Error::InvalidConfig("k-fold needs at least 2 folds".into()));
            }
            seed
        }
    };
    let counts = dataset.class_counts();
    let mut members: Vec<Vec<usize>> = counts.iter().map(|&c| Vec::with_capacity(c)).collect();
    for (i, &l) in dataset.labels().iter().enumerate() {
        members[l].push(i);
    }
    for (class, list) in members.iter_mut().enumerate() {
        rng::shuffle(list, &mut rng::stream(seed, &[class as u64]));
    }

    match *spec {
        SplitSpec::Holdout { test_fraction, .. } => {
            let mut s = Split {
                train: Vec::new(),
                test: Vec::new(),
            };
            for list in &members {
                let n_test = libm::round(list.len() as f64 * test_fraction) as usize;
                s.test.extend_from_slice(&list[..n_test]);
                s.train.extend_from_slice(&list[n_test..]);
            }
            s.train.sort_unstable();
            s.test.sort_unstable();
            Ok(alloc::vec![s])
        }
        SplitSpec::Kfold { folds, .. } => {
            for (class, list) in members.iter().enumerate() {
                if !list.is_empty() && list.len() < folds {
                    return Err(Error::ClassTooSmall {
                        class: dataset.class_names()[class].clone(),
                        count: list.len(),
                        required: folds,
                    });
                }
            }
            let mut fold_of = alloc::vec![0usize; dataset.len()];
            let mut offset = 0;
            for list in &members {
                for (pos, &i) in list.iter().enumerate() {
                    fold_of[i] = (pos + offset) % folds;
                }
                // Rotating the start keeps total fold sizes balanced too.
                offset += list.len();
            }
            Ok((0..folds)
                .map(|f| {
                    let (test, train): (Vec<usize>, Vec<usize>) =
                        (0..dataset.len()).partition(|&i| fold_of[i] == f);
                    Split { train, test }
                })
                .collect())
        }
    }
}
