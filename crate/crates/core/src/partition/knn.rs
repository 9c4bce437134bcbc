use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{find_tensor, labels_tensor, matrix_tensor, name, scalar_tensor, tensor_labels, tensor_matrix, EmbeddingSpace};
use crate::autodiff::Tensor;
use crate::matrix::squared_distance;
use crate::{Error, Matrix, Result};

/// Majority vote among the `k` nearest training points.
///
/// Neighbours are ordered by (distance, index). A tied vote goes to the
/// class whose voters are closer on average, then to the lowest class id.
pub fn knn_classify(train: &EmbeddingSpace, query: &[f64], k: usize) -> Result<usize> {
    let labels = train.require_labels()?;
    check_k(train.len(), k)?;
    if query.len() != train.dim() {
        return Err(Error::DimensionMismatch { left: query.len(), right: train.dim() });
    }
    Ok(vote(train.points(), labels, train.class_count(), query, k))
}

/// [`knn_classify`] for every row of `queries`.
pub fn knn_predict_all(train: &EmbeddingSpace, queries: &Matrix, k: usize) -> Result<Vec<usize>> {
    let labels = train.require_labels()?;
    check_k(train.len(), k)?;
    if queries.rows() > 0 && queries.cols() != train.dim() {
        return Err(Error::DimensionMismatch { left: queries.cols(), right: train.dim() });
    }
    Ok(queries
        .iter_rows()
        .map(|q| vote(train.points(), labels, train.class_count(), q, k))
        .collect())
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Empty("kNN reference set".into()));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidConfig(alloc::format!("k must be in 1..={n}, got {k}")));
    }
    Ok(())
}

fn vote(points: &Matrix, labels: &[usize], classes: usize, query: &[f64], k: usize) -> usize {
    let mut dist: Vec<(f64, usize)> = points
        .iter_rows()
        .enumerate()
        .map(|(i, p)| (squared_distance(p, query), i))
        .collect();
    let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < dist.len() {
        dist.select_nth_unstable_by(k - 1, order);
        dist.truncate(k);
    }
    let mut votes = vec![0usize; classes];
    let mut spread = vec![0.0f64; classes];
    for &(d2, i) in &dist {
        votes[labels[i]] += 1;
        spread[labels[i]] += libm::sqrt(d2);
    }
    let mut best = usize::MAX;
    for c in 0..classes {
        if votes[c] == 0 {
            continue;
        }
        if best == usize::MAX {
            best = c;
            continue;
        }
        let (vc, vb) = (votes[c], votes[best]);
        // Compare mean distances without dividing: s_c / v_c < s_b / v_b.
        let closer = spread[c] * (vb as f64) < spread[best] * (vc as f64);
        if vc > vb || (vc == vb && closer) {
            best = c;
        }
    }
    best
}

/// Fitted kNN: the labelled reference set plus `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    space: EmbeddingSpace,
    k: usize,
}

impl KnnModel {
    pub fn fit(train: &EmbeddingSpace, k: usize) -> Result<Self> {
        train.require_labels()?;
        train.require_finite()?;
        check_k(train.len(), k)?;
        Ok(Self { space: train.clone(), k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn predict(&self, point: &[f64]) -> usize {
        let labels = self.space.labels().unwrap_or(&[]);
        vote(self.space.points(), labels, self.space.class_count(), point, self.k)
    }

    pub fn to_tensors(&self) -> Vec<(String, Tensor)> {
        vec![
            (name("knn.points"), matrix_tensor(self.space.points())),
            (name("knn.labels"), labels_tensor(self.space.labels().unwrap_or(&[]))),
            (name("knn.k"), scalar_tensor(self.k as f64)),
            (name("knn.classes"), scalar_tensor(self.space.class_count() as f64)),
        ]
    }

    pub fn from_tensors(tensors: &[(String, Tensor)]) -> Result<Self> {
        let points = tensor_matrix(find_tensor(tensors, "knn.points")?)?;
        let labels = tensor_labels(find_tensor(tensors, "knn.labels")?)?;
        let k = tensor_labels(find_tensor(tensors, "knn.k")?)?[0];
        let classes = tensor_labels(find_tensor(tensors, "knn.classes")?)?[0];
        let space = EmbeddingSpace::new(points, Some(labels), classes)?;
        Self::fit(&space, k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(points: &[&[f64]], labels: &[usize], classes: usize) -> EmbeddingSpace {
        let m = Matrix::from_rows(points[0].len(), points.iter().copied()).unwrap();
        EmbeddingSpace::new(m, Some(labels.to_vec()), classes).unwrap()
    }

    #[test]
    fn nearest_neighbour_returns_own_label() {
        let s = space(&[&[0.0], &[1.0], &[5.0]], &[2, 0, 1], 3);
        for (i, &l) in [2, 0, 1].iter().enumerate() {
            assert_eq!(knn_classify(&s, s.points().row(i), 1).unwrap(), l);
        }
    }

    #[test]
    fn tied_vote_prefers_closer_class() {
        // Two votes each; class 1 sits closer on average.
        let s = space(&[&[-3.0], &[-3.0], &[1.0], &[2.0]], &[0, 0, 1, 1], 2);
        assert_eq!(knn_classify(&s, &[0.0], 4).unwrap(), 1);
        // Fully symmetric tie falls back to the lowest class.
        let s = space(&[&[-1.0], &[1.0]], &[1, 0], 2);
        assert_eq!(knn_classify(&s, &[0.0], 2).unwrap(), 0);
    }

    #[test]
    fn bad_k_rejected() {
        let s = space(&[&[0.0], &[1.0]], &[0, 1], 2);
        assert!(knn_classify(&s, &[0.0], 0).is_err());
        assert!(knn_classify(&s, &[0.0], 3).is_err());
        assert!(knn_classify(&s, &[0.0, 1.0], 1).is_err());
    }
}
