use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{euclidean, DimredError, EmbeddingMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    /// `1 - cos(a, b)`; zero vectors are at distance 1 from everything but themselves.
    Cosine,
}

impl Metric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => euclidean(a, b),
            Metric::Cosine => {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                if na == 0.0 || nb == 0.0 {
                    if a == b {
                        0.0
                    } else {
                        1.0
                    }
                } else {
                    (1.0 - dot / (na * nb)).max(0.0)
                }
            }
        }
    }
}

/// Per row, the `k` nearest other rows as `(index, distance)`, nearest first.
pub type KnnGraph = Vec<Vec<(usize, f64)>>;

pub(crate) fn by_distance_then_index(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    a.1.total_cmp(&b.1).then(a.0.cmp(&b.0))
}

/// Exact brute-force k-NN; self is excluded and ties go to the lower index.
pub fn knn_graph(x: &EmbeddingMatrix, k: usize, metric: Metric) -> Result<KnnGraph, DimredError> {
    let n = x.n();
    if k >= n {
        return Err(DimredError::KTooLarge { k, n });
    }
    let mut graph = Vec::with_capacity(n);
    let mut cand: Vec<(usize, f64)> = Vec::with_capacity(n);
    for i in 0..n {
        cand.clear();
        let ri = x.row(i);
        cand.extend(
            (0..n)
                .filter(|&j| j != i)
                .map(|j| (j, metric.distance(ri, x.row(j)))),
        );
        if k > 0 && k < cand.len() {
            cand.select_nth_unstable_by(k - 1, by_distance_then_index);
        }
        let mut row: Vec<(usize, f64)> = cand[..k].to_vec();
        row.sort_by(by_distance_then_index);
        graph.push(row);
    }
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dimred::Stage;

    fn line(xs: &[f64]) -> EmbeddingMatrix {
        EmbeddingMatrix::new(xs.len(), 1, xs.to_vec(), Stage::Original).unwrap()
    }

    #[test]
    fn collinear_nearest() {
        let g = knn_graph(&line(&[0.0, 1.0, 3.0]), 1, Metric::Euclidean).unwrap();
        let nn: Vec<usize> = g.iter().map(|r| r[0].0).collect();
        assert_eq!(nn, vec![1, 0, 1]);
        assert_eq!(g[2][0].1, 2.0);
    }

    #[test]
    fn duplicates_tie_to_lower_index() {
        let g = knn_graph(&line(&[5.0, 5.0, 5.0, 9.0]), 2, Metric::Euclidean).unwrap();
        assert_eq!(g[2], vec![(0, 0.0), (1, 0.0)]);
        assert_eq!(g[0], vec![(1, 0.0), (2, 0.0)]);
    }

    #[test]
    fn full_neighbourhood() {
        let g = knn_graph(&line(&[0.0, 2.0, 7.0, 1.0]), 3, Metric::Euclidean).unwrap();
        for (i, row) in g.iter().enumerate() {
            let mut idx: Vec<usize> = row.iter().map(|p| p.0).collect();
            idx.sort();
            let expected: Vec<usize> = (0..4).filter(|&j| j != i).collect();
            assert_eq!(idx, expected);
        }
    }

    #[test]
    fn k_too_large() {
        assert!(matches!(
            knn_graph(&line(&[0.0, 1.0]), 2, Metric::Euclidean),
            Err(DimredError::KTooLarge { k: 2, n: 2 })
        ));
    }

    #[test]
    fn cosine_distance() {
        let m = EmbeddingMatrix::new(3, 2, vec![1.0, 0.0, 2.0, 0.0, 0.0, 1.0], Stage::Original)
            .unwrap();
        let g = knn_graph(&m, 1, Metric::Cosine).unwrap();
        assert_eq!(g[0], vec![(1, 0.0)]);
        assert!((g[2][0].1 - 1.0).abs() < 1e-12);
    }
}
