use super::knn::by_distance_then_index;
use super::{euclidean, knn_graph, DimredError, EmbeddingMatrix, Metric};

/// Trustworthiness of a low-dimensional layout with respect to the original space.
///
/// For each point, every low-space neighbour that is not among its `k`
/// high-space neighbours is penalised by how far down the high-space ranking
/// it sits. 1.0 means every low-space neighbourhood is faithful.
pub fn trustworthiness(
    high: &EmbeddingMatrix,
    low: &EmbeddingMatrix,
    k: usize,
) -> Result<f64, DimredError> {
    let n = high.n();
    if low.n() != n {
        return Err(DimredError::Shape(format!(
            "row counts differ: {n} vs {}",
            low.n()
        )));
    }
    if k == 0 || 2 * k >= n {
        return Err(DimredError::InvalidParam(format!(
            "trustworthiness needs 1 <= k < n/2, got k = {k}, n = {n}"
        )));
    }
    let low_nn = knn_graph(low, k, Metric::Euclidean)?;

    let mut penalty = 0.0f64;
    let mut rank = vec![0usize; n];
    let mut order: Vec<(usize, f64)> = Vec::with_capacity(n);
    for i in 0..n {
        order.clear();
        order.extend(
            (0..n)
                .filter(|&j| j != i)
                .map(|j| (j, euclidean(high.row(i), high.row(j)))),
        );
        order.sort_by(by_distance_then_index);
        for (r, &(j, _)) in order.iter().enumerate() {
            rank[j] = r + 1;
        }
        for &(j, _) in &low_nn[i] {
            if rank[j] > k {
                penalty += (rank[j] - k) as f64;
            }
        }
    }
    let (nf, kf) = (n as f64, k as f64);
    Ok(1.0 - 2.0 / (nf * kf * (2.0 * nf - 3.0 * kf - 1.0)) * penalty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dimred::{pca, Stage};
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};

    fn random(n: usize, d: usize, seed: u64) -> EmbeddingMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let v = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        EmbeddingMatrix::new(n, d, v, Stage::Original).unwrap()
    }

    #[test]
    fn identity_is_one() {
        let x = random(40, 5, 1);
        assert_eq!(trustworthiness(&x, &x, 5).unwrap(), 1.0);
    }

    #[test]
    fn shuffled_rows_are_untrustworthy() {
        let x = random(60, 5, 2);
        let mut order: Vec<usize> = (0..60).collect();
        order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(7));
        let t = trustworthiness(&x, &x.select_rows(&order), 5).unwrap();
        assert!(t < 0.75, "shuffled trustworthiness {t}");
    }

    #[test]
    fn rank_one_pca_is_one() {
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| {
                let t = (i as f64 * 0.37).sin() * 5.0;
                vec![t, 2.0 * t, -t]
            })
            .collect();
        let x = EmbeddingMatrix::from_rows(&rows, Stage::Original).unwrap();
        let y = pca(&x, 1).unwrap();
        assert!((trustworthiness(&x, &y, 5).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn k_bound() {
        let x = random(10, 2, 3);
        assert!(trustworthiness(&x, &x, 5).is_err());
        assert!(trustworthiness(&x, &x, 4).is_ok());
    }
}
