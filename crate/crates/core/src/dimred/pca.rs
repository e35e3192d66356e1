use nalgebra::DMatrix;

use super::{DimredError, EmbeddingMatrix};

/// Projects the mean-centred rows of `x` onto its top `k` principal axes.
///
/// Components are ordered by descending variance and oriented so that the
/// largest-magnitude loading of each one is positive. Zero-variance input
/// projects to all zeros.
pub fn pca(x: &EmbeddingMatrix, k: usize) -> Result<EmbeddingMatrix, DimredError> {
    let (n, d) = (x.n(), x.d());
    if k == 0 || k > n.min(d) {
        return Err(DimredError::InvalidParam(format!(
            "pca k = {k} outside 1..={}",
            n.min(d)
        )));
    }
    let mut centred = DMatrix::from_row_slice(n, d, x.values());
    for j in 0..d {
        let mean = centred.column(j).mean();
        centred.column_mut(j).add_scalar_mut(-mean);
    }
    if centred.iter().all(|v| *v == 0.0) {
        return Ok(EmbeddingMatrix::zeros(n, k, x.stage));
    }

    let svd = centred.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });

    let mut components = DMatrix::<f64>::zeros(d, k);
    for (c, &src) in order.iter().take(k).enumerate() {
        let axis = v_t.row(src).transpose();
        let pivot = axis
            .iter()
            .enumerate()
            .fold((0usize, 0.0f64), |best, (i, v)| {
                if v.abs() > best.1.abs() {
                    (i, *v)
                } else {
                    best
                }
            });
        let sign = if axis[pivot.0] < 0.0 { -1.0 } else { 1.0 };
        components.set_column(c, &(axis * sign));
    }

    let projected = centred * components;
    let mut values = Vec::with_capacity(n * k);
    for i in 0..n {
        values.extend(projected.row(i).iter().copied());
    }
    EmbeddingMatrix::new(n, k, values, x.stage)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dimred::{euclidean, Stage};
    use rand::{Rng, SeedableRng};

    fn pairwise(m: &EmbeddingMatrix) -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..m.n() {
            for j in i + 1..m.n() {
                out.push(euclidean(m.row(i), m.row(j)));
            }
        }
        out
    }

    #[test]
    fn rank_one_line_preserves_distances() {
        let rows: Vec<Vec<f64>> = [0.0, 1.5, -2.0, 4.0, 0.25]
            .iter()
            .map(|t| vec![1.0 + 2.0 * t, -t, 3.0 + 0.5 * t])
            .collect();
        let x = EmbeddingMatrix::from_rows(&rows, Stage::Original).unwrap();
        let y = pca(&x, 1).unwrap();
        for (a, b) in pairwise(&x).iter().zip(pairwise(&y)) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn full_rank_is_rotation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let vals: Vec<f64> = (0..30 * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = EmbeddingMatrix::new(30, 4, vals, Stage::Original).unwrap();
        let y = pca(&x, 4).unwrap();
        for (a, b) in pairwise(&x).iter().zip(pairwise(&y)) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn output_columns_uncorrelated_and_error_monotone() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let (n, d) = (40, 6);
        let vals: Vec<f64> = (0..n * d)
            .map(|i| rng.gen_range(-1.0..1.0) * (1.0 + (i % d) as f64))
            .collect();
        let x = EmbeddingMatrix::new(n, d, vals, Stage::Original).unwrap();
        let y = pca(&x, 4).unwrap();
        for a in 0..4 {
            for b in (a + 1)..4 {
                let cov: f64 =
                    (0..n).map(|i| y.row(i)[a] * y.row(i)[b]).sum::<f64>() / (n as f64 - 1.0);
                assert!(cov.abs() <= 1e-8, "cov({a},{b}) = {cov}");
            }
        }
        // Projection retains variance; the residual (total - retained) shrinks with k.
        let mut prev = f64::INFINITY;
        for k in 1..=d {
            let y = pca(&x, k).unwrap();
            let retained: f64 = y.values().iter().map(|v| v * v).sum();
            let total: f64 = {
                let mut t = 0.0;
                for j in 0..d {
                    let mean = (0..n).map(|i| x.row(i)[j]).sum::<f64>() / n as f64;
                    t += (0..n).map(|i| (x.row(i)[j] - mean).powi(2)).sum::<f64>();
                }
                t
            };
            let residual = total - retained;
            assert!(residual <= prev + 1e-9);
            prev = residual;
        }
        assert!(prev.abs() < 1e-8);
    }

    #[test]
    fn zero_variance_gives_zeros() {
        let x = EmbeddingMatrix::new(3, 2, vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0], Stage::Original)
            .unwrap();
        assert!(pca(&x, 1).unwrap().values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn k_out_of_range() {
        let x = EmbeddingMatrix::new(3, 2, vec![0.0; 6], Stage::Original).unwrap();
        assert!(pca(&x, 0).is_err());
        assert!(pca(&x, 3).is_err());
    }
}
