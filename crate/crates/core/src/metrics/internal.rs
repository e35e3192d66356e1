use super::MetricsError;
use crate::dimred::{euclidean, sq_euclidean, EmbeddingMatrix};

/// Non-noise point indices grouped by label, in label order.
fn groups(y: &EmbeddingMatrix, labels: &[i64]) -> Result<Vec<Vec<usize>>, MetricsError> {
    if labels.len() != y.n() {
        return Err(MetricsError::LengthMismatch(labels.len(), y.n()));
    }
    let mut sorted: Vec<i64> = labels.iter().copied().filter(|&l| l >= 0).collect();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() < 2 {
        return Err(MetricsError::TooFewClusters(sorted.len()));
    }
    let mut out = vec![Vec::new(); sorted.len()];
    for (i, l) in labels.iter().enumerate() {
        if let Ok(g) = sorted.binary_search(l) {
            out[g].push(i);
        }
    }
    Ok(out)
}

fn centroid(y: &EmbeddingMatrix, members: &[usize]) -> Vec<f64> {
    let mut c = vec![0.0; y.d()];
    for &i in members {
        for (s, v) in c.iter_mut().zip(y.row(i)) {
            *s += v;
        }
    }
    let m = members.len() as f64;
    c.iter_mut().for_each(|s| *s /= m);
    c
}

/// Mean silhouette over non-noise points; members of singleton clusters score 0.
pub fn silhouette(y: &EmbeddingMatrix, labels: &[i64]) -> Result<f64, MetricsError> {
    let groups = groups(y, labels)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for (g, members) in groups.iter().enumerate() {
        for &i in members {
            count += 1;
            if members.len() == 1 {
                continue;
            }
            let mean_to = |other: &[usize]| -> f64 {
                other.iter().map(|&j| euclidean(y.row(i), y.row(j))).sum::<f64>()
            };
            let a = mean_to(members) / (members.len() - 1) as f64;
            let b = groups
                .iter()
                .enumerate()
                .filter(|(h, _)| *h != g)
                .map(|(_, o)| mean_to(o) / o.len() as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 {
                total += (b - a) / denom;
            }
        }
    }
    Ok(total / count as f64)
}

/// Between- over within-cluster dispersion, each divided by its degrees of freedom.
pub fn calinski_harabasz(y: &EmbeddingMatrix, labels: &[i64]) -> Result<f64, MetricsError> {
    let groups = groups(y, labels)?;
    let all: Vec<usize> = groups.iter().flatten().copied().collect();
    let overall = centroid(y, &all);
    let (mut between, mut within) = (0.0, 0.0);
    for members in &groups {
        let c = centroid(y, members);
        between += members.len() as f64 * sq_euclidean(&c, &overall);
        within += members.iter().map(|&i| sq_euclidean(y.row(i), &c)).sum::<f64>();
    }
    let (n, k) = (all.len() as f64, groups.len() as f64);
    if within == 0.0 {
        return Ok(1.0);
    }
    Ok(between * (n - k) / (within * (k - 1.0)))
}

/// Mean over clusters of the worst `(s_i + s_j) / d(c_i, c_j)` ratio, where
/// `s` is the mean distance to the centroid. Coincident centroids contribute 0.
pub fn davies_bouldin(y: &EmbeddingMatrix, labels: &[i64]) -> Result<f64, MetricsError> {
    let groups = groups(y, labels)?;
    let centroids: Vec<Vec<f64>> = groups.iter().map(|m| centroid(y, m)).collect();
    let scatter: Vec<f64> = groups
        .iter()
        .zip(&centroids)
        .map(|(m, c)| m.iter().map(|&i| euclidean(y.row(i), c)).sum::<f64>() / m.len() as f64)
        .collect();
    let k = groups.len();
    let mut total = 0.0;
    for i in 0..k {
        let worst = (0..k)
            .filter(|&j| j != i)
            .map(|j| {
                let sep = euclidean(&centroids[i], &centroids[j]);
                if sep > 0.0 {
                    (scatter[i] + scatter[j]) / sep
                } else {
                    0.0
                }
            })
            .fold(0.0f64, f64::max);
        total += worst;
    }
    Ok(total / k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dimred::Stage;

    fn pts(rows: &[[f64; 2]]) -> EmbeddingMatrix {
        let v: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        EmbeddingMatrix::from_rows(&v, Stage::Original).unwrap()
    }

    #[test]
    fn silhouette_two_pairs() {
        let y = pts(&[[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]]);
        let s = silhouette(&y, &[0, 0, 1, 1]).unwrap();
        // a = 1; b = (10 + sqrt(101)) / 2 for every point.
        let b = (10.0 + 101f64.sqrt()) / 2.0;
        assert!((s - (b - 1.0) / b).abs() < 1e-12);
        assert!((s - 0.9).abs() < 0.01);
    }

    #[test]
    fn one_cluster_is_error() {
        let y = pts(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]);
        assert_eq!(silhouette(&y, &[0, 0, -1]), Err(MetricsError::TooFewClusters(1)));
        assert!(calinski_harabasz(&y, &[0, 0, 0]).is_err());
        assert!(davies_bouldin(&y, &[0, 0, 0]).is_err());
    }

    #[test]
    fn duplicated_points_db_zero() {
        let y = pts(&[[0.0, 0.0], [0.0, 0.0], [5.0, 5.0], [5.0, 5.0]]);
        assert_eq!(davies_bouldin(&y, &[0, 0, 1, 1]).unwrap(), 0.0);
        assert_eq!(calinski_harabasz(&y, &[0, 0, 1, 1]).unwrap(), 1.0);
    }

    #[test]
    fn separated_blobs_ch_high_db_low() {
        let y = pts(&[
            [0.0, 0.0],
            [0.1, 0.0],
            [0.0, 0.1],
            [20.0, 20.0],
            [20.1, 20.0],
            [20.0, 20.1],
        ]);
        let l = [0, 0, 0, 1, 1, 1];
        assert!(calinski_harabasz(&y, &l).unwrap() > 1e3);
        assert!(davies_bouldin(&y, &l).unwrap() < 0.01);
    }

    #[test]
    fn noise_ignored() {
        let y = pts(&[[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0], [100.0, 100.0]]);
        let with = silhouette(&y, &[0, 0, 1, 1, -1]).unwrap();
        let without = silhouette(&pts(&[[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]]), &[0, 0, 1, 1]).unwrap();
        assert_eq!(with, without);
    }
}
