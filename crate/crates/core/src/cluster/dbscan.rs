//! DBSCAN with a fixed border rule: a border point joins the cluster of its
//! lowest-index core neighbour.

use super::{ClusterAssignment, ClusterError, ClusterParams};
use crate::dimred::{euclidean, EmbeddingMatrix};
use crate::NOISE;

/// `min_samples` counts the point itself, so `min_samples = 1` makes every point core.
pub fn dbscan(
    y: &EmbeddingMatrix,
    eps: f64,
    min_samples: usize,
) -> Result<ClusterAssignment, ClusterError> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(ClusterError::InvalidParam(format!("eps = {eps} must be > 0")));
    }
    if min_samples == 0 {
        return Err(ClusterError::InvalidParam("min_samples must be >= 1".into()));
    }
    let n = y.n();
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| euclidean(y.row(i), y.row(j)) <= eps)
                .collect()
        })
        .collect();
    let core: Vec<bool> = neighbours.iter().map(|nb| nb.len() >= min_samples).collect();

    // Connected components of the core-point graph, seeded in index order.
    let mut raw = vec![NOISE; n];
    let mut next = 0i64;
    let mut stack = Vec::new();
    for seed in 0..n {
        if !core[seed] || raw[seed] != NOISE {
            continue;
        }
        raw[seed] = next;
        stack.push(seed);
        while let Some(p) = stack.pop() {
            for &q in &neighbours[p] {
                if core[q] && raw[q] == NOISE {
                    raw[q] = next;
                    stack.push(q);
                }
            }
        }
        next += 1;
    }
    for i in 0..n {
        if !core[i] {
            if let Some(&c) = neighbours[i].iter().find(|&&j| core[j]) {
                raw[i] = raw[c];
            }
        }
    }
    Ok(ClusterAssignment::canonical(
        &raw,
        ClusterParams::Dbscan { eps, min_samples },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dimred::Stage;

    fn line(xs: &[f64]) -> EmbeddingMatrix {
        EmbeddingMatrix::new(xs.len(), 1, xs.to_vec(), Stage::Original).unwrap()
    }

    #[test]
    fn tiny_eps_all_noise() {
        let a = dbscan(&line(&[0.0, 1.0, 2.5, 7.0]), 0.5, 2).unwrap();
        assert_eq!(a.labels, vec![-1; 4]);
        assert_eq!(a.k, 0);
    }

    #[test]
    fn identical_points_one_cluster() {
        let a = dbscan(&line(&[3.0; 6]), 0.1, 6).unwrap();
        assert_eq!(a.labels, vec![0; 6]);
    }

    #[test]
    fn border_point_goes_to_lowest_core_neighbour() {
        // 2.0 has three points within eps (1.0, itself, 3.0) so it is a border
        // point of both clusters; its lowest-index core neighbour is 1.0.
        let y = line(&[0.0, 0.3, 0.6, 1.0, 2.0, 3.0, 3.4, 3.7, 4.0]);
        let a = dbscan(&y, 1.0, 4).unwrap();
        assert_eq!(a.labels, vec![0, 0, 0, 0, 0, 1, 1, 1, 1]);
    }

    #[test]
    fn rejects_bad_eps() {
        assert!(dbscan(&line(&[0.0]), 0.0, 1).is_err());
    }
}
