use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ClusterAssignment, ClusterError, ClusterParams};
use crate::dimred::{sq_euclidean, EmbeddingMatrix};

const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub assignment: ClusterAssignment,
    /// `k × d`, indexed by the raw (pre-renumbering) cluster index.
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub iterations: usize,
}

pub fn kmeans(y: &EmbeddingMatrix, k: usize, seed: u64) -> Result<ClusterAssignment, ClusterError> {
    kmeans_fit(y, k, seed).map(|f| f.assignment)
}

/// Lloyd iterations from k-means++ seeding.
pub fn kmeans_fit(y: &EmbeddingMatrix, k: usize, seed: u64) -> Result<KMeansFit, ClusterError> {
    let n = y.n();
    if k == 0 || k > n {
        return Err(ClusterError::InvalidParam(format!(
            "kmeans k = {k} outside 1..={n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(y, k, &mut rng);
    let mut labels = vec![usize::MAX; n];
    let mut iterations = 0;

    for it in 0..MAX_ITERATIONS {
        iterations = it + 1;
        let mut changed = false;
        for i in 0..n {
            let best = nearest(&centroids, y.row(i)).0;
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        update_centroids(y, &labels, &mut centroids);
        reseed_empty(y, &mut labels, &mut centroids);
    }

    let inertia = (0..n)
        .map(|i| sq_euclidean(y.row(i), &centroids[labels[i]]))
        .sum();
    let raw: Vec<i64> = labels.iter().map(|&l| l as i64).collect();
    Ok(KMeansFit {
        assignment: ClusterAssignment::canonical(&raw, ClusterParams::Kmeans { k, seed }),
        centroids,
        inertia,
        iterations,
    })
}

fn nearest(centroids: &[Vec<f64>], p: &[f64]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(c, m)| (c, sq_euclidean(p, m)))
        .fold((0, f64::INFINITY), |best, cur| {
            if cur.1 < best.1 {
                cur
            } else {
                best
            }
        })
}

fn plus_plus_init(y: &EmbeddingMatrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = y.n();
    let mut chosen = vec![false; n];
    let first = rng.gen_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![y.row(first).to_vec()];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_euclidean(y.row(i), y.row(first))).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                if target < w {
                    pick = Some(i);
                    break;
                }
                target -= w;
            }
            // Rounding can leave `target` just past the last positive weight.
            pick.unwrap_or_else(|| d2.iter().rposition(|w| *w > 0.0).unwrap())
        } else {
            chosen.iter().position(|c| !c).unwrap_or(0)
        };
        chosen[pick] = true;
        let c = y.row(pick).to_vec();
        for (i, slot) in d2.iter_mut().enumerate() {
            *slot = slot.min(sq_euclidean(y.row(i), &c));
        }
        centroids.push(c);
    }
    centroids
}

fn update_centroids(y: &EmbeddingMatrix, labels: &[usize], centroids: &mut [Vec<f64>]) {
    let d = y.d();
    let mut sums = vec![vec![0.0; d]; centroids.len()];
    let mut counts = vec![0usize; centroids.len()];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(y.row(i)) {
            *s += v;
        }
    }
    for (c, (sum, count)) in sums.into_iter().zip(counts).enumerate() {
        if count > 0 {
            centroids[c] = sum.into_iter().map(|s| s / count as f64).collect();
        }
    }
}

/// Moves each empty centroid onto the point farthest from its current centroid.
fn reseed_empty(y: &EmbeddingMatrix, labels: &mut [usize], centroids: &mut [Vec<f64>]) {
    let k = centroids.len();
    let mut counts = vec![0usize; k];
    for &l in labels.iter() {
        counts[l] += 1;
    }
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let far = (0..labels.len())
            .filter(|&i| counts[labels[i]] > 1)
            .map(|i| (i, sq_euclidean(y.row(i), &centroids[labels[i]])))
            .fold(None::<(usize, f64)>, |best, cur| match best {
                Some(b) if b.1 >= cur.1 => Some(b),
                _ => Some(cur),
            });
        if let Some((i, _)) = far {
            counts[labels[i]] -= 1;
            labels[i] = c;
            counts[c] = 1;
            centroids[c] = y.row(i).to_vec();
        }
    }
}
