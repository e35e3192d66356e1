//! Synthetic inputs shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use clustop_core::{EmbeddingMatrix, Stage};

/// `n` points in `d` dimensions drawn around `k` random centres, with labels.
pub fn blobs(n: usize, d: usize, k: usize, seed: u64) -> (EmbeddingMatrix, Vec<i64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spread = Normal::new(0.0, 4.0).unwrap();
    let unit = Normal::new(0.0, 1.0).unwrap();
    let centres: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| spread.sample(&mut rng)).collect()).collect();
    let mut values = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        values.extend(centres[c].iter().map(|m| m + unit.sample(&mut rng)));
        labels.push(c as i64);
    }
    (EmbeddingMatrix::new(n, d, values, Stage::Original).unwrap(), labels)
}

/// Uniform random labels in `0..k`.
pub fn random_labels(n: usize, k: i64, seed: u64) -> Vec<i64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(0..k)).collect()
}
