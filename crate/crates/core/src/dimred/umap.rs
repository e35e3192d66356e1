//! UMAP: fuzzy k-NN graph, spectral initialisation and stochastic gradient
//! layout optimisation.
//!
//! Single-threaded and fully determined by [`UmapParams::seed`].

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use log::{debug, warn};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{knn_graph, sq_euclidean, DimredError, EmbeddingMatrix, KnnGraph, Metric};

const SMOOTH_K_TOLERANCE: f64 = 1e-5;
const MIN_K_DIST_SCALE: f64 = 1e-3;
const MAX_K_DIST_SCALE: f64 = 1e3;
const GRAD_CLIP: f64 = 4.0;
const INIT_EXTENT: f64 = 10.0;
const SPECTRAL_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UmapParams {
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub out_dims: usize,
    /// `None` picks 500 epochs for n <= 10 000 and 200 above.
    pub n_epochs: Option<usize>,
    pub seed: u64,
    pub negative_sample_rate: usize,
    pub metric: Metric,
}

impl Default for UmapParams {
    fn default() -> Self {
        UmapParams {
            n_neighbors: 15,
            min_dist: 0.1,
            out_dims: 2,
            n_epochs: None,
            seed: 42,
            negative_sample_rate: 5,
            metric: Metric::Euclidean,
        }
    }
}

impl UmapParams {
    pub fn validate(&self, n: usize, d: usize) -> Result<(), DimredError> {
        let bad = |m: String| Err(DimredError::InvalidParam(m));
        if self.n_neighbors < 2 {
            return bad(format!("n_neighbors = {} must be >= 2", self.n_neighbors));
        }
        if self.n_neighbors >= n {
            return Err(DimredError::KTooLarge {
                k: self.n_neighbors,
                n,
            });
        }
        if !(self.min_dist > 0.0 && self.min_dist <= 1.0) {
            return bad(format!("min_dist = {} must lie in (0, 1]", self.min_dist));
        }
        if self.out_dims == 0 || self.out_dims >= d {
            return bad(format!(
                "out_dims = {} must lie in 1..{d}",
                self.out_dims
            ));
        }
        if self.n_epochs == Some(0) {
            return bad("n_epochs must be positive".into());
        }
        Ok(())
    }

    pub fn epochs_for(&self, n: usize) -> usize {
        self.n_epochs
            .unwrap_or(if n <= 10_000 { 500 } else { 200 })
    }
}

/// Local connectivity `rho` and bandwidth `sigma` for one point's sorted
/// neighbour distances.
///
/// `sigma` solves `sum_i exp(-max(0, d_i - rho) / sigma) = log2(k)` by
/// bisection inside `[1e-3 * mean(d), 1e3 * mean(d)]`; when no root lies in
/// that bracket the nearer bound is returned. All-zero distances give
/// `(0, 1e-3)`.
pub fn smooth_knn(distances: &[f64]) -> Result<(f64, f64), DimredError> {
    let k = distances.len();
    if k < 2 {
        return Err(DimredError::InvalidParam(format!(
            "smooth_knn needs at least 2 distances, got {k}"
        )));
    }
    if distances.iter().any(|d| !(*d >= 0.0) || !d.is_finite())
        || distances.windows(2).any(|w| w[0] > w[1])
    {
        return Err(DimredError::InvalidParam(
            "smooth_knn distances must be finite, non-negative and sorted".into(),
        ));
    }
    let rho = distances.iter().copied().find(|d| *d > 0.0).unwrap_or(0.0);
    let mean = distances.iter().sum::<f64>() / k as f64;
    let (floor, ceil) = if mean > 0.0 {
        (MIN_K_DIST_SCALE * mean, MAX_K_DIST_SCALE * mean)
    } else {
        (MIN_K_DIST_SCALE, MIN_K_DIST_SCALE)
    };
    let target = (k as f64).log2();
    let residual = |sigma: f64| -> f64 {
        distances
            .iter()
            .map(|d| (-(d - rho).max(0.0) / sigma).exp())
            .sum::<f64>()
            - target
    };

    if residual(floor) >= 0.0 {
        return Ok((rho, floor));
    }
    if residual(ceil) <= 0.0 {
        return Ok((rho, ceil));
    }
    let (mut lo, mut hi) = (floor, ceil);
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let r = residual(mid);
        if r.abs() <= SMOOTH_K_TOLERANCE {
            break;
        }
        if r > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((rho, mid))
}

/// Probabilistic t-conorm used to symmetrise directed memberships.
pub fn fuzzy_union(a: f64, b: f64) -> f64 {
    a + b - a * b
}

/// Directed membership strengths `exp(-max(0, d - rho_i) / sigma_i)` per k-NN edge.
pub fn membership_graph(knn: &KnnGraph) -> Result<Vec<Vec<(usize, f64)>>, DimredError> {
    knn.iter()
        .map(|row| {
            let dists: Vec<f64> = row.iter().map(|p| p.1).collect();
            let (rho, sigma) = smooth_knn(&dists)?;
            Ok(row
                .iter()
                .map(|&(j, d)| (j, (-(d - rho).max(0.0) / sigma).exp()))
                .collect())
        })
        .collect()
}

/// Undirected weighted edge list `(i, j, w)` with `i < j`, sorted.
pub fn symmetrize(directed: &[Vec<(usize, f64)>]) -> Vec<(usize, usize, f64)> {
    let mut weights: HashMap<(usize, usize), (f64, f64)> = HashMap::new();
    for (i, row) in directed.iter().enumerate() {
        for &(j, w) in row {
            if i == j {
                continue;
            }
            let (key, forward) = if i < j { ((i, j), true) } else { ((j, i), false) };
            let slot = weights.entry(key).or_insert((0.0, 0.0));
            if forward {
                slot.0 = w;
            } else {
                slot.1 = w;
            }
        }
    }
    let mut edges: Vec<(usize, usize, f64)> = weights
        .into_iter()
        .map(|((i, j), (a, b))| (i, j, fuzzy_union(a, b)))
        .filter(|e| e.2 > 0.0)
        .collect();
    edges.sort_by_key(|e| (e.0, e.1));
    edges
}

/// Fits `1 / (1 + a x^(2b))` to the piecewise target that is 1 below
/// `min_dist` and decays as `exp(-(x - min_dist))` above it (spread 1).
/// Results are cached per `min_dist`.
pub fn fit_ab(min_dist: f64) -> (f64, f64) {
    static CACHE: OnceLock<Mutex<HashMap<u64, (f64, f64)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(ab) = cache.lock().unwrap().get(&min_dist.to_bits()) {
        return *ab;
    }
    let ab = fit_ab_uncached(min_dist, 1.0);
    cache.lock().unwrap().insert(min_dist.to_bits(), ab);
    ab
}

fn fit_ab_uncached(min_dist: f64, spread: f64) -> (f64, f64) {
    const SAMPLES: usize = 300;
    let xs: Vec<f64> = (0..SAMPLES)
        .map(|i| 3.0 * spread * i as f64 / (SAMPLES - 1) as f64)
        .collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| {
            if x < min_dist {
                1.0
            } else {
                (-(x - min_dist) / spread).exp()
            }
        })
        .collect();
    let sse = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| {
                let r = 1.0 / (1.0 + a * x.powf(2.0 * b)) - y;
                r * r
            })
            .sum()
    };

    // Levenberg-Marquardt on two parameters.
    let (mut a, mut b) = (1.0f64, 1.0f64);
    let mut lambda = 1e-3;
    let mut cost = sse(a, b);
    for _ in 0..1000 {
        let (mut jtj, mut jtr) = ([[0.0f64; 2]; 2], [0.0f64; 2]);
        for (&x, &y) in xs.iter().zip(&ys) {
            if x <= 0.0 {
                continue;
            }
            let p = x.powf(2.0 * b);
            let den = 1.0 + a * p;
            let r = 1.0 / den - y;
            let da = -p / (den * den);
            let db = -a * p * 2.0 * x.ln() / (den * den);
            jtj[0][0] += da * da;
            jtj[0][1] += da * db;
            jtj[1][1] += db * db;
            jtr[0] += da * r;
            jtr[1] += db * r;
        }
        jtj[1][0] = jtj[0][1];
        let mut improved = false;
        while lambda < 1e12 {
            let m00 = jtj[0][0] * (1.0 + lambda);
            let m11 = jtj[1][1] * (1.0 + lambda);
            let det = m00 * m11 - jtj[0][1] * jtj[1][0];
            if det.abs() < f64::MIN_POSITIVE {
                lambda *= 10.0;
                continue;
            }
            let step_a = -(m11 * jtr[0] - jtj[0][1] * jtr[1]) / det;
            let step_b = -(m00 * jtr[1] - jtj[1][0] * jtr[0]) / det;
            let (na, nb) = (a + step_a, b + step_b);
            if na > 0.0 && nb > 0.0 {
                let c = sse(na, nb);
                if c < cost {
                    let done = (cost - c) <= 1e-15 * cost.max(1e-300);
                    a = na;
                    b = nb;
                    cost = c;
                    lambda = (lambda / 10.0).max(1e-12);
                    improved = !done;
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (a, b)
}

/// Reduces `x` to `params.out_dims` dimensions.
pub fn umap(x: &EmbeddingMatrix, params: &UmapParams) -> Result<EmbeddingMatrix, DimredError> {
    let n = x.n();
    params.validate(n, x.d())?;
    let knn = knn_graph(x, params.n_neighbors, params.metric)?;
    let directed = membership_graph(&knn)?;
    let edges = symmetrize(&directed);
    if edges.iter().any(|e| !e.2.is_finite()) {
        return Err(DimredError::NonFinite("fuzzy graph weights".into()));
    }

    let mut layout = spectral_init(n, &edges, params.out_dims, params.seed)
        .unwrap_or_else(|| {
            warn!("spectral initialisation failed, using random layout");
            random_init(n, params.out_dims, params.seed)
        });
    let (a, b) = fit_ab(params.min_dist);
    debug!("umap: n={n} edges={} a={a:.4} b={b:.4}", edges.len());
    optimize_layout(&mut layout, &edges, a, b, params)?;
    if layout.values().iter().any(|v| !v.is_finite()) {
        return Err(DimredError::NonFinite("umap layout".into()));
    }
    layout.stage = x.stage;
    Ok(layout)
}

fn random_init(n: usize, dims: usize, seed: u64) -> EmbeddingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let values = (0..n * dims)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * 1e-2
        })
        .collect();
    EmbeddingMatrix::new(n, dims, values, super::Stage::Original)
        .expect("finite random layout")
}

/// Eigenvectors of the normalised graph Laplacian with the smallest nonzero
/// eigenvalues, found by subspace iteration on `(I + D^-1/2 W D^-1/2) / 2`
/// with the trivial vector `D^1/2 1` deflated.
fn spectral_init(
    n: usize,
    edges: &[(usize, usize, f64)],
    dims: usize,
    seed: u64,
) -> Option<EmbeddingMatrix> {
    let block = (dims + 4).min(n.saturating_sub(1));
    if block < dims || dims == 0 {
        return None;
    }
    let mut degree = vec![0.0f64; n];
    for &(i, j, w) in edges {
        degree[i] += w;
        degree[j] += w;
    }
    if degree.iter().any(|d| *d <= 0.0) {
        return None;
    }
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    let trivial = {
        let v: Vec<f64> = degree.iter().map(|d| d.sqrt()).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / norm).collect::<Vec<_>>()
    };

    let apply = |q: &[Vec<f64>]| -> Vec<Vec<f64>> {
        q.iter()
            .map(|v| {
                let mut out: Vec<f64> = v.iter().map(|x| 0.5 * x).collect();
                for &(i, j, w) in edges {
                    let s = 0.5 * w * inv_sqrt[i] * inv_sqrt[j];
                    out[i] += s * v[j];
                    out[j] += s * v[i];
                }
                out
            })
            .collect()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut basis: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    orthonormalize(&mut basis, &trivial)?;
    for _ in 0..SPECTRAL_ITERATIONS {
        basis = apply(&basis);
        orthonormalize(&mut basis, &trivial)?;
    }

    // Rayleigh-Ritz on the converged block.
    let image = apply(&basis);
    let h = DMatrix::from_fn(block, block, |r, c| dot(&basis[r], &image[c]));
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..block).collect();
    order.sort_by(|&p, &q| eig.eigenvalues[q].total_cmp(&eig.eigenvalues[p]).then(p.cmp(&q)));

    let mut coords = vec![0.0f64; n * dims];
    for (c, &src) in order.iter().take(dims).enumerate() {
        for (r, vec) in basis.iter().enumerate() {
            let coef = eig.eigenvectors[(r, src)];
            for i in 0..n {
                coords[i * dims + c] += coef * vec[i];
            }
        }
    }
    let extent = coords.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(extent > 0.0) || !extent.is_finite() {
        return None;
    }
    let mut jitter = ChaCha8Rng::seed_from_u64(seed);
    jitter.set_stream(3);
    for v in coords.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut jitter);
        *v = *v * INIT_EXTENT / extent + 1e-4 * z;
    }
    EmbeddingMatrix::new(n, dims, coords, super::Stage::Original).ok()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Modified Gram-Schmidt against `fixed` and each other. `None` on collapse.
fn orthonormalize(basis: &mut [Vec<f64>], fixed: &[f64]) -> Option<()> {
    for k in 0..basis.len() {
        let (done, rest) = basis.split_at_mut(k);
        let v = &mut rest[0];
        let p = dot(v, fixed);
        v.iter_mut().zip(fixed).for_each(|(x, f)| *x -= p * f);
        for u in done.iter() {
            let p = dot(v, u);
            v.iter_mut().zip(u).for_each(|(x, f)| *x -= p * f);
        }
        let norm = dot(v, v).sqrt();
        if !(norm > 1e-300) || !norm.is_finite() {
            return None;
        }
        v.iter_mut().for_each(|x| *x /= norm);
    }
    Some(())
}

fn clip(v: f64) -> f64 {
    v.clamp(-GRAD_CLIP, GRAD_CLIP)
}

fn optimize_layout(
    layout: &mut EmbeddingMatrix,
    edges: &[(usize, usize, f64)],
    a: f64,
    b: f64,
    params: &UmapParams,
) -> Result<(), DimredError> {
    let n = layout.n();
    let dims = layout.d();
    let n_epochs = params.epochs_for(n);
    let max_w = edges.iter().fold(0.0f64, |m, e| m.max(e.2));
    if max_w <= 0.0 {
        return Ok(());
    }
    let min_w = max_w / n_epochs as f64;

    // Both directions of every retained edge, each moving head and tail.
    let mut heads = Vec::new();
    let mut tails = Vec::new();
    let mut epochs_per_sample = Vec::new();
    for &(i, j, w) in edges.iter().filter(|e| e.2 >= min_w) {
        for (h, t) in [(i, j), (j, i)] {
            heads.push(h);
            tails.push(t);
            epochs_per_sample.push(max_w / w);
        }
    }
    let neg_rate = params.negative_sample_rate as f64;
    let epochs_per_negative: Vec<f64> = epochs_per_sample
        .iter()
        .map(|e| if neg_rate > 0.0 { e / neg_rate } else { f64::INFINITY })
        .collect();
    let mut next_sample = epochs_per_sample.clone();
    let mut next_negative = epochs_per_negative.clone();

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut current = vec![0.0f64; dims];
    let mut other = vec![0.0f64; dims];
    for epoch in 0..n_epochs {
        let alpha = 1.0 - epoch as f64 / n_epochs as f64;
        let ef = epoch as f64;
        for e in 0..heads.len() {
            if next_sample[e] > ef {
                continue;
            }
            let (h, t) = (heads[e], tails[e]);
            current.copy_from_slice(layout.row(h));
            other.copy_from_slice(layout.row(t));
            let dist_sq = sq_euclidean(&current, &other);
            let coeff = if dist_sq > 0.0 {
                -2.0 * a * b * dist_sq.powf(b - 1.0) / (a * dist_sq.powf(b) + 1.0)
            } else {
                0.0
            };
            for k in 0..dims {
                let g = clip(coeff * (current[k] - other[k]));
                current[k] += g * alpha;
                other[k] -= g * alpha;
            }
            layout.row_mut(t).copy_from_slice(&other);
            next_sample[e] += epochs_per_sample[e];

            let n_neg = if epochs_per_negative[e].is_finite() {
                ((ef - next_negative[e]) / epochs_per_negative[e]).max(0.0) as usize
            } else {
                0
            };
            for _ in 0..n_neg {
                let r = rng.gen_range(0..n);
                if r == h {
                    continue;
                }
                let neg = layout.row(r);
                let dist_sq = sq_euclidean(&current, neg);
                let coeff = if dist_sq > 0.0 {
                    2.0 * b / ((1e-3 + dist_sq) * (a * dist_sq.powf(b) + 1.0))
                } else {
                    0.0
                };
                for k in 0..dims {
                    let g = if coeff > 0.0 {
                        clip(coeff * (current[k] - neg[k]))
                    } else {
                        GRAD_CLIP
                    };
                    current[k] += g * alpha;
                }
            }
            layout.row_mut(h).copy_from_slice(&current);
            next_negative[e] += n_neg as f64 * epochs_per_negative[e];
        }
        if current.iter().any(|v| !v.is_finite()) {
            return Err(DimredError::NonFinite(format!("umap epoch {epoch}")));
        }
    }
    Ok(())
}
