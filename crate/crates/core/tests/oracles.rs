//! Library results against independent reference computations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use clustop_core::cluster::{core_distances, hdbscan, kmeans, mutual_reachability, CondensedTree, HdbscanParams};
use clustop_core::corpus::{Corpus, Document};
use clustop_core::dimred::{knn_graph, pca, umap, EmbeddingMatrix, Metric, Stage, UmapParams};
use clustop_core::metrics::ari;
use clustop_core::topics::ctfidf_topics;
use clustop_core::{ClusterAssignment, ClusterParams};

fn matrix(rows: &[Vec<f64>]) -> EmbeddingMatrix {
    EmbeddingMatrix::from_rows(rows, Stage::Original).unwrap()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn blobs(rng: &mut ChaCha8Rng, centers: &[Vec<f64>], per: usize, sigma: f64) -> (Vec<Vec<f64>>, Vec<i64>) {
    let normal = Normal::new(0.0, sigma).unwrap();
    let mut rows = Vec::new();
    let mut truth = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..per {
            rows.push(center.iter().map(|m| m + normal.sample(rng)).collect());
            truth.push(c as i64);
        }
    }
    (rows, truth)
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix; columns of the
/// second result are the eigenvectors.
fn jacobi(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| (i == j) as u8 as f64).collect()).collect();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

#[test]
fn pca_matches_covariance_eigenvectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for trial in 0..10 {
        let (n, d) = (rng.gen_range(20..60), rng.gen_range(3..8));
        let scales: Vec<f64> = (0..d).map(|j| 1.0 + j as f64).collect();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| scales.iter().map(|s| s * rng.gen_range(-1.0..1.0) + 0.3 * rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
        let centred: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect()).collect();
        let cov: Vec<Vec<f64>> = (0..d)
            .map(|i| (0..d).map(|j| centred.iter().map(|r| r[i] * r[j]).sum::<f64>() / (n - 1) as f64).collect())
            .collect();
        let (values, vectors) = jacobi(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));

        let k = rng.gen_range(1..=d);
        let got = pca(&matrix(&rows), k).unwrap();
        for (c, &e) in order.iter().take(k).enumerate() {
            let mut axis: Vec<f64> = (0..d).map(|i| vectors[i][e]).collect();
            let pivot = axis.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if pivot < 0.0 {
                axis.iter_mut().for_each(|x| *x = -*x);
            }
            for (i, r) in centred.iter().enumerate() {
                let want: f64 = r.iter().zip(&axis).map(|(x, a)| x * a).sum();
                let g = got.row(i)[c];
                assert!((g - want).abs() <= 1e-8, "trial {trial} component {c} row {i}: {g} vs {want}");
            }
        }
        // Components are uncorrelated.
        for a in 0..k {
            for b in a + 1..k {
                let cov: f64 = (0..n).map(|i| got.row(i)[a] * got.row(i)[b]).sum::<f64>() / (n - 1) as f64;
                assert!(cov.abs() <= 1e-8);
            }
        }
    }
}

#[test]
fn knn_matches_sorted_distances() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let rows: Vec<Vec<f64>> = (0..40).map(|_| (0..3).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
    let g = knn_graph(&matrix(&rows), 6, Metric::Euclidean).unwrap();
    for (i, nbrs) in g.iter().enumerate() {
        let mut all: Vec<(usize, f64)> = (0..rows.len()).filter(|&j| j != i).map(|j| (j, dist(&rows[i], &rows[j]))).collect();
        all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        assert_eq!(nbrs.len(), 6);
        for (got, want) in nbrs.iter().zip(&all) {
            assert_eq!(got.0, want.0);
            assert!((got.1 - want.1).abs() < 1e-12);
        }
    }
}

#[test]
fn mutual_reachability_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rows: Vec<Vec<f64>> = (0..20).map(|_| (0..2).map(|_| rng.gen_range(0.0..10.0)).collect()).collect();
    let y = matrix(&rows);
    let ms = 4;
    let core: Vec<f64> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut d: Vec<f64> = rows.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, s)| dist(r, s)).collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            d[ms - 1]
        })
        .collect();
    let lib_core = core_distances(&y, ms).unwrap();
    for i in 0..20 {
        assert!((core[i] - lib_core[i]).abs() < 1e-12);
        for j in 0..20 {
            let want = if i == j { 0.0 } else { core[i].max(core[j]).max(dist(&rows[i], &rows[j])) };
            let got = mutual_reachability(&y, i, j, ms).unwrap();
            assert!((got - want).abs() < 1e-12);
            assert_eq!(got, mutual_reachability(&y, j, i, ms).unwrap());
        }
    }
}

fn ancestors(tree: &CondensedTree, mut c: usize) -> Vec<usize> {
    let mut out = Vec::new();
    while let Some(p) = tree.clusters[c].parent {
        out.push(p);
        c = p;
    }
    out
}

/// Best total stability over every set of clusters with no ancestor relation.
fn best_antichain(tree: &CondensedTree) -> f64 {
    let m = tree.clusters.len();
    assert!(m <= 20, "tree too large to enumerate: {m}");
    let anc: Vec<Vec<usize>> = (0..m).map(|c| ancestors(tree, c)).collect();
    let mut best = f64::NEG_INFINITY;
    for mask in 1u32..(1 << m) {
        let set: Vec<usize> = (0..m).filter(|c| mask & (1 << c) != 0).collect();
        if set.iter().any(|&c| anc[c].iter().any(|a| mask & (1 << a) != 0)) {
            continue;
        }
        best = best.max(set.iter().map(|&c| tree.clusters[c].stability).sum());
    }
    best
}

#[test]
fn eom_selection_is_maximal() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut checked = 0;
    for trial in 0..40 {
        let k = rng.gen_range(2..=4);
        let centers: Vec<Vec<f64>> = (0..k).map(|_| vec![rng.gen_range(0.0..30.0), rng.gen_range(0.0..30.0)]).collect();
        let sigma = rng.gen_range(0.5..3.0);
        let (rows, _) = blobs(&mut rng, &centers, 15, sigma);
        let mcs = rng.gen_range(4..=8);
        let (a, tree) = hdbscan(&matrix(&rows), &HdbscanParams::new(mcs)).unwrap();
        for size in a.cluster_sizes() {
            assert!(size >= mcs, "trial {trial}: cluster of {size} < {mcs}");
        }
        if tree.clusters.len() > 20 {
            continue;
        }
        let chosen: f64 = tree.selected().iter().map(|&c| tree.clusters[c].stability).sum();
        let best = best_antichain(&tree);
        assert!((chosen - best).abs() <= 1e-9 * best.abs().max(1.0), "trial {trial}: chose {chosen}, best {best}");
        checked += 1;
    }
    assert!(checked >= 20);
}

#[test]
fn hdbscan_three_blobs_with_far_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let centers = vec![vec![0.0, 0.0], vec![20.0, 0.0], vec![10.0, 17.320508075688775]];
    let (mut rows, mut truth) = blobs(&mut rng, &centers, 50, 1.0);
    while truth.len() < 160 {
        let p = vec![rng.gen_range(-60.0..80.0), rng.gen_range(-60.0..80.0)];
        if centers.iter().all(|c| dist(&p, c) > 25.0) {
            rows.push(p);
            truth.push(-1);
        }
    }
    let (a, _) = hdbscan(&matrix(&rows), &HdbscanParams::new(10)).unwrap();
    assert_eq!(a.k, 3);
    assert!((150..160).filter(|&i| a.labels[i] == -1).count() >= 8);
}

#[test]
fn umap_separates_two_blobs() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let d = 10;
    let centers = vec![vec![0.0; d], {
        let mut c = vec![0.0; d];
        c[0] = 20.0;
        c
    }];
    let (rows, truth) = blobs(&mut rng, &centers, 100, 1.0);
    let y = umap(&matrix(&rows), &UmapParams::default()).unwrap();

    // Linearly separable along the line joining the layout centroids.
    let centroid = |c: i64| -> Vec<f64> {
        let idx: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] == c).collect();
        (0..2).map(|j| idx.iter().map(|&i| y.row(i)[j]).sum::<f64>() / idx.len() as f64).collect()
    };
    let (c0, c1) = (centroid(0), centroid(1));
    let dir: Vec<f64> = c1.iter().zip(&c0).map(|(a, b)| a - b).collect();
    let proj = |i: usize| y.row(i).iter().zip(&dir).map(|(x, d)| x * d).sum::<f64>();
    let max0 = (0..100).map(proj).fold(f64::NEG_INFINITY, f64::max);
    let min1 = (100..200).map(proj).fold(f64::INFINITY, f64::min);
    assert!(max0 < min1);

    let g = knn_graph(&y, 15, Metric::Euclidean).unwrap();
    let total = g.len() * 15;
    let same = g.iter().enumerate().flat_map(|(i, nb)| nb.iter().map(move |(j, _)| (i, *j))).filter(|(i, j)| truth[*i] == truth[*j]).count();
    assert!(same as f64 / total as f64 >= 0.99);
}

#[test]
fn kmeans_recovers_separated_blobs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let centers = vec![vec![0.0, 0.0], vec![10.0, 0.0], vec![0.0, 10.0], vec![10.0, 10.0]];
    let (rows, truth) = blobs(&mut rng, &centers, 25, 0.5);
    let a = kmeans(&matrix(&rows), 4, 3).unwrap();
    assert_eq!(ari(&a.labels, &truth).unwrap(), 1.0);
}

#[test]
fn ctfidf_matches_manual_scores() {
    let texts = [
        "apple apple pear",
        "apple fig",
        "pear plum",
        "fig kiwi",
        "kiwi kiwi lime",
        "lime apple",
    ];
    let docs = texts
        .iter()
        .enumerate()
        .map(|(i, t)| Document::new(format!("d{i}"), t.to_string(), None).unwrap())
        .collect();
    let corpus = Corpus::from_documents(docs, "hand").unwrap();
    let a = ClusterAssignment::new(vec![0, 0, 0, 1, 1, 1], ClusterParams::External).unwrap();
    let report = ctfidf_topics(&corpus, &a, 10).unwrap();
    // Each cluster has 7 words, so A = 7; f = apple 4, pear 2, fig 2, plum 1, kiwi 3, lime 2.
    let s = |count: f64, f: f64| count / 7.0 * (1.0 + 7.0 / f).ln();
    let expected = [
        vec![("apple", s(3.0, 4.0)), ("pear", s(2.0, 2.0)), ("plum", s(1.0, 1.0)), ("fig", s(1.0, 2.0))],
        vec![("kiwi", s(3.0, 3.0)), ("lime", s(2.0, 2.0)), ("fig", s(1.0, 2.0)), ("apple", s(1.0, 4.0))],
    ];
    for (c, want) in report.clusters.iter().zip(&expected) {
        assert_eq!(c.words.len(), want.len());
        for ((w, score), (ew, es)) in c.words.iter().zip(want) {
            assert_eq!(w, ew);
            assert!((score - es).abs() <= 1e-9, "{w}: {score} vs {es}");
        }
    }
}
