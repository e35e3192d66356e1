//! HDBSCAN: mutual-reachability MST, single-linkage hierarchy, condensed
//! tree and excess-of-mass cluster selection.
//!
//! The root of the condensed tree takes part in selection like any other
//! cluster, so data without any persistent split comes back as one cluster
//! instead of all noise.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{ClusterAssignment, ClusterError, ClusterParams};
use crate::dimred::{euclidean, EmbeddingMatrix};
use crate::NOISE;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HdbscanParams {
    pub min_cluster_size: usize,
    /// Defaults to `min_cluster_size`.
    pub min_samples: Option<usize>,
}

impl HdbscanParams {
    pub fn new(min_cluster_size: usize) -> Self {
        HdbscanParams {
            min_cluster_size,
            min_samples: None,
        }
    }

    pub fn min_samples(&self) -> usize {
        self.min_samples.unwrap_or(self.min_cluster_size)
    }

    fn validate(&self, n: usize) -> Result<(), ClusterError> {
        if self.min_cluster_size < 2 {
            return Err(ClusterError::InvalidParam(format!(
                "min_cluster_size = {} must be >= 2",
                self.min_cluster_size
            )));
        }
        let ms = self.min_samples();
        if ms == 0 || ms > self.min_cluster_size {
            return Err(ClusterError::InvalidParam(format!(
                "min_samples = {ms} must lie in 1..={}",
                self.min_cluster_size
            )));
        }
        if n <= self.min_cluster_size {
            return Err(ClusterError::TooFewPoints {
                n,
                min_cluster_size: self.min_cluster_size,
            });
        }
        Ok(())
    }
}

/// One row of the condensed tree: `child` left `parent` at `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CondensedEntry {
    pub parent: usize,
    pub child: CondensedChild,
    pub lambda: f64,
    pub size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "lowercase")]
pub enum CondensedChild {
    Point(usize),
    Cluster(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondensedCluster {
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub birth_lambda: f64,
    pub size: usize,
    pub stability: f64,
    pub selected: bool,
}

/// Condensed cluster hierarchy; cluster 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondensedTree {
    pub entries: Vec<CondensedEntry>,
    pub clusters: Vec<CondensedCluster>,
}

impl CondensedTree {
    pub fn selected(&self) -> Vec<usize> {
        (0..self.clusters.len())
            .filter(|&c| self.clusters[c].selected)
            .collect()
    }
}

fn check_min_samples(n: usize, min_samples: usize) -> Result<(), ClusterError> {
    if min_samples == 0 || min_samples >= n {
        return Err(ClusterError::InvalidParam(format!(
            "min_samples = {min_samples} must lie in 1..{n}"
        )));
    }
    Ok(())
}

/// Distance from every point to its `min_samples`-th nearest other point.
pub fn core_distances(y: &EmbeddingMatrix, min_samples: usize) -> Result<Vec<f64>, ClusterError> {
    let n = y.n();
    check_min_samples(n, min_samples)?;
    let mut buf = Vec::with_capacity(n);
    Ok((0..n)
        .map(|i| {
            buf.clear();
            buf.extend(
                (0..n)
                    .filter(|&j| j != i)
                    .map(|j| euclidean(y.row(i), y.row(j))),
            );
            let (_, kth, _) = buf.select_nth_unstable_by(min_samples - 1, f64::total_cmp);
            *kth
        })
        .collect())
}

pub fn core_distance(
    y: &EmbeddingMatrix,
    i: usize,
    min_samples: usize,
) -> Result<f64, ClusterError> {
    let n = y.n();
    check_min_samples(n, min_samples)?;
    if i >= n {
        return Err(ClusterError::InvalidParam(format!("point {i} out of range")));
    }
    let mut d: Vec<f64> = (0..n)
        .filter(|&j| j != i)
        .map(|j| euclidean(y.row(i), y.row(j)))
        .collect();
    d.sort_by(f64::total_cmp);
    Ok(d[min_samples - 1])
}

/// `max(core_i, core_j, d(i, j))`, and 0 for `i == j`.
pub fn mutual_reachability(
    y: &EmbeddingMatrix,
    i: usize,
    j: usize,
    min_samples: usize,
) -> Result<f64, ClusterError> {
    if i == j {
        check_min_samples(y.n(), min_samples)?;
        return Ok(0.0);
    }
    let ci = core_distance(y, i, min_samples)?;
    let cj = core_distance(y, j, min_samples)?;
    Ok(ci.max(cj).max(euclidean(y.row(i), y.row(j))))
}

#[derive(Debug, Clone, Copy)]
struct Edge {
    a: usize,
    b: usize,
    w: f64,
}

impl Edge {
    fn new(u: usize, v: usize, w: f64) -> Self {
        Edge {
            a: u.min(v),
            b: u.max(v),
            w,
        }
    }

    fn order(&self, other: &Edge) -> Ordering {
        self.w
            .total_cmp(&other.w)
            .then(self.a.cmp(&other.a))
            .then(self.b.cmp(&other.b))
    }
}

/// Prim's algorithm over the dense mutual-reachability graph.
fn mst(y: &EmbeddingMatrix, core: &[f64]) -> Vec<Edge> {
    let n = y.n();
    let mut in_tree = vec![false; n];
    let mut best: Vec<Option<Edge>> = vec![None; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            let w = core[current]
                .max(core[v])
                .max(euclidean(y.row(current), y.row(v)));
            let cand = Edge::new(current, v, w);
            if best[v].is_none_or(|b| cand.order(&b) == Ordering::Less) {
                best[v] = Some(cand);
            }
        }
        let next = (0..n)
            .filter(|&v| !in_tree[v])
            .min_by(|&p, &q| best[p].unwrap().order(&best[q].unwrap()))
            .expect("graph has unvisited vertices");
        edges.push(best[next].unwrap());
        in_tree[next] = true;
        current = next;
    }
    edges.sort_by(Edge::order);
    edges
}

/// Single-linkage dendrogram node; leaves are `0..n`, merges `n..2n-1`.
struct Merge {
    left: usize,
    right: usize,
    distance: f64,
    size: usize,
}

fn single_linkage(n: usize, sorted_edges: &[Edge]) -> Vec<Merge> {
    let mut parent: Vec<usize> = (0..2 * n).collect();
    let mut size = vec![1usize; 2 * n];
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for (step, e) in sorted_edges.iter().enumerate() {
        let ra = find(&mut parent, e.a);
        let rb = find(&mut parent, e.b);
        let node = n + step;
        parent[ra] = node;
        parent[rb] = node;
        size[node] = size[ra] + size[rb];
        merges.push(Merge {
            left: ra.min(rb),
            right: ra.max(rb),
            distance: e.w,
            size: size[node],
        });
    }
    merges
}

fn condense(n: usize, merges: &[Merge], min_cluster_size: usize) -> CondensedTree {
    // Zero distances (duplicate points) would give infinite lambda; they are
    // placed just beyond the densest finite level instead.
    let min_positive = merges
        .iter()
        .map(|m| m.distance)
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    let zero_lambda = if min_positive.is_finite() {
        2.0 / min_positive
    } else {
        1.0
    };
    let lambda_of = |d: f64| if d > 0.0 { 1.0 / d } else { zero_lambda };
    let node_size = |node: usize| if node < n { 1 } else { merges[node - n].size };

    let mut tree = CondensedTree {
        entries: Vec::new(),
        clusters: vec![CondensedCluster {
            parent: None,
            children: Vec::new(),
            birth_lambda: 0.0,
            size: n,
            stability: 0.0,
            selected: false,
        }],
    };
    if n < 2 {
        return tree;
    }

    let leaves_under = |node: usize| -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(x) = stack.pop() {
            if x < n {
                out.push(x);
            } else {
                let m = &merges[x - n];
                stack.push(m.right);
                stack.push(m.left);
            }
        }
        out
    };

    // (dendrogram node, condensed cluster that currently owns it)
    let mut stack = vec![(2 * n - 2, 0usize)];
    while let Some((node, cluster)) = stack.pop() {
        if node < n {
            // A singleton reached while still owned: it persists to the
            // deepest level of its cluster.
            let lambda = zero_lambda.max(tree.clusters[cluster].birth_lambda);
            tree.entries.push(CondensedEntry {
                parent: cluster,
                child: CondensedChild::Point(node),
                lambda,
                size: 1,
            });
            continue;
        }
        let m = &merges[node - n];
        let lambda = lambda_of(m.distance);
        let (ls, rs) = (node_size(m.left), node_size(m.right));
        let (lbig, rbig) = (ls >= min_cluster_size, rs >= min_cluster_size);
        match (lbig, rbig) {
            (true, true) => {
                for (child, size) in [(m.left, ls), (m.right, rs)] {
                    let id = tree.clusters.len();
                    tree.clusters.push(CondensedCluster {
                        parent: Some(cluster),
                        children: Vec::new(),
                        birth_lambda: lambda,
                        size,
                        stability: 0.0,
                        selected: false,
                    });
                    tree.clusters[cluster].children.push(id);
                    tree.entries.push(CondensedEntry {
                        parent: cluster,
                        child: CondensedChild::Cluster(id),
                        lambda,
                        size,
                    });
                    stack.push((child, id));
                }
            }
            _ => {
                for (child, big) in [(m.left, lbig), (m.right, rbig)] {
                    if big {
                        stack.push((child, cluster));
                    } else {
                        for p in leaves_under(child) {
                            tree.entries.push(CondensedEntry {
                                parent: cluster,
                                child: CondensedChild::Point(p),
                                lambda,
                                size: 1,
                            });
                        }
                    }
                }
            }
        }
    }
    // Pushing children in creation order onto a LIFO stack still yields a
    // deterministic entry order; sort for a canonical layout.
    tree.entries.sort_by(|a, b| {
        a.parent
            .cmp(&b.parent)
            .then(a.lambda.total_cmp(&b.lambda))
            .then(a.child_key().cmp(&b.child_key()))
    });
    tree
}

impl CondensedEntry {
    fn child_key(&self) -> (u8, usize) {
        match self.child {
            CondensedChild::Point(p) => (0, p),
            CondensedChild::Cluster(c) => (1, c),
        }
    }
}

fn compute_stability(tree: &mut CondensedTree) {
    for c in tree.clusters.iter_mut() {
        c.stability = 0.0;
    }
    for e in &tree.entries {
        let birth = tree.clusters[e.parent].birth_lambda;
        tree.clusters[e.parent].stability += (e.lambda - birth).max(0.0) * e.size as f64;
    }
}

/// Excess-of-mass selection; ties keep the parent.
fn select_eom(tree: &mut CondensedTree) {
    let m = tree.clusters.len();
    let mut best = vec![0.0f64; m];
    // Children always have larger ids than their parent.
    for c in (0..m).rev() {
        let children_total: f64 = tree.clusters[c].children.iter().map(|&k| best[k]).sum();
        let own = tree.clusters[c].stability;
        if tree.clusters[c].children.is_empty() || own >= children_total {
            best[c] = own;
            tree.clusters[c].selected = true;
            let mut stack = tree.clusters[c].children.clone();
            while let Some(d) = stack.pop() {
                tree.clusters[d].selected = false;
                stack.extend(tree.clusters[d].children.iter().copied());
            }
        } else {
            best[c] = children_total;
            tree.clusters[c].selected = false;
        }
    }
}

/// Clusters `y` and returns the flat assignment plus the condensed tree.
pub fn hdbscan(
    y: &EmbeddingMatrix,
    params: &HdbscanParams,
) -> Result<(ClusterAssignment, CondensedTree), ClusterError> {
    let n = y.n();
    params.validate(n)?;
    let min_samples = params.min_samples();
    let core = core_distances(y, min_samples)?;
    let edges = mst(y, &core);
    let merges = single_linkage(n, &edges);
    let mut tree = condense(n, &merges, params.min_cluster_size);
    compute_stability(&mut tree);
    select_eom(&mut tree);

    let mut raw = vec![NOISE; n];
    for e in &tree.entries {
        if let CondensedChild::Point(p) = e.child {
            let mut c = Some(e.parent);
            while let Some(id) = c {
                if tree.clusters[id].selected {
                    raw[p] = id as i64;
                    break;
                }
                c = tree.clusters[id].parent;
            }
        }
    }
    let assignment = ClusterAssignment::canonical(
        &raw,
        ClusterParams::Hdbscan {
            min_cluster_size: params.min_cluster_size,
            min_samples,
        },
    );
    Ok((assignment, tree))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dimred::Stage;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};

    fn line(xs: &[f64]) -> EmbeddingMatrix {
        EmbeddingMatrix::new(xs.len(), 1, xs.to_vec(), Stage::Original).unwrap()
    }

    #[test]
    fn core_distance_examples() {
        let y = line(&[0.0, 1.0, 3.0]);
        assert_eq!(core_distances(&y, 1).unwrap(), vec![1.0, 1.0, 2.0]);
        assert_eq!(core_distance(&y, 2, 1).unwrap(), 2.0);
        assert_eq!(core_distances(&y, 2).unwrap(), vec![3.0, 2.0, 3.0]);
        assert_eq!(core_distances(&line(&[4.0, 4.0, 9.0]), 1).unwrap()[0], 0.0);
        assert!(core_distances(&y, 3).is_err());
    }

    #[test]
    fn mutual_reachability_max_rule() {
        // Cores: 0 -> 1 (to 1), 1 -> 1, 3 -> 2; d(0, 1) = 1, d(1, 2) = 2.
        let y = line(&[0.0, 1.0, 3.0]);
        assert_eq!(mutual_reachability(&y, 0, 2, 1).unwrap(), 3.0);
        assert_eq!(mutual_reachability(&y, 0, 1, 2).unwrap(), 3.0);
        assert_eq!(mutual_reachability(&y, 1, 1, 1).unwrap(), 0.0);
    }

    #[test]
    fn too_few_points() {
        let y = line(&[0.0, 1.0, 2.0]);
        assert!(matches!(
            hdbscan(&y, &HdbscanParams::new(3)),
            Err(ClusterError::TooFewPoints { n: 3, min_cluster_size: 3 })
        ));
        assert!(hdbscan(&y, &HdbscanParams::new(5)).is_err());
    }

    #[test]
    fn single_tight_blob_is_one_cluster() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let normal = Normal::new(0.0, 0.1).unwrap();
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| vec![normal.sample(&mut rng), normal.sample(&mut rng)])
            .collect();
        let y = EmbeddingMatrix::from_rows(&rows, Stage::Original).unwrap();
        let (a, _) = hdbscan(&y, &HdbscanParams::new(10)).unwrap();
        assert_eq!(a.k, 1);
    }

    #[test]
    fn lambda_monotone_and_sizes() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|i| {
                let c = (i % 3) as f64 * 10.0;
                vec![c + rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]
            })
            .collect();
        let y = EmbeddingMatrix::from_rows(&rows, Stage::Original).unwrap();
        let (a, tree) = hdbscan(&y, &HdbscanParams::new(5)).unwrap();
        for e in &tree.entries {
            assert!(e.lambda >= tree.clusters[e.parent].birth_lambda);
            if let CondensedChild::Cluster(c) = e.child {
                assert_eq!(tree.clusters[c].birth_lambda, e.lambda);
            }
        }
        assert!(tree.clusters.iter().all(|c| c.stability >= 0.0));
        assert!(a.cluster_sizes().iter().all(|&s| s >= 5));
        assert_eq!(a.k, 3);
    }

    #[test]
    fn identical_points_one_cluster() {
        let (a, _) = hdbscan(&line(&[2.0; 12]), &HdbscanParams::new(4)).unwrap();
        assert_eq!(a.labels, vec![0; 12]);
    }
}
