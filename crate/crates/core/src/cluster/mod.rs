//! Partitioning of reduced embeddings: k-means, DBSCAN and HDBSCAN.
//!
//! Every clusterer returns a [`ClusterAssignment`] whose labels are
//! `-1` for noise and `0..k` for clusters, numbered by first occurrence in
//! row order.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::NOISE;

mod dbscan;
mod hdbscan;
mod kmeans;

pub use dbscan::dbscan;
pub use hdbscan::{
    core_distance, core_distances, hdbscan, mutual_reachability, CondensedCluster,
    CondensedEntry, CondensedTree, HdbscanParams,
};
pub use kmeans::{kmeans, kmeans_fit, KMeansFit};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("hdbscan needs more than min_cluster_size = {min_cluster_size} points, got {n}")]
    TooFewPoints { n: usize, min_cluster_size: usize },
    #[error("label vector malformed: {0}")]
    BadLabels(String),
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ClusterError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        ClusterError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Snapshot of the algorithm and parameters that produced an assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "lowercase")]
pub enum ClusterParams {
    Kmeans { k: usize, seed: u64 },
    Dbscan { eps: f64, min_samples: usize },
    Hdbscan { min_cluster_size: usize, min_samples: usize },
    /// Labels read from a file or supplied by a caller.
    External,
}

impl ClusterParams {
    pub fn algorithm(&self) -> &'static str {
        match self {
            ClusterParams::Kmeans { .. } => "kmeans",
            ClusterParams::Dbscan { .. } => "dbscan",
            ClusterParams::Hdbscan { .. } => "hdbscan",
            ClusterParams::External => "external",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub labels: Vec<i64>,
    pub k: usize,
    pub params: ClusterParams,
}

impl ClusterAssignment {
    /// Validates that labels are exactly `{-1} ∪ {0..k}` with every cluster occupied.
    pub fn new(labels: Vec<i64>, params: ClusterParams) -> Result<Self, ClusterError> {
        let max = labels.iter().copied().max().unwrap_or(NOISE);
        if labels.iter().any(|&l| l < NOISE) {
            return Err(ClusterError::BadLabels("labels below -1".into()));
        }
        let k = (max + 1).max(0) as usize;
        let mut seen = vec![false; k];
        for &l in &labels {
            if l >= 0 {
                seen[l as usize] = true;
            }
        }
        if let Some(gap) = seen.iter().position(|s| !s) {
            return Err(ClusterError::BadLabels(format!("cluster {gap} is empty")));
        }
        Ok(ClusterAssignment { labels, k, params })
    }

    /// Renumbers arbitrary non-negative labels by first occurrence; negative labels become noise.
    pub fn canonical(raw: &[i64], params: ClusterParams) -> Self {
        let mut map = HashMap::new();
        let labels: Vec<i64> = raw
            .iter()
            .map(|&l| {
                if l < 0 {
                    NOISE
                } else {
                    let next = map.len() as i64;
                    *map.entry(l).or_insert(next)
                }
            })
            .collect();
        ClusterAssignment {
            k: map.len(),
            labels,
            params,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            if l >= 0 {
                sizes[l as usize] += 1;
            }
        }
        sizes
    }

    /// Writes `{"id", "label"}` JSONL and a sidecar JSON (`<path>.meta.json`).
    pub fn write(&self, path: &Path, ids: &[&str]) -> Result<(), ClusterError> {
        if ids.len() != self.labels.len() {
            return Err(ClusterError::BadLabels(format!(
                "{} ids for {} labels",
                ids.len(),
                self.labels.len()
            )));
        }
        let file = File::create(path).map_err(|e| ClusterError::io(path, e))?;
        let mut w = BufWriter::new(file);
        for (id, label) in ids.iter().zip(&self.labels) {
            let line = serde_json::json!({ "id": id, "label": label });
            writeln!(w, "{line}").map_err(|e| ClusterError::io(path, e))?;
        }
        w.flush().map_err(|e| ClusterError::io(path, e))?;

        let meta = AssignmentMeta {
            k: self.k,
            noise: self.noise_count(),
            params: self.params.clone(),
        };
        let meta_path = sidecar_path(path);
        let text = serde_json::to_string_pretty(&meta).expect("meta serializes");
        std::fs::write(&meta_path, text + "\n").map_err(|e| ClusterError::io(&meta_path, e))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct AssignmentMeta {
    k: usize,
    noise: usize,
    #[serde(flatten)]
    params: ClusterParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelRecord {
    pub id: String,
    pub label: i64,
}

/// Path of the metadata file written next to an assignment file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Reads an `{"id", "label"}` JSONL file (assignments or reference labels).
pub fn read_labels(path: &Path) -> Result<Vec<LabelRecord>, ClusterError> {
    let file = File::open(path).map_err(|e| ClusterError::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| ClusterError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| ClusterError::Format {
                path: path.to_path_buf(),
                message: format!("line {}: {e}", lineno + 1),
            })?,
        );
    }
    Ok(out)
}

/// Reads an assignment file, taking parameters from its sidecar when present.
pub fn read_assignment(path: &Path) -> Result<(Vec<String>, ClusterAssignment), ClusterError> {
    let records = read_labels(path)?;
    let meta_path = sidecar_path(path);
    let params = match std::fs::read_to_string(&meta_path) {
        Ok(text) => {
            serde_json::from_str::<AssignmentMeta>(&text)
                .map_err(|e| ClusterError::Format {
                    path: meta_path.clone(),
                    message: e.to_string(),
                })?
                .params
        }
        Err(_) => ClusterParams::External,
    };
    let ids = records.iter().map(|r| r.id.clone()).collect();
    let labels = records.into_iter().map(|r| r.label).collect();
    Ok((ids, ClusterAssignment::new(labels, params)?))
}
