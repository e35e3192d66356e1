//! The enhancement loop: embed with the original model, reduce with UMAP,
//! cluster with HDBSCAN, fine-tune the model on the non-noise points as
//! pseudo-labels and re-embed with the enhanced model.
//!
//! Model work happens behind [`Backend`], normally an external executable
//! speaking the subprocess protocol in [`backend`]. [`fixture`] provides a
//! deterministic stand-in used by tests and demos.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod backend;
pub mod fixture;
mod pipeline;

pub use backend::{
    check_backend, tokens_path, Backend, BackendSpec, Capabilities, CheckReport, FinetuneParams,
    SubprocessBackend, BACKEND_ENV, FIXTURE_BACKEND, PROTOCOL_VERSION,
};
pub use fixture::{planted_corpus, FixtureBackend, FixtureModel, PlantedCorpus, PlantedSpec};
pub use pipeline::{
    run_enhancement, run_enhancement_with, BackendLock, Enhancement, Provenance, PseudoLabelSummary, StageRecord, Workspace,
};

use crate::cluster::{ClusterAssignment, ClusterError, LabelRecord};
use crate::corpus::{Corpus, CorpusError};
use crate::dimred::DimredError;
use crate::topics::TopicsError;

#[derive(Debug, Error)]
pub enum EnhanceError {
    #[error("no pseudo-labels; loosen clustering parameters")]
    NoPseudoLabels,
    #[error("backend `{op}` exited with {status}: {stderr}")]
    Backend {
        op: String,
        status: String,
        stderr: String,
    },
    #[error("cannot start backend `{executable}`: {source}")]
    Spawn {
        executable: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("backend protocol violation: {0}")]
    Protocol(String),
    #[error("stage `{stage}` produced {got} rows for {expected} documents")]
    RowCount {
        stage: String,
        got: usize,
        expected: usize,
    },
    #[error("backend lock {0} is held by another process")]
    Locked(PathBuf),
    #[error("fixture backend: {0}")]
    Fixture(String),
    #[error("assignment has {got} labels for {expected} documents")]
    Misaligned { got: usize, expected: usize },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Dimred(#[from] DimredError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Topics(#[from] TopicsError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl EnhanceError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        EnhanceError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Non-noise documents with contiguous labels, the training set for fine-tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelSet {
    /// `(document id, label)` in corpus order.
    pub labels: Vec<(String, i64)>,
    pub k: usize,
    pub total: usize,
}

impl PseudoLabelSet {
    pub fn coverage(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.labels.len() as f64 / self.total as f64
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Writes the `{"id", "label"}` JSONL consumed by `finetune`.
    pub fn write(&self, path: &Path) -> Result<(), EnhanceError> {
        let mut text = String::new();
        for (id, label) in &self.labels {
            let rec = LabelRecord {
                id: id.clone(),
                label: *label,
            };
            text.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            text.push('\n');
        }
        std::fs::write(path, text).map_err(|e| EnhanceError::io(path, e))
    }
}

/// Keeps every non-noise document, renumbering labels `0..k` by first occurrence.
pub fn select_pseudo_labels(
    corpus: &Corpus,
    assignment: &ClusterAssignment,
) -> Result<PseudoLabelSet, EnhanceError> {
    if assignment.len() != corpus.len() {
        return Err(EnhanceError::Misaligned {
            got: assignment.len(),
            expected: corpus.len(),
        });
    }
    let mut map = std::collections::HashMap::new();
    let labels: Vec<(String, i64)> = corpus
        .ids()
        .zip(&assignment.labels)
        .filter(|(_, &l)| l >= 0)
        .map(|(id, &l)| {
            let next = map.len() as i64;
            (id.to_string(), *map.entry(l).or_insert(next))
        })
        .collect();
    if labels.is_empty() {
        return Err(EnhanceError::NoPseudoLabels);
    }
    Ok(PseudoLabelSet {
        k: map.len(),
        labels,
        total: corpus.len(),
    })
}
