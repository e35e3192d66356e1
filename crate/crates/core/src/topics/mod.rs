//! Topic extraction.
//!
//! The attention route scores every token of a sentence by the attention it
//! receives from all tokens (column sums `beta` of the head-averaged
//! attention matrix), takes the highest-scoring non-special token as the
//! sentence keyword, maps it to its segmented word and ranks each cluster's
//! keywords by frequency. The c-TF-IDF route is the word-count baseline.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod attention;
mod ctfidf;
mod keywords;
mod layers;

pub use attention::{
    aggregate_token_values, beta_weighted_mean, compute_beta, read_beta_profiles,
    write_beta_profiles, AttentionMatrix, BetaProfile,
};
pub use ctfidf::ctfidf_topics;
pub use keywords::{cluster_topics, key_token, token_to_word};
pub use layers::{layer_stats, select_layer, LayerStat, LayerStats};

use crate::cluster::ClusterAssignment;
use crate::corpus::Corpus;

#[derive(Debug, Error)]
pub enum TopicsError {
    #[error("attention row {row} sums to {sum}, not 1")]
    NotRowStochastic { row: usize, sum: f64 },
    #[error("profile `{id}` layer {layer}: column sums total {sum}, expected {tokens}")]
    BetaSum {
        id: String,
        layer: usize,
        sum: f64,
        tokens: usize,
    },
    #[error("profile `{id}` layer {layer}: non-special column sums have zero mean")]
    ZeroMean { id: String, layer: usize },
    #[error("layer {layer} out of range ({layers} layers)")]
    LayerOutOfRange { layer: usize, layers: usize },
    #[error("token {index} out of range ({len} tokens)")]
    TokenOutOfRange { index: usize, len: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("misaligned inputs: {0}")]
    Misaligned(String),
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl TopicsError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        TopicsError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopicMethod {
    #[default]
    Attention,
    Ctfidf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTopics {
    pub label: i64,
    /// `(word, score)` ranked by non-increasing score.
    pub words: Vec<(String, f64)>,
    /// Documents whose key token mapped to no word.
    #[serde(default)]
    pub unmapped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicReport {
    pub clusters: Vec<ClusterTopics>,
    pub method: TopicMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<usize>,
}

impl TopicReport {
    pub fn write(&self, path: &Path) -> Result<(), TopicsError> {
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(path, text + "\n").map_err(|e| TopicsError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, TopicsError> {
        let text = std::fs::read_to_string(path).map_err(|e| TopicsError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| TopicsError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Highest-ranked word of each cluster.
    pub fn heads(&self) -> Vec<Option<&str>> {
        self.clusters
            .iter()
            .map(|c| c.words.first().map(|w| w.0.as_str()))
            .collect()
    }
}

/// Output of the attention route.
#[derive(Debug, Clone)]
pub struct AttentionTopics {
    pub report: TopicReport,
    pub stats: LayerStats,
    pub layer: usize,
    /// Per document keyword, `None` when unmapped.
    pub keywords: Vec<Option<String>>,
}

/// Full attention route: layer statistics, layer choice, per-sentence key
/// token, token-to-word mapping and per-cluster ranking.
///
/// `corpus` must carry tokens aligned with `profiles` (matched by id).
pub fn attention_topics(
    corpus: &Corpus,
    profiles: &[BetaProfile],
    assignment: &ClusterAssignment,
    k: usize,
    layer_override: Option<usize>,
) -> Result<AttentionTopics, TopicsError> {
    if assignment.len() != corpus.len() {
        return Err(TopicsError::Misaligned(format!(
            "{} labels for {} documents",
            assignment.len(),
            corpus.len()
        )));
    }
    let by_id: HashMap<&str, &BetaProfile> = profiles.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut aligned = Vec::with_capacity(corpus.len());
    for doc in &corpus.documents {
        let mut p = (*by_id.get(doc.id.as_str()).ok_or_else(|| {
            TopicsError::Misaligned(format!("no attention profile for document `{}`", doc.id))
        })?)
        .clone();
        p.align_with(doc)?;
        aligned.push(p);
    }
    let stats = layer_stats(&aligned)?;
    let layer = select_layer(&stats, layer_override)?;
    let keywords = corpus
        .documents
        .iter()
        .zip(&aligned)
        .map(|(doc, p)| match key_token(p, layer)? {
            Some(t) => token_to_word(doc, t),
            None => Ok(None),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut report = cluster_topics(assignment, &keywords, k)?;
    report.layer = Some(layer);
    Ok(AttentionTopics {
        report,
        stats,
        layer,
        keywords,
    })
}
