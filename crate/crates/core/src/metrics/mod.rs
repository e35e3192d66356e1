//! External (label-agreement) and internal (geometry) clustering scores.
//!
//! Noise labels (`-1`) are an ordinary class for the contingency-based
//! scores; pair scores treat a noise prediction as "not grouped with
//! anything"; internal scores drop noise points entirely.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod contingency;
mod external;
mod internal;

pub use contingency::ContingencyTable;
pub use external::{
    adjusted_mutual_info, ari, expected_mutual_info, mutual_info_family, nmi, pair_scores,
    purity, MiVariant, PairScores,
};
pub use internal::{calinski_harabasz, davies_bouldin, silhouette};

use crate::dimred::EmbeddingMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("label vectors differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} items, got {got}")]
    TooFewItems { needed: usize, got: usize },
    #[error("need at least 2 non-noise clusters, got {0}")]
    TooFewClusters(usize),
}

pub(crate) fn check_lengths(a: &[i64], b: &[i64]) -> Result<(), MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    Ok(())
}

/// All scores for one evaluation; absent scores were not applicable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub ari: Option<f64>,
    pub ami: Option<f64>,
    pub nmi: Option<f64>,
    pub purity: Option<f64>,
    pub pair_precision: Option<f64>,
    pub pair_recall: Option<f64>,
    pub pair_accuracy: Option<f64>,
    pub pair_f1: Option<f64>,
    pub silhouette: Option<f64>,
    pub calinski_harabasz: Option<f64>,
    pub davies_bouldin: Option<f64>,
    /// Path or description of the predicted labels.
    pub assignment_source: Option<String>,
    pub labels_source: Option<String>,
    pub embedding_source: Option<String>,
    pub n: usize,
    pub noise: usize,
}

impl ScoreReport {
    /// Fills every external score of `pred` against `truth`.
    pub fn with_external(mut self, pred: &[i64], truth: &[i64]) -> Result<Self, MetricsError> {
        check_lengths(pred, truth)?;
        self.n = pred.len();
        self.noise = pred.iter().filter(|&&l| l < 0).count();
        self.ari = Some(ari(pred, truth)?);
        self.nmi = Some(nmi(pred, truth)?);
        self.ami = Some(adjusted_mutual_info(pred, truth)?);
        self.purity = Some(purity(pred, truth)?);
        if pred.len() >= 2 {
            let p = pair_scores(pred, truth)?;
            self.pair_precision = Some(p.precision);
            self.pair_recall = Some(p.recall);
            self.pair_accuracy = Some(p.accuracy);
            self.pair_f1 = Some(p.f1);
        }
        Ok(self)
    }

    /// Fills the internal scores when at least two non-noise clusters exist.
    pub fn with_internal(mut self, y: &EmbeddingMatrix, labels: &[i64]) -> Self {
        self.n = labels.len();
        self.noise = labels.iter().filter(|&&l| l < 0).count();
        self.silhouette = silhouette(y, labels).ok();
        self.calinski_harabasz = calinski_harabasz(y, labels).ok();
        self.davies_bouldin = davies_bouldin(y, labels).ok();
        self
    }

    fn rows(&self) -> [(&'static str, Option<f64>); 11] {
        [
            ("ari", self.ari),
            ("ami", self.ami),
            ("nmi", self.nmi),
            ("purity", self.purity),
            ("pair_precision", self.pair_precision),
            ("pair_recall", self.pair_recall),
            ("pair_accuracy", self.pair_accuracy),
            ("pair_f1", self.pair_f1),
            ("silhouette", self.silhouette),
            ("calinski_harabasz", self.calinski_harabasz),
            ("davies_bouldin", self.davies_bouldin),
        ]
    }
}

impl fmt::Display for ScoreReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<18} {:>12}", "metric", "value")?;
        for (name, v) in self.rows() {
            match v {
                Some(v) => writeln!(f, "{name:<18} {v:>12.6}")?,
                None => writeln!(f, "{name:<18} {:>12}", "-")?,
            }
        }
        write!(f, "{:<18} {:>12}", "noise", format!("{}/{}", self.noise, self.n))
    }
}
