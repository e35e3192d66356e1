//! `eval`: score an assignment against reference labels and its embedding.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;

use clustop_core::cluster::read_assignment;
use clustop_core::{EmbeddingMatrix, ScoreReport};

use crate::labels::read_aligned;

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Assignment JSONL.
    #[arg(long)]
    pub assignment: PathBuf,
    /// Reference labels JSONL; enables the external metrics.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Embedding the assignment was computed on (CTEM); enables the internal metrics.
    #[arg(long)]
    pub embedding: Option<PathBuf>,
    /// Also write the report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cmd_eval(assignment: &Path, labels: Option<&Path>, embedding: Option<&Path>) -> Result<ScoreReport> {
    let (ids, a) = read_assignment(assignment)?;
    let ids: Vec<&str> = ids.iter().map(String::as_str).collect();
    let mut report = ScoreReport {
        assignment_source: Some(assignment.display().to_string()),
        labels_source: labels.map(|p| p.display().to_string()),
        embedding_source: embedding.map(|p| p.display().to_string()),
        n: a.len(),
        noise: a.noise_count(),
        ..Default::default()
    };
    if let Some(path) = labels {
        let truth = read_aligned(path, &ids)?;
        report = report.with_external(&a.labels, &truth)?;
    }
    if let Some(path) = embedding {
        let y = EmbeddingMatrix::read_ctem(path).with_context(|| format!("reading {}", path.display()))?;
        if y.n() != a.len() {
            bail!("{} has {} rows for {} assigned documents", path.display(), y.n(), a.len());
        }
        report = report.with_internal(&y, &a.labels);
    }
    Ok(report)
}
