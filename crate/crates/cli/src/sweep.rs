//! `sweep`: grid search over reducer and clusterer parameters on a fixed
//! document representation.

use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;

use clustop_core::metrics::{nmi, silhouette};
use clustop_core::EmbeddingMatrix;

use crate::config::{combine, to_config_text, Clusterer, GridArgs, Method, Objective, PipelineArgs, PipelineConfig, Reducer};
use crate::labels::read_aligned;
use crate::manifest::{Artifact, Manifest};
use crate::run::{cluster, reduce, representation};

pub const CSV_HEADER: [&str; 6] = ["n_neighbors", "min_cluster_size", "eps", "k", "noise", "objective"];

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub grid: GridArgs,
}

impl SweepArgs {
    pub fn resolve(self) -> Result<(PipelineConfig, SweepGrid)> {
        let (args, grid) = combine(self.pipeline, self.grid, self.config.as_deref())?;
        let cfg = args.resolve()?;
        let grid = SweepGrid::new(&cfg, grid)?;
        Ok((cfg, grid))
    }
}

/// Candidate values per axis; axes that do not apply to the configured
/// reducer or clusterer hold no values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepGrid {
    pub n_neighbors: Vec<usize>,
    pub min_cluster_size: Vec<usize>,
    pub eps: Vec<f64>,
    pub objective: Objective,
    #[serde(skip)]
    pub args: GridArgs,
}

impl SweepGrid {
    /// Missing axes fall back to the single configured value.
    pub fn new(cfg: &PipelineConfig, args: GridArgs) -> Result<Self> {
        let objective = args.objective.unwrap_or(if cfg.labels.is_some() {
            Objective::Nmi
        } else {
            Objective::Silhouette
        });
        if objective == Objective::Nmi && cfg.labels.is_none() {
            bail!("objective nmi needs a labels file (--labels)");
        }
        let pick = |v: &Option<Vec<usize>>, d: usize| v.clone().unwrap_or_else(|| vec![d]);
        let n_neighbors = match cfg.reducer {
            Reducer::Umap => pick(&args.n_neighbors_grid, cfg.umap.n_neighbors),
            Reducer::Pca => Vec::new(),
        };
        let min_cluster_size = match cfg.clusterer {
            Clusterer::Hdbscan => pick(&args.min_cluster_size_grid, cfg.hdbscan.min_cluster_size),
            _ => Vec::new(),
        };
        let eps = match cfg.clusterer {
            Clusterer::Dbscan => args.eps_grid.clone().unwrap_or_else(|| vec![cfg.eps]),
            _ => Vec::new(),
        };
        let empty = |name: &str, given: bool, len: usize| {
            if given && len == 0 {
                bail!("grid axis {name} is empty");
            }
            Ok(())
        };
        empty("n_neighbors", args.n_neighbors_grid.is_some() && cfg.reducer == Reducer::Umap, n_neighbors.len())?;
        empty(
            "min_cluster_size",
            args.min_cluster_size_grid.is_some() && cfg.clusterer == Clusterer::Hdbscan,
            min_cluster_size.len(),
        )?;
        empty("eps", args.eps_grid.is_some() && cfg.clusterer == Clusterer::Dbscan, eps.len())?;
        if min_cluster_size.iter().any(|&m| m < 2) {
            bail!("min_cluster_size candidates must be at least 2");
        }
        if eps.iter().any(|&e| !(e > 0.0)) {
            bail!("eps candidates must be positive");
        }
        Ok(SweepGrid {
            n_neighbors,
            min_cluster_size,
            eps,
            objective,
            args: GridArgs {
                objective: Some(objective),
                ..args
            },
        })
    }

    /// Number of combinations evaluated.
    pub fn size(&self) -> usize {
        let axis = |n: usize| n.max(1);
        axis(self.n_neighbors.len()) * axis(self.min_cluster_size.len()) * axis(self.eps.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n_neighbors: Option<usize>,
    pub min_cluster_size: Option<usize>,
    pub eps: Option<f64>,
    pub k: usize,
    pub noise: usize,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Rows in grid order.
    pub rows: Vec<SweepRow>,
    /// Index of the winning row.
    pub best: usize,
    pub csv: PathBuf,
    pub manifest: Manifest,
}

impl SweepResult {
    pub fn winner(&self) -> &SweepRow {
        &self.rows[self.best]
    }
}

/// Higher objective, then fewer noise points, then smaller n_neighbors, then grid order.
fn rank(a: &SweepRow, b: &SweepRow) -> Ordering {
    b.objective
        .total_cmp(&a.objective)
        .then(a.noise.cmp(&b.noise))
        .then(a.n_neighbors.cmp(&b.n_neighbors))
}

fn write_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(CSV_HEADER)?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for r in rows {
        w.write_record([
            opt(r.n_neighbors.map(|v| v.to_string())),
            opt(r.min_cluster_size.map(|v| v.to_string())),
            opt(r.eps.map(|v| v.to_string())),
            r.k.to_string(),
            r.noise.to_string(),
            r.objective.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn objective_value(objective: Objective, y: &EmbeddingMatrix, labels: &[i64], truth: Option<&[i64]>) -> Result<f64> {
    Ok(match objective {
        Objective::Nmi => nmi(labels, truth.expect("validated"))?,
        // Fewer than two clusters has no silhouette; rank it at the bottom of the range.
        Objective::Silhouette => silhouette(y, labels).unwrap_or(-1.0),
    })
}

pub fn cmd_sweep(cfg: &PipelineConfig, grid: &SweepGrid) -> Result<SweepResult> {
    std::fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    // The sweep never extracts topics, so skip attention export.
    let rep_cfg = PipelineConfig {
        method: Method::Ctfidf,
        ..cfg.clone()
    };
    let rep = representation(&rep_cfg)?;
    let n = rep.embeddings.n();
    if let Some(&m) = grid.min_cluster_size.iter().find(|&&m| m >= n) {
        bail!("min_cluster_size {m} needs more than {n} documents");
    }
    let ids: Vec<&str> = rep.corpus.ids().collect();
    let truth = match grid.objective {
        Objective::Nmi => Some(read_aligned(cfg.labels.as_deref().expect("validated"), &ids)?),
        Objective::Silhouette => None,
    };

    let opt_axis = |v: &[usize]| -> Vec<Option<usize>> {
        if v.is_empty() {
            vec![None]
        } else {
            v.iter().copied().map(Some).collect()
        }
    };
    let eps_axis: Vec<Option<f64>> = if grid.eps.is_empty() {
        vec![None]
    } else {
        grid.eps.iter().copied().map(Some).collect()
    };
    let mut rows = Vec::with_capacity(grid.size());
    for nn in opt_axis(&grid.n_neighbors) {
        let mut c = cfg.clone();
        if let Some(nn) = nn {
            c.umap.n_neighbors = nn;
        }
        let y = reduce(&c, &rep.embeddings).with_context(|| format!("reducing with n_neighbors {nn:?}"))?;
        for mcs in opt_axis(&grid.min_cluster_size) {
            for eps in &eps_axis {
                let mut c = c.clone();
                if let Some(m) = mcs {
                    c.hdbscan.min_cluster_size = m;
                    c.hdbscan.min_samples = c.hdbscan.min_samples.map(|s| s.min(m));
                }
                if let Some(e) = eps {
                    c.eps = *e;
                }
                let a = cluster(&c, &y)?;
                let objective = objective_value(grid.objective, &y, &a.labels, truth.as_deref())?;
                log::info!("n_neighbors {nn:?} min_cluster_size {mcs:?} eps {eps:?}: k {} objective {objective:.4}", a.k);
                rows.push(SweepRow {
                    n_neighbors: nn,
                    min_cluster_size: mcs,
                    eps: *eps,
                    k: a.k,
                    noise: a.noise_count(),
                    objective,
                });
            }
        }
    }
    let best = (0..rows.len())
        .min_by(|&i, &j| rank(&rows[i], &rows[j]).then(i.cmp(&j)))
        .expect("grid is non-empty");

    let csv_path = cfg.out.join("sweep.csv");
    write_csv(&csv_path, &rows)?;
    let best_path = cfg.out.join("sweep-best.json");
    std::fs::write(&best_path, serde_json::to_string_pretty(&rows[best])? + "\n")?;
    let config_path = cfg.out.join("config.toml");
    std::fs::write(&config_path, to_config_text(&cfg.args, Some(&grid.args)))?;
    let mut manifest = Manifest::new("sweep", cfg.args.clone());
    manifest.grid = Some(grid.args.clone());
    manifest.artifacts = vec![Artifact::new("sweep", &csv_path)?, Artifact::new("best", &best_path)?];
    manifest.intermediates = vec![Artifact::new("config", &config_path)?];
    manifest.write(&cfg.out.join("manifest.json"))?;
    Ok(SweepResult {
        rows,
        best,
        csv: csv_path,
        manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(nn: usize, noise: usize, objective: f64) -> SweepRow {
        SweepRow {
            n_neighbors: Some(nn),
            min_cluster_size: None,
            eps: None,
            k: 2,
            noise,
            objective,
        }
    }

    #[test]
    fn ranking_rules() {
        assert_eq!(rank(&row(10, 5, 0.9), &row(5, 0, 0.8)), Ordering::Less);
        assert_eq!(rank(&row(10, 1, 0.9), &row(5, 2, 0.9)), Ordering::Less);
        assert_eq!(rank(&row(10, 1, 0.9), &row(5, 1, 0.9)), Ordering::Greater);
    }

    #[test]
    fn paper_grid_has_121_hdbscan_combinations() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("c.jsonl");
        std::fs::write(&corpus, "{\"id\":\"a\",\"text\":\"x\"}\n").unwrap();
        let cfg = PipelineArgs {
            corpus: Some(corpus),
            backend: Some("b".into()),
            model: Some("m".into()),
            ..Default::default()
        }
        .resolve()
        .unwrap();
        let axis: Vec<usize> = (100..=200).step_by(10).collect();
        let grid = SweepGrid::new(
            &cfg,
            GridArgs {
                n_neighbors_grid: Some(axis.clone()),
                min_cluster_size_grid: Some(axis),
                eps_grid: Some(vec![0.1, 0.2]),
                objective: None,
            },
        )
        .unwrap();
        assert_eq!(grid.size(), 121);
        assert!(grid.eps.is_empty());
        assert_eq!(grid.objective, Objective::Silhouette);
    }

    #[test]
    fn nmi_needs_labels() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("c.jsonl");
        std::fs::write(&corpus, "{\"id\":\"a\",\"text\":\"x\"}\n").unwrap();
        let cfg = PipelineArgs {
            corpus: Some(corpus),
            backend: Some("b".into()),
            model: Some("m".into()),
            ..Default::default()
        }
        .resolve()
        .unwrap();
        let grid = GridArgs {
            objective: Some(Objective::Nmi),
            ..Default::default()
        };
        assert!(SweepGrid::new(&cfg, grid).is_err());
    }
}
