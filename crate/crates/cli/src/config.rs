//! Pipeline configuration: command-line flags, a flat `key = value` file
//! with the same names (snake_case), and built-in defaults, in that order
//! of precedence.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use clustop_core::dimred::Metric;
use clustop_core::enhance::{BackendSpec, FinetuneParams};
use clustop_core::{HdbscanParams, TopicMethod, UmapParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reducer {
    Pca,
    Umap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Clusterer {
    Kmeans,
    Dbscan,
    Hdbscan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Attention,
    Ctfidf,
}

impl From<Method> for TopicMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Attention => TopicMethod::Attention,
            Method::Ctfidf => TopicMethod::Ctfidf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// NMI against reference labels.
    Nmi,
    /// Silhouette of the clustering on the reduced embedding.
    Silhouette,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
pub struct PipelineArgs {
    /// Corpus JSONL.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    /// Backend executable (`builtin:fixture` for the in-process fixture); falls back to CLUSTOP_BACKEND.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<PathBuf>,
    /// Model id passed to the backend.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Fine-tuning epochs.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<u32>,
    /// Fine-tuning learning rate.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    /// Fine-tuning batch size.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
    /// Output directory.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Fine-tune on pseudo-labels before the final clustering.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enhance: Option<bool>,
    #[arg(long, value_enum)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reducer: Option<Reducer>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_neighbors: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_dist: Option<f64>,
    /// Output dimensionality of the reducer.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<usize>,
    /// UMAP epochs (default: 500 up to 10k points, else 200).
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub umap_epochs: Option<usize>,
    #[arg(long, value_enum)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clusterer: Option<Clusterer>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_cluster_size: Option<usize>,
    /// HDBSCAN min_samples (default min_cluster_size) or DBSCAN min_samples (default 5).
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_samples: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    /// Number of k-means clusters.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[arg(long, value_enum)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    /// Topic words per cluster.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<usize>,
    /// Attention layer to use instead of the automatic choice.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Reference labels JSONL for external scores.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
pub struct GridArgs {
    /// Comma-separated n_neighbors candidates.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_neighbors_grid: Option<Vec<usize>>,
    /// Comma-separated min_cluster_size candidates.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_cluster_size_grid: Option<Vec<usize>>,
    /// Comma-separated eps candidates.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_grid: Option<Vec<f64>>,
    /// Defaults to nmi when labels are given, else silhouette.
    #[arg(long, value_enum)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<Objective>,
}

const PIPELINE_KEYS: [&str; 23] = [
    "corpus",
    "backend",
    "model",
    "epochs",
    "lr",
    "batch",
    "out",
    "enhance",
    "reducer",
    "n_neighbors",
    "min_dist",
    "dims",
    "umap_epochs",
    "clusterer",
    "min_cluster_size",
    "min_samples",
    "eps",
    "k",
    "method",
    "top_k",
    "layer",
    "seed",
    "labels",
];

const GRID_KEYS: [&str; 4] = ["n_neighbors_grid", "min_cluster_size_grid", "eps_grid", "objective"];

macro_rules! merge_fields {
    ($a:expr, $b:expr; $($f:ident),*) => {
        $( if $a.$f.is_none() { $a.$f = $b.$f; } )*
    };
}

impl PipelineArgs {
    /// Fills fields unset here from `other`.
    pub fn merge(mut self, other: PipelineArgs) -> Self {
        merge_fields!(self, other; corpus, backend, model, epochs, lr, batch, out, enhance,
            reducer, n_neighbors, min_dist, dims, umap_epochs, clusterer, min_cluster_size,
            min_samples, eps, k, method, top_k, layer, seed, labels);
        self
    }

    /// Fills every field that has a default; the backend comes from
    /// `CLUSTOP_BACKEND` when unset.
    pub fn with_defaults(self) -> Self {
        let defaults = PipelineArgs {
            backend: BackendSpec::resolve_executable(None),
            epochs: Some(FinetuneParams::default().epochs),
            lr: Some(FinetuneParams::default().lr),
            batch: Some(FinetuneParams::default().batch),
            out: Some(PathBuf::from("clustop-out")),
            enhance: Some(true),
            reducer: Some(Reducer::Umap),
            n_neighbors: Some(15),
            min_dist: Some(0.1),
            dims: Some(2),
            clusterer: Some(Clusterer::Hdbscan),
            min_cluster_size: Some(10),
            eps: Some(0.5),
            method: Some(Method::Attention),
            top_k: Some(10),
            seed: Some(42),
            ..Default::default()
        };
        self.merge(defaults)
    }

    /// Checks presence and ranges and builds the typed configuration.
    pub fn resolve(self) -> Result<PipelineConfig> {
        let args = self.with_defaults();
        let corpus = args.corpus.clone().context("no corpus given (--corpus)")?;
        if !corpus.is_file() {
            bail!("corpus {} does not exist", corpus.display());
        }
        if let Some(labels) = &args.labels {
            if !labels.is_file() {
                bail!("labels file {} does not exist", labels.display());
            }
        }
        let backend = args
            .backend
            .clone()
            .context("no backend given (--backend or CLUSTOP_BACKEND)")?;
        let model = args.model.clone().context("no model given (--model)")?;
        let clusterer = args.clusterer.expect("defaulted");
        if clusterer == Clusterer::Kmeans && args.k.is_none() {
            bail!("k-means needs --k");
        }
        let min_cluster_size = args.min_cluster_size.expect("defaulted");
        if min_cluster_size < 2 {
            bail!("min_cluster_size must be at least 2");
        }
        if let Some(ms) = args.min_samples {
            if ms == 0 || (clusterer == Clusterer::Hdbscan && ms > min_cluster_size) {
                bail!("min_samples must be in 1..=min_cluster_size");
            }
        }
        let eps = args.eps.expect("defaulted");
        if !(eps > 0.0) {
            bail!("eps must be positive");
        }
        if args.top_k == Some(0) {
            bail!("top_k must be at least 1");
        }
        let seed = args.seed.expect("defaulted");
        let umap = UmapParams {
            n_neighbors: args.n_neighbors.expect("defaulted"),
            min_dist: args.min_dist.expect("defaulted"),
            out_dims: args.dims.expect("defaulted"),
            n_epochs: args.umap_epochs,
            seed,
            metric: Metric::Euclidean,
            ..UmapParams::default()
        };
        Ok(PipelineConfig {
            corpus,
            labels: args.labels.clone(),
            out: args.out.clone().expect("defaulted"),
            backend,
            model,
            finetune: FinetuneParams {
                epochs: args.epochs.expect("defaulted"),
                lr: args.lr.expect("defaulted"),
                batch: args.batch.expect("defaulted"),
            },
            enhance: args.enhance.expect("defaulted"),
            reducer: args.reducer.expect("defaulted"),
            umap,
            clusterer,
            hdbscan: HdbscanParams {
                min_cluster_size,
                min_samples: args.min_samples,
            },
            dbscan_min_samples: args.min_samples.unwrap_or(5),
            eps,
            k: args.k,
            method: args.method.expect("defaulted"),
            top_k: args.top_k.expect("defaulted"),
            layer: args.layer,
            seed,
            args,
        })
    }
}

/// Validated configuration of one pipeline invocation.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub corpus: PathBuf,
    pub labels: Option<PathBuf>,
    pub out: PathBuf,
    pub backend: PathBuf,
    pub model: String,
    pub finetune: FinetuneParams,
    pub enhance: bool,
    pub reducer: Reducer,
    pub umap: UmapParams,
    pub clusterer: Clusterer,
    pub hdbscan: HdbscanParams,
    pub dbscan_min_samples: usize,
    pub eps: f64,
    pub k: Option<usize>,
    pub method: Method,
    pub top_k: usize,
    pub layer: Option<usize>,
    pub seed: u64,
    /// The fully defaulted arguments, written out for replay.
    pub args: PipelineArgs,
}

impl PipelineConfig {
    pub fn backend_spec(&self) -> BackendSpec {
        BackendSpec {
            executable: self.backend.clone(),
            model: self.model.clone(),
            finetune: self.finetune,
            workdir: self.out.join("work"),
        }
    }
}

/// Reads a flat configuration file, rejecting unknown keys.
pub fn load_config_file(path: &Path) -> Result<(PipelineArgs, GridArgs)> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let table: toml::Table =
        toml::from_str(&text).with_context(|| format!("malformed config {}", path.display()))?;
    for (key, value) in &table {
        if !PIPELINE_KEYS.contains(&key.as_str()) && !GRID_KEYS.contains(&key.as_str()) {
            bail!("{}: unknown key `{key}`", path.display());
        }
        if value.is_table() {
            bail!("{}: `{key}` must be a plain value", path.display());
        }
    }
    let pipeline: PipelineArgs = toml::Value::Table(table.clone())
        .try_into()
        .with_context(|| format!("bad value in {}", path.display()))?;
    let grid: GridArgs = toml::Value::Table(table)
        .try_into()
        .with_context(|| format!("bad value in {}", path.display()))?;
    Ok((pipeline, grid))
}

/// Flags first, then the file named by `config`.
pub fn combine(
    flags: PipelineArgs,
    grid: GridArgs,
    config: Option<&Path>,
) -> Result<(PipelineArgs, GridArgs)> {
    let Some(path) = config else {
        return Ok((flags, grid));
    };
    let (file, file_grid) = load_config_file(path)?;
    let mut grid = grid;
    merge_fields!(grid, file_grid; n_neighbors_grid, min_cluster_size_grid, eps_grid, objective);
    Ok((flags.merge(file), grid))
}

/// Serializes arguments in the flat file format accepted by `--config`.
pub fn to_config_text(args: &PipelineArgs, grid: Option<&GridArgs>) -> String {
    let mut text = toml::to_string(args).expect("arguments serialize");
    if let Some(g) = grid {
        text.push_str(&toml::to_string(g).expect("grid serializes"));
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full() -> PipelineArgs {
        PipelineArgs {
            corpus: Some("c".into()),
            backend: Some("b".into()),
            model: Some("m".into()),
            epochs: Some(1),
            lr: Some(0.1),
            batch: Some(2),
            out: Some("o".into()),
            enhance: Some(false),
            reducer: Some(Reducer::Pca),
            n_neighbors: Some(3),
            min_dist: Some(0.2),
            dims: Some(2),
            umap_epochs: Some(10),
            clusterer: Some(Clusterer::Dbscan),
            min_cluster_size: Some(4),
            min_samples: Some(2),
            eps: Some(1.5),
            k: Some(3),
            method: Some(Method::Ctfidf),
            top_k: Some(5),
            layer: Some(1),
            seed: Some(9),
            labels: Some("l".into()),
        }
    }

    #[test]
    fn key_lists_match_fields() {
        let table: toml::Table = toml::from_str(&to_config_text(&full(), None)).unwrap();
        let mut keys: Vec<&str> = table.keys().map(String::as_str).collect();
        keys.sort();
        let mut expected = PIPELINE_KEYS.to_vec();
        expected.sort();
        assert_eq!(keys, expected);
        let grid = GridArgs {
            n_neighbors_grid: Some(vec![1]),
            min_cluster_size_grid: Some(vec![2]),
            eps_grid: Some(vec![0.5]),
            objective: Some(Objective::Nmi),
        };
        let table: toml::Table = toml::from_str(&toml::to_string(&grid).unwrap()).unwrap();
        assert_eq!(table.len(), GRID_KEYS.len());
    }

    #[test]
    fn file_round_trip_and_flag_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.conf");
        std::fs::write(&path, to_config_text(&full(), None)).unwrap();
        let flags = PipelineArgs {
            seed: Some(1),
            ..Default::default()
        };
        let (merged, _) = combine(flags, GridArgs::default(), Some(&path)).unwrap();
        assert_eq!(merged.seed, Some(1));
        assert_eq!(PipelineArgs { seed: Some(9), ..merged }, full());
    }

    #[test]
    fn unknown_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.conf");
        std::fs::write(&path, "n_neighbours = 5\n").unwrap();
        let err = load_config_file(&path).unwrap_err();
        assert!(err.to_string().contains("n_neighbours"));
    }

    #[test]
    fn missing_corpus_fails_validation() {
        let args = PipelineArgs {
            corpus: Some("/nonexistent/corpus.jsonl".into()),
            backend: Some("x".into()),
            model: Some("m".into()),
            ..Default::default()
        };
        let err = args.resolve().unwrap_err();
        assert!(err.to_string().contains("does not exist"));
    }
}
