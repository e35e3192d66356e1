//! Dimensionality reduction: PCA and UMAP, plus the exact k-NN graph and the
//! trustworthiness score used to judge a layout.

use std::path::{Path, PathBuf};

use thiserror::Error;

mod knn;
mod matrix;
mod pca;
mod trust;
pub mod umap;

pub use knn::{knn_graph, KnnGraph, Metric};
pub use matrix::{EmbeddingMatrix, Stage};
pub(crate) use matrix::{euclidean, sq_euclidean};
pub use pca::pca;
pub use trust::trustworthiness;
pub use umap::{fit_ab, fuzzy_union, smooth_knn, umap, UmapParams};

#[derive(Debug, Error)]
pub enum DimredError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("k = {k} must be smaller than the number of rows n = {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("malformed embedding file: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl DimredError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        DimredError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
