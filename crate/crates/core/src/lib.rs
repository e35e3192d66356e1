//! Unsupervised text clustering and topic extraction.
//!
//! The pipeline embeds documents with a (cluster-enhanced) language model,
//! reduces the embeddings with PCA or UMAP, partitions them with k-means,
//! DBSCAN or HDBSCAN, and extracts per-cluster topic words either from the
//! model's attention column sums or with class-based TF-IDF.
//!
//! The language model itself lives behind a subprocess protocol (see
//! [`enhance::backend`]); everything numeric is implemented here.

pub mod cluster;
pub mod corpus;
pub mod dimred;
pub mod enhance;
pub mod metrics;
pub mod topics;

pub use cluster::{ClusterAssignment, ClusterParams, CondensedTree, HdbscanParams};
pub use corpus::{Corpus, Document, Span, Token};
pub use dimred::{EmbeddingMatrix, Stage, UmapParams};
pub use enhance::{BackendSpec, PseudoLabelSet};
pub use metrics::{ContingencyTable, ScoreReport};
pub use topics::{AttentionMatrix, BetaProfile, LayerStats, TopicMethod, TopicReport};

/// Label used for points that belong to no cluster.
pub const NOISE: i64 = -1;
