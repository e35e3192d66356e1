use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::backend::{tokens_path, Backend, BackendSpec, FinetuneParams};
use super::{select_pseudo_labels, EnhanceError, PseudoLabelSet};
use crate::cluster::{hdbscan, read_assignment, ClusterAssignment, HdbscanParams};
use crate::corpus::{attach_tokens, Corpus};
use crate::dimred::{umap, EmbeddingMatrix, UmapParams};
use crate::topics::{read_beta_profiles, BetaProfile};

/// One cached pipeline stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub key: String,
    pub cached: bool,
    pub dir: PathBuf,
}

/// Content-addressed stage cache rooted at the backend working directory.
///
/// A stage's key hashes its name, the corpus fingerprint and its declared
/// inputs (which include the upstream stage key), so any change upstream
/// invalidates everything below it.
#[derive(Debug)]
pub struct Workspace {
    root: PathBuf,
    corpus_path: PathBuf,
    corpus: Corpus,
    records: Vec<StageRecord>,
}

/// Exclusive right to run the backend in one working directory.
#[derive(Debug)]
pub struct BackendLock {
    path: PathBuf,
}

impl Drop for BackendLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

impl Workspace {
    /// Creates the directory layout and writes the corpus the backend will read.
    pub fn open(root: &Path, corpus: &Corpus) -> Result<Self, EnhanceError> {
        let stages = root.join("stages");
        std::fs::create_dir_all(&stages).map_err(|e| EnhanceError::io(&stages, e))?;
        let corpus_path = root.join("corpus.jsonl");
        corpus.save(&corpus_path)?;
        Ok(Workspace {
            root: root.to_path_buf(),
            corpus_path,
            corpus: corpus.clone(),
            records: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn corpus_path(&self) -> &Path {
        &self.corpus_path
    }

    pub fn records(&self) -> &[StageRecord] {
        &self.records
    }

    pub fn lock(&self) -> Result<BackendLock, EnhanceError> {
        let path = self.root.join(".backend.lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(BackendLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(EnhanceError::Locked(path)),
            Err(e) => Err(EnhanceError::io(&path, e)),
        }
    }

    fn key(&self, name: &str, inputs: &serde_json::Value) -> String {
        let doc = json!({"stage": name, "corpus": self.corpus.fingerprint, "inputs": inputs});
        let digest = Sha256::digest(doc.to_string().as_bytes());
        hex::encode(&digest[..8])
    }

    /// Runs `build` into a fresh directory unless a completed stage with the
    /// same key exists. Returns the stage directory and key.
    pub fn stage(
        &mut self,
        name: &str,
        inputs: serde_json::Value,
        build: impl FnOnce(&Path) -> Result<(), EnhanceError>,
    ) -> Result<(PathBuf, String), EnhanceError> {
        let key = self.key(name, &inputs);
        let dir = self.root.join("stages").join(format!("{name}-{key}"));
        let marker = dir.join("stage.json");
        let cached = marker.is_file();
        if cached {
            log::info!("stage {name} served from cache ({key})");
        } else {
            log::info!("stage {name} running ({key})");
            let partial = dir.with_extension("partial");
            for d in [&dir, &partial] {
                if d.exists() {
                    std::fs::remove_dir_all(d).map_err(|e| EnhanceError::io(d, e))?;
                }
            }
            std::fs::create_dir_all(&partial).map_err(|e| EnhanceError::io(&partial, e))?;
            build(&partial)?;
            let meta = json!({"stage": name, "key": key, "inputs": inputs});
            let meta_path = partial.join("stage.json");
            std::fs::write(&meta_path, serde_json::to_string_pretty(&meta).expect("json"))
                .map_err(|e| EnhanceError::io(&meta_path, e))?;
            std::fs::rename(&partial, &dir).map_err(|e| EnhanceError::io(&dir, e))?;
        }
        self.records.push(StageRecord {
            name: name.to_string(),
            key: key.clone(),
            cached,
            dir: dir.clone(),
        });
        Ok((dir, key))
    }

    /// Drops a stage whose outputs failed validation so the next run rebuilds it.
    fn invalidate(&self, dir: &Path) {
        let _ = std::fs::remove_dir_all(dir);
    }

    /// Backend `embed`; returns the embeddings, the corpus with the backend's
    /// tokens attached and the stage key. `model_key` identifies the model
    /// for caching (the model id, or the key of the stage that produced it).
    pub fn embed(
        &mut self,
        backend: &dyn Backend,
        model: &str,
        model_key: &str,
    ) -> Result<(EmbeddingMatrix, Corpus, String), EnhanceError> {
        let corpus_path = self.corpus_path.clone();
        let lock = self.lock()?;
        let (dir, key) = self.stage("embed", json!({"model": model_key}), |dir| {
            backend.embed(&corpus_path, model, &dir.join("embeddings.ctem"))
        })?;
        drop(lock);
        let out = dir.join("embeddings.ctem");
        let checked = (|| {
            let m = EmbeddingMatrix::read_ctem(&out)?;
            if m.n() != self.corpus.len() {
                return Err(EnhanceError::RowCount {
                    stage: "embed".into(),
                    got: m.n(),
                    expected: self.corpus.len(),
                });
            }
            let tokenized = attach_tokens(&self.corpus, &tokens_path(&out))?;
            Ok((m, tokenized))
        })();
        match checked {
            Ok((m, t)) => Ok((m, t, key)),
            Err(e) => {
                self.invalidate(&dir);
                Err(e)
            }
        }
    }

    /// Backend `attn`; profiles are checked against `tokenized` and carry its special-token mask.
    pub fn attn(
        &mut self,
        backend: &dyn Backend,
        model: &str,
        model_key: &str,
        tokenized: &Corpus,
    ) -> Result<Vec<BetaProfile>, EnhanceError> {
        let corpus_path = self.corpus_path.clone();
        let lock = self.lock()?;
        let (dir, _) = self.stage("attn", json!({"model": model_key}), |dir| {
            backend.attn(&corpus_path, model, &dir.join("beta.jsonl"))
        })?;
        drop(lock);
        let checked = (|| {
            let mut profiles = read_beta_profiles(&dir.join("beta.jsonl"))?;
            if profiles.len() != tokenized.len() {
                return Err(EnhanceError::RowCount {
                    stage: "attn".into(),
                    got: profiles.len(),
                    expected: tokenized.len(),
                });
            }
            for (p, d) in profiles.iter_mut().zip(&tokenized.documents) {
                p.align_with(d)?;
            }
            Ok(profiles)
        })();
        if checked.is_err() {
            self.invalidate(&dir);
        }
        checked
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelSummary {
    pub k: usize,
    pub labeled: usize,
    pub total: usize,
    pub coverage: f64,
}

/// Everything that determines an enhancement run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub corpus: PathBuf,
    pub fingerprint: String,
    pub backend: PathBuf,
    pub model: String,
    pub enhanced_model: PathBuf,
    pub finetune: FinetuneParams,
    pub umap: UmapParams,
    pub hdbscan: HdbscanParams,
    pub pseudo_labels: PseudoLabelSummary,
    pub stages: Vec<StageRecord>,
}

impl Provenance {
    pub fn write(&self, path: &Path) -> Result<(), EnhanceError> {
        let text = serde_json::to_string_pretty(self).expect("provenance serializes");
        std::fs::write(path, text + "\n").map_err(|e| EnhanceError::io(path, e))
    }

    pub fn all_cached(&self) -> bool {
        self.stages.iter().all(|s| s.cached)
    }
}

#[derive(Debug, Clone)]
pub struct Enhancement {
    /// Original-model embeddings, their UMAP layout and HDBSCAN clustering.
    pub original: EmbeddingMatrix,
    pub original_layout: EmbeddingMatrix,
    pub original_assignment: ClusterAssignment,
    pub pseudo_labels: PseudoLabelSet,
    /// Enhanced-model embeddings and attention profiles.
    pub embeddings: EmbeddingMatrix,
    pub profiles: Vec<BetaProfile>,
    /// The corpus with the enhanced model's tokens attached.
    pub corpus: Corpus,
    pub provenance: Provenance,
}

/// One round of the enhancement loop with the backend named by `spec`.
pub fn run_enhancement(
    corpus: &Corpus,
    spec: &BackendSpec,
    umap_params: &UmapParams,
    hdbscan_params: &HdbscanParams,
) -> Result<Enhancement, EnhanceError> {
    let backend = spec.connect();
    run_enhancement_with(corpus, backend.as_ref(), spec, umap_params, hdbscan_params)
}

/// [`run_enhancement`] with an explicit backend implementation.
pub fn run_enhancement_with(
    corpus: &Corpus,
    backend: &dyn Backend,
    spec: &BackendSpec,
    umap_params: &UmapParams,
    hdbscan_params: &HdbscanParams,
) -> Result<Enhancement, EnhanceError> {
    let mut ws = Workspace::open(&spec.workdir, corpus)?;
    {
        let _lock = ws.lock()?;
        backend.capabilities()?.check()?;
    }

    // Step 1: original representation.
    let (original, _, embed_key) = ws.embed(backend, &spec.model, &spec.model)?;

    // Step 2: dimensionality reduction.
    let (layout_dir, layout_key) = ws.stage(
        "umap",
        json!({"upstream": embed_key, "params": umap_params}),
        |dir| Ok(umap(&original, umap_params)?.write_ctem(&dir.join("layout.ctem"))?),
    )?;
    let original_layout = EmbeddingMatrix::read_ctem(&layout_dir.join("layout.ctem"))?;

    // Step 3: clustering and pseudo-label selection.
    let ids: Vec<&str> = corpus.ids().collect();
    let (cluster_dir, cluster_key) = ws.stage(
        "hdbscan",
        json!({"upstream": layout_key, "params": hdbscan_params}),
        |dir| {
            let (assignment, _) = hdbscan(&original_layout, hdbscan_params)?;
            assignment.write(&dir.join("assignment.jsonl"), &ids)?;
            select_pseudo_labels(corpus, &assignment)?.write(&dir.join("labels.jsonl"))
        },
    )?;
    let (read_ids, original_assignment) = read_assignment(&cluster_dir.join("assignment.jsonl"))?;
    if read_ids != ids {
        return Err(EnhanceError::Misaligned {
            got: read_ids.len(),
            expected: ids.len(),
        });
    }
    let pseudo_labels = select_pseudo_labels(corpus, &original_assignment)?;
    log::info!(
        "{} pseudo-labels in {} classes (coverage {:.3})",
        pseudo_labels.len(),
        pseudo_labels.k,
        pseudo_labels.coverage()
    );

    // Step 4: fine-tune, then re-embed with the enhanced model.
    let corpus_path = ws.corpus_path().to_path_buf();
    let labels_path = cluster_dir.join("labels.jsonl");
    let lock = ws.lock()?;
    let (tune_dir, tune_key) = ws.stage(
        "finetune",
        json!({"upstream": cluster_key, "model": spec.model, "finetune": spec.finetune}),
        |dir| {
            backend.finetune(&corpus_path, &labels_path, &spec.model, &spec.finetune, &dir.join("model"))
        },
    )?;
    drop(lock);
    let model_dir = tune_dir.join("model");
    let enhanced_model = model_dir.display().to_string();
    let (embeddings, tokenized, _) = ws.embed(backend, &enhanced_model, &tune_key)?;
    let profiles = ws.attn(backend, &enhanced_model, &tune_key, &tokenized)?;

    let provenance = Provenance {
        corpus: corpus.source.clone(),
        fingerprint: corpus.fingerprint.clone(),
        backend: spec.executable.clone(),
        model: spec.model.clone(),
        enhanced_model: model_dir,
        finetune: spec.finetune,
        umap: umap_params.clone(),
        hdbscan: *hdbscan_params,
        pseudo_labels: PseudoLabelSummary {
            k: pseudo_labels.k,
            labeled: pseudo_labels.len(),
            total: pseudo_labels.total,
            coverage: pseudo_labels.coverage(),
        },
        stages: ws.records().to_vec(),
    };
    provenance.write(&spec.workdir.join("provenance.json"))?;
    Ok(Enhancement {
        original,
        original_layout,
        original_assignment,
        pseudo_labels,
        embeddings,
        profiles,
        corpus: tokenized,
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enhance::backend::Capabilities;
    use crate::enhance::{planted_corpus, FixtureBackend, PlantedSpec, FIXTURE_BACKEND};
    use crate::metrics::{ari, silhouette};

    fn setup(dir: &Path) -> (crate::enhance::PlantedCorpus, BackendSpec) {
        let planted = planted_corpus(&PlantedSpec {
            classes: 3,
            docs_per_class: 30,
            ..Default::default()
        })
        .unwrap();
        let spec = BackendSpec::new(FIXTURE_BACKEND, planted.model_id(), dir);
        (planted, spec)
    }

    fn umap_params() -> UmapParams {
        UmapParams {
            n_neighbors: 10,
            n_epochs: Some(200),
            ..Default::default()
        }
    }

    #[test]
    fn fixture_loop_sharpens_and_caches() {
        let dir = tempfile::tempdir().unwrap();
        let (planted, spec) = setup(dir.path());
        let hp = HdbscanParams::new(10);
        let first = run_enhancement(&planted.corpus, &spec, &umap_params(), &hp).unwrap();
        assert!(first.provenance.stages.iter().all(|s| !s.cached));
        assert_eq!(first.embeddings.n(), planted.corpus.len());
        assert_eq!(first.profiles.len(), planted.corpus.len());
        let s_orig = silhouette(&first.original, &planted.truth).unwrap();
        let s_enh = silhouette(&first.embeddings, &planted.truth).unwrap();
        assert!(s_enh > s_orig);
        assert!(ari(&first.original_assignment.labels, &planted.truth).unwrap() > 0.5);
        assert!(dir.path().join("provenance.json").is_file());
        assert!(!dir.path().join(".backend.lock").exists());

        let second = run_enhancement(&planted.corpus, &spec, &umap_params(), &hp).unwrap();
        assert!(second.provenance.all_cached());
        assert_eq!(second.embeddings, first.embeddings);
        assert_eq!(second.original_layout, first.original_layout);
        let keys = |e: &Enhancement| e.provenance.stages.iter().map(|s| s.key.clone()).collect::<Vec<_>>();
        assert_eq!(keys(&first), keys(&second));

        // A parameter change reruns that stage and everything downstream only.
        let third = run_enhancement(&planted.corpus, &spec, &umap_params(), &HdbscanParams::new(12)).unwrap();
        let cached: Vec<bool> = third.provenance.stages.iter().map(|s| s.cached).collect();
        assert_eq!(cached, vec![true, true, false, false, false, false]);
    }

    struct ShortBackend;

    impl Backend for ShortBackend {
        fn capabilities(&self) -> Result<Capabilities, EnhanceError> {
            FixtureBackend.capabilities()
        }
        fn embed(&self, corpus: &Path, model: &str, out: &Path) -> Result<(), EnhanceError> {
            FixtureBackend.embed(corpus, model, out)?;
            let m = EmbeddingMatrix::read_ctem(out)?;
            let keep: Vec<usize> = (0..m.n() - 1).collect();
            m.select_rows(&keep).write_ctem(out)?;
            Ok(())
        }
        fn attn(&self, corpus: &Path, model: &str, out: &Path) -> Result<(), EnhanceError> {
            FixtureBackend.attn(corpus, model, out)
        }
        fn finetune(
            &self,
            corpus: &Path,
            labels: &Path,
            model: &str,
            params: &FinetuneParams,
            out: &Path,
        ) -> Result<(), EnhanceError> {
            FixtureBackend.finetune(corpus, labels, model, params, out)
        }
    }

    #[test]
    fn short_embedding_is_a_row_count_error() {
        let dir = tempfile::tempdir().unwrap();
        let (planted, spec) = setup(dir.path());
        let err = run_enhancement_with(&planted.corpus, &ShortBackend, &spec, &umap_params(), &HdbscanParams::new(10))
            .unwrap_err();
        assert!(
            matches!(err, EnhanceError::RowCount { ref stage, got, expected } if stage == "embed" && got + 1 == expected),
            "{err}"
        );
        // The bad stage is not left in the cache.
        let stages: Vec<_> = std::fs::read_dir(dir.path().join("stages")).unwrap().collect();
        assert!(stages.is_empty());
    }

    #[test]
    fn held_lock_blocks_backend() {
        let dir = tempfile::tempdir().unwrap();
        let (planted, spec) = setup(dir.path());
        let ws = Workspace::open(dir.path(), &planted.corpus).unwrap();
        let _held = ws.lock().unwrap();
        let err = run_enhancement(&planted.corpus, &spec, &umap_params(), &HdbscanParams::new(10)).unwrap_err();
        assert!(matches!(err, EnhanceError::Locked(_)));
    }
}
