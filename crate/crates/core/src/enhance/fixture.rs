//! Deterministic stand-in for a language-model backend.
//!
//! Every document belongs to a hidden class named by the first marker word
//! it contains. Embeddings are the class centroid plus isotropic Gaussian
//! noise: large for the original model (classes overlap), small for the
//! fine-tuned one. Attention column sums are uniform except in one peaked
//! layer, where every token sends 0.9 of its attention to the marker's
//! first token. Documents without a marker get uniform attention and the
//! centroid of the empty class.
//!
//! Model ids are `fixture:<seed>:<marker>,<marker>,...`; `finetune` writes a
//! directory holding `fixture-model.json` that serves as the enhanced model id.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::backend::{tokens_path, Backend, Capabilities, FinetuneParams, PROTOCOL_VERSION};
use super::EnhanceError;
use crate::cluster::read_labels;
use crate::corpus::{load_corpus, write_token_file, Corpus, Document, Token, TokenRecord};
use crate::dimred::{EmbeddingMatrix, Stage};
use crate::topics::{compute_beta, write_beta_profiles, AttentionMatrix, BetaProfile};

pub const FIXTURE_DIM: usize = 32;
pub const FIXTURE_LAYERS: usize = 4;
pub const PEAKED_LAYER: usize = 2;
pub const PEAK_MASS: f64 = 0.9;
/// Per-coordinate noise relative to the unit-variance class centroids.
pub const ORIGINAL_NOISE: f64 = 0.9;
pub const ENHANCED_NOISE: f64 = 0.08;

const MODEL_FILE: &str = "fixture-model.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureModel {
    pub seed: u64,
    pub markers: Vec<String>,
    pub mode: Stage,
    /// Number of pseudo-label classes the model was fine-tuned on.
    #[serde(default)]
    pub finetuned_on: Option<usize>,
}

fn hash_u64(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

fn is_ascii_word(w: &str) -> bool {
    w.is_ascii()
}

impl FixtureModel {
    pub fn original(seed: u64, markers: Vec<String>) -> Self {
        FixtureModel {
            seed,
            markers,
            mode: Stage::Original,
            finetuned_on: None,
        }
    }

    pub fn id(&self) -> String {
        format!("fixture:{}:{}", self.seed, self.markers.join(","))
    }

    /// Parses a `fixture:` id or loads a fine-tuned model directory.
    pub fn resolve(model: &str) -> Result<Self, EnhanceError> {
        if let Some(rest) = model.strip_prefix("fixture:") {
            let (seed, markers) = rest
                .split_once(':')
                .ok_or_else(|| EnhanceError::Fixture(format!("model id `{model}` lacks markers")))?;
            let seed = seed
                .parse()
                .map_err(|_| EnhanceError::Fixture(format!("bad seed in `{model}`")))?;
            let markers: Vec<String> = markers
                .split(',')
                .filter(|m| !m.is_empty())
                .map(str::to_string)
                .collect();
            if markers.is_empty() {
                return Err(EnhanceError::Fixture(format!("model id `{model}` lists no markers")));
            }
            return Ok(Self::original(seed, markers));
        }
        let path = Path::new(model).join(MODEL_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| EnhanceError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| EnhanceError::Format {
            path,
            message: e.to_string(),
        })
    }

    /// Index of the first word of `doc` that is a marker.
    pub fn marker_word(&self, doc: &Document) -> Option<usize> {
        let markers: HashSet<&str> = self.markers.iter().map(String::as_str).collect();
        doc.word_strings().iter().position(|w| markers.contains(w.as_str()))
    }

    fn centroid(&self, marker: &str) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(hash_u64(&[b"centroid", marker.as_bytes()]));
        let normal = Normal::new(0.0, 1.0).expect("valid normal");
        (0..FIXTURE_DIM).map(|_| normal.sample(&mut rng)).collect()
    }

    fn noise_scale(&self) -> f64 {
        match self.mode {
            Stage::Original => ORIGINAL_NOISE,
            Stage::Enhanced => ENHANCED_NOISE,
        }
    }

    pub fn embed(&self, corpus: &Corpus) -> EmbeddingMatrix {
        let mode = [self.mode as u8];
        let normal = Normal::new(0.0, self.noise_scale()).expect("valid normal");
        let rows: Vec<Vec<f64>> = corpus
            .documents
            .iter()
            .map(|doc| {
                let marker = self
                    .marker_word(doc)
                    .and_then(|w| doc.word(w))
                    .unwrap_or_default();
                let mut rng = ChaCha8Rng::seed_from_u64(hash_u64(&[
                    &self.seed.to_le_bytes(),
                    &mode,
                    doc.id.as_bytes(),
                ]));
                self.centroid(&marker)
                    .into_iter()
                    .map(|c| c + normal.sample(&mut rng))
                    .collect()
            })
            .collect();
        EmbeddingMatrix::from_rows(&rows, self.mode).expect("finite fixture embeddings")
    }

    /// `[CLS]`, one token per ASCII word or per character otherwise, `[SEP]`.
    pub fn tokenize(doc: &Document) -> Vec<Token> {
        let special = |piece: &str| Token {
            piece: piece.into(),
            start: 0,
            end: 0,
            special: true,
        };
        let mut tokens = vec![special("[CLS]")];
        for w in &doc.words {
            let text = doc.slice(*w);
            if is_ascii_word(&text) {
                tokens.push(Token {
                    piece: text,
                    start: w.start,
                    end: w.end,
                    special: false,
                });
            } else {
                for (i, c) in text.chars().enumerate() {
                    tokens.push(Token {
                        piece: c.to_string(),
                        start: w.start + i,
                        end: w.start + i + 1,
                        special: false,
                    });
                }
            }
        }
        tokens.push(special("[SEP]"));
        tokens
    }

    /// Index of the marker's first token in [`FixtureModel::tokenize`] output.
    pub fn marker_token(&self, doc: &Document, tokens: &[Token]) -> Option<usize> {
        let w = doc.words[self.marker_word(doc)?];
        tokens.iter().position(|t| !t.special && t.start == w.start)
    }

    pub fn profile(&self, doc: &Document) -> Result<BetaProfile, EnhanceError> {
        let tokens = Self::tokenize(doc);
        let n = tokens.len();
        let target = self.marker_token(doc, &tokens);
        let uniform = vec![1.0 / n as f64; n * n];
        let uniform_beta = compute_beta(&AttentionMatrix::new(n, uniform)?)?;
        let mut beta = vec![uniform_beta; FIXTURE_LAYERS];
        if let Some(m) = target {
            let rest = (1.0 - PEAK_MASS) / (n - 1) as f64;
            let mut alpha = vec![rest; n * n];
            for i in 0..n {
                alpha[i * n + m] = PEAK_MASS;
            }
            beta[PEAKED_LAYER] = compute_beta(&AttentionMatrix::new(n, alpha)?)?;
        }
        Ok(BetaProfile::new(doc.id.clone(), beta)?)
    }
}

/// In-process implementation of the backend protocol over [`FixtureModel`].
#[derive(Debug, Clone, Copy, Default)]
pub struct FixtureBackend;

impl Backend for FixtureBackend {
    fn capabilities(&self) -> Result<Capabilities, EnhanceError> {
        Ok(Capabilities {
            protocol: PROTOCOL_VERSION,
            ops: vec!["embed".into(), "attn".into(), "finetune".into()],
        })
    }

    fn embed(&self, corpus: &Path, model: &str, out: &Path) -> Result<(), EnhanceError> {
        let model = FixtureModel::resolve(model)?;
        let corpus = load_corpus(corpus)?;
        model.embed(&corpus).write_ctem(out)?;
        let records: Vec<TokenRecord> = corpus
            .documents
            .iter()
            .map(|d| TokenRecord {
                id: d.id.clone(),
                tokens: FixtureModel::tokenize(d),
            })
            .collect();
        write_token_file(&tokens_path(out), &records)?;
        Ok(())
    }

    fn attn(&self, corpus: &Path, model: &str, out: &Path) -> Result<(), EnhanceError> {
        let model = FixtureModel::resolve(model)?;
        let corpus = load_corpus(corpus)?;
        let profiles = corpus
            .documents
            .iter()
            .map(|d| model.profile(d))
            .collect::<Result<Vec<_>, _>>()?;
        write_beta_profiles(out, &profiles)?;
        Ok(())
    }

    fn finetune(
        &self,
        corpus: &Path,
        labels: &Path,
        model: &str,
        _params: &FinetuneParams,
        out_model: &Path,
    ) -> Result<(), EnhanceError> {
        let base = FixtureModel::resolve(model)?;
        let corpus = load_corpus(corpus)?;
        let ids: HashSet<&str> = corpus.ids().collect();
        let records = read_labels(labels)?;
        if let Some(r) = records.iter().find(|r| !ids.contains(r.id.as_str())) {
            return Err(EnhanceError::Fixture(format!("label for unknown document `{}`", r.id)));
        }
        let classes: HashSet<i64> = records.iter().map(|r| r.label).collect();
        if classes.len() < 2 {
            return Err(EnhanceError::Fixture(format!(
                "fine-tuning needs at least 2 classes, got {}",
                classes.len()
            )));
        }
        std::fs::create_dir_all(out_model).map_err(|e| EnhanceError::io(out_model, e))?;
        let tuned = FixtureModel {
            mode: Stage::Enhanced,
            finetuned_on: Some(classes.len()),
            ..base
        };
        let path = out_model.join(MODEL_FILE);
        let text = serde_json::to_string_pretty(&tuned).expect("model serializes");
        std::fs::write(&path, text).map_err(|e| EnhanceError::io(&path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedSpec {
    pub classes: usize,
    pub docs_per_class: usize,
    /// Filler words per document; the marker is inserted at a random position.
    pub filler_words: usize,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec {
            classes: 3,
            docs_per_class: 40,
            filler_words: 7,
            seed: 7,
        }
    }
}

/// Synthetic corpus whose classes are identified by one marker word each.
#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub corpus: Corpus,
    /// Planted class per document.
    pub truth: Vec<i64>,
    pub markers: Vec<String>,
    pub seed: u64,
}

impl PlantedCorpus {
    /// Original-mode fixture model id for this corpus.
    pub fn model_id(&self) -> String {
        FixtureModel::original(self.seed, self.markers.clone()).id()
    }

    /// Writes the planted classes as an `{"id", "label"}` JSONL file.
    pub fn write_truth(&self, path: &Path) -> Result<(), EnhanceError> {
        let mut text = String::new();
        for (id, label) in self.corpus.ids().zip(&self.truth) {
            text.push_str(&serde_json::json!({"id": id, "label": label}).to_string());
            text.push('\n');
        }
        std::fs::write(path, text).map_err(|e| EnhanceError::io(path, e))
    }
}

const MARKERS: [&str; 12] = [
    "harbor", "glacier", "orchard", "reactor", "violin", "meteor", "prairie", "lantern", "canyon",
    "falcon", "quartz", "tundra",
];

const FILLER: [&str; 32] = [
    "the", "a", "city", "report", "said", "new", "people", "year", "local", "news", "today",
    "about", "many", "after", "during", "week", "public", "office", "service", "group", "plan",
    "issue", "area", "team", "work", "time", "part", "day", "case", "point", "world", "number",
];

/// Builds a shuffled corpus of `classes × docs_per_class` documents.
pub fn planted_corpus(spec: &PlantedSpec) -> Result<PlantedCorpus, EnhanceError> {
    if spec.classes == 0 || spec.docs_per_class == 0 {
        return Err(EnhanceError::Fixture("planted corpus needs classes and documents".into()));
    }
    let markers: Vec<String> = (0..spec.classes)
        .map(|c| MARKERS.get(c).map_or_else(|| format!("marker{c}"), |m| m.to_string()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut classes: Vec<usize> = (0..spec.classes)
        .flat_map(|c| std::iter::repeat_n(c, spec.docs_per_class))
        .collect();
    classes.shuffle(&mut rng);
    let mut docs = Vec::with_capacity(classes.len());
    for (i, &c) in classes.iter().enumerate() {
        let mut words: Vec<&str> = (0..spec.filler_words)
            .map(|_| FILLER[rng.gen_range(0..FILLER.len())])
            .collect();
        let at = rng.gen_range(0..=words.len());
        words.insert(at, &markers[c]);
        docs.push(Document::new(format!("doc{i:04}"), words.join(" "), None)?);
    }
    Ok(PlantedCorpus {
        corpus: Corpus::from_documents(docs, "planted")?,
        truth: classes.into_iter().map(|c| c as i64).collect(),
        markers,
        seed: spec.seed,
    })
}
