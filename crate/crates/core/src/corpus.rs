//! Document ingestion: texts, segmented word spans and backend token spans.
//!
//! All spans count unicode scalar values, not bytes. Word segmentation is an
//! input column; when a record carries no `words` field the text is split on
//! whitespace.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("duplicate document id `{0}`")]
    DuplicateId(String),
    #[error("document `{id}`: word spans overlap or are out of order at word {index}")]
    OverlappingWords { id: String, index: usize },
    #[error("document `{id}`: word span {index} lies outside the text (length {len})")]
    WordOutOfRange { id: String, index: usize, len: usize },
    #[error("document `{0}` has no entry in the token file")]
    MissingTokens(String),
    #[error("document `{id}`: token {index} span ({start},{end}) invalid for text of length {len}")]
    TokenOutOfRange {
        id: String,
        index: usize,
        start: usize,
        end: usize,
        len: usize,
    },
}

impl CorpusError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Half-open `[start, end)` range of code points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }
}

impl From<(usize, usize)> for Span {
    fn from((start, end): (usize, usize)) -> Self {
        Span { start, end }
    }
}

impl From<Span> for (usize, usize) {
    fn from(s: Span) -> Self {
        (s.start, s.end)
    }
}

/// One piece of the backend tokenizer's output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub piece: String,
    pub start: usize,
    pub end: usize,
    #[serde(default)]
    pub special: bool,
}

impl Token {
    pub fn span(&self) -> Span {
        Span::new(self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub words: Vec<Span>,
    pub tokens: Vec<Token>,
}

impl Document {
    /// Builds a validated document. `words = None` falls back to whitespace splitting.
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        words: Option<Vec<Span>>,
    ) -> Result<Self, CorpusError> {
        let id = id.into();
        let text = text.into();
        let words = match words {
            Some(w) => w,
            None => whitespace_spans(&text),
        };
        let doc = Document {
            id,
            text,
            words,
            tokens: Vec::new(),
        };
        doc.validate_words()?;
        Ok(doc)
    }

    /// Length of the text in code points.
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    pub fn slice(&self, span: Span) -> String {
        self.text
            .chars()
            .skip(span.start)
            .take(span.end.saturating_sub(span.start))
            .collect()
    }

    pub fn word(&self, index: usize) -> Option<String> {
        self.words.get(index).map(|s| self.slice(*s))
    }

    /// All segmented words of the document, in order.
    pub fn word_strings(&self) -> Vec<String> {
        let chars: Vec<char> = self.text.chars().collect();
        self.words
            .iter()
            .map(|s| chars[s.start..s.end].iter().collect())
            .collect()
    }

    /// Index of the word whose span contains `span`, if any.
    pub fn word_containing(&self, span: Span) -> Option<usize> {
        if span.is_empty() {
            return None;
        }
        // Word spans are sorted and disjoint: the only candidate is the last
        // word starting at or before `span.start`.
        let idx = self.words.partition_point(|w| w.start <= span.start);
        let candidate = idx.checked_sub(1)?;
        self.words[candidate].contains(&span).then_some(candidate)
    }

    fn validate_words(&self) -> Result<(), CorpusError> {
        let len = self.char_len();
        let mut prev_end = 0usize;
        for (index, w) in self.words.iter().enumerate() {
            if w.end > len {
                return Err(CorpusError::WordOutOfRange {
                    id: self.id.clone(),
                    index,
                    len,
                });
            }
            if w.start >= w.end || (index > 0 && w.start < prev_end) {
                return Err(CorpusError::OverlappingWords {
                    id: self.id.clone(),
                    index,
                });
            }
            prev_end = w.end;
        }
        Ok(())
    }

    fn set_tokens(&mut self, tokens: Vec<Token>) -> Result<(), CorpusError> {
        let len = self.char_len();
        for (index, t) in tokens.iter().enumerate() {
            let ok = if t.special {
                t.start == 0 && t.end == 0
            } else {
                t.start < t.end && t.end <= len
            };
            if !ok {
                return Err(CorpusError::TokenOutOfRange {
                    id: self.id.clone(),
                    index,
                    start: t.start,
                    end: t.end,
                    len,
                });
            }
        }
        self.tokens = tokens;
        Ok(())
    }
}

/// Whitespace-delimited word spans in code points.
pub fn whitespace_spans(text: &str) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut start = None;
    let mut n = 0;
    for (i, c) in text.chars().enumerate() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                spans.push(Span::new(s, i));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
        n = i + 1;
    }
    if let Some(s) = start {
        spans.push(Span::new(s, n));
    }
    spans
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub source: PathBuf,
    pub fingerprint: String,
}

#[derive(Serialize, Deserialize)]
struct DocumentRecord {
    id: String,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    words: Option<Vec<Span>>,
}

/// One line of a token file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenRecord {
    pub id: String,
    pub tokens: Vec<Token>,
}

impl Corpus {
    /// Builds a corpus from in-memory documents, checking id uniqueness.
    pub fn from_documents(
        documents: Vec<Document>,
        source: impl Into<PathBuf>,
    ) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for d in &documents {
            if !seen.insert(d.id.as_str()) {
                return Err(CorpusError::DuplicateId(d.id.clone()));
            }
        }
        let fingerprint = fingerprint(&documents);
        Ok(Corpus {
            documents,
            source: source.into(),
            fingerprint,
        })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.documents.iter().map(|d| d.id.as_str())
    }

    pub fn index_of(&self) -> HashMap<&str, usize> {
        self.ids().enumerate().map(|(i, id)| (id, i)).collect()
    }

    /// Writes the corpus as JSONL, always including explicit word spans.
    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
        let mut w = BufWriter::new(file);
        for d in &self.documents {
            let rec = DocumentRecord {
                id: d.id.clone(),
                text: d.text.clone(),
                words: Some(d.words.clone()),
            };
            let line = serde_json::to_string(&rec).expect("record serializes");
            writeln!(w, "{line}").map_err(|e| CorpusError::io(path, e))?;
        }
        w.flush().map_err(|e| CorpusError::io(path, e))
    }

    /// Writes the attached tokens in the token-file schema.
    pub fn save_tokens(&self, path: &Path) -> Result<(), CorpusError> {
        let records: Vec<TokenRecord> = self
            .documents
            .iter()
            .map(|d| TokenRecord {
                id: d.id.clone(),
                tokens: d.tokens.clone(),
            })
            .collect();
        write_token_file(path, &records)
    }
}

/// Reads a corpus JSONL file.
pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut documents = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DocumentRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: e.to_string(),
            })?;
        documents.push(Document::new(rec.id, rec.text, rec.words)?);
    }
    Corpus::from_documents(documents, path)
}

pub fn read_token_file(path: &Path) -> Result<Vec<TokenRecord>, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(out)
}

pub fn write_token_file(path: &Path, records: &[TokenRecord]) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("record serializes");
        writeln!(w, "{line}").map_err(|e| CorpusError::io(path, e))?;
    }
    w.flush().map_err(|e| CorpusError::io(path, e))
}

/// Returns a copy of `corpus` with tokens from `token_file` attached.
pub fn attach_tokens(corpus: &Corpus, token_file: &Path) -> Result<Corpus, CorpusError> {
    let records = read_token_file(token_file)?;
    attach_token_records(corpus, records)
}

pub fn attach_token_records(
    corpus: &Corpus,
    records: Vec<TokenRecord>,
) -> Result<Corpus, CorpusError> {
    let mut by_id: HashMap<String, Vec<Token>> =
        records.into_iter().map(|r| (r.id, r.tokens)).collect();
    let mut out = corpus.clone();
    for doc in &mut out.documents {
        let tokens = by_id
            .remove(&doc.id)
            .ok_or_else(|| CorpusError::MissingTokens(doc.id.clone()))?;
        doc.set_tokens(tokens)?;
    }
    Ok(out)
}

fn fingerprint(documents: &[Document]) -> String {
    let mut h = Sha256::new();
    for d in documents {
        h.update(d.id.as_bytes());
        h.update([0u8]);
        h.update(d.text.as_bytes());
        h.update([0u8]);
        for w in &d.words {
            h.update((w.start as u64).to_le_bytes());
            h.update((w.end as u64).to_le_bytes());
        }
        h.update([0xffu8]);
    }
    hex::encode(&h.finalize()[..16])
}
