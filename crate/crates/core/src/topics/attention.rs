use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TopicsError;
use crate::corpus::Document;

const ROW_SUM_TOLERANCE: f64 = 1e-3;

/// Head-averaged attention of one layer for one sentence: row `i` holds the
/// weights token `i` assigns to every token.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMatrix {
    n: usize,
    values: Vec<f64>,
}

impl AttentionMatrix {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self, TopicsError> {
        if values.len() != n * n {
            return Err(TopicsError::Shape(format!(
                "attention of {n} tokens needs {} entries, got {}",
                n * n,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(TopicsError::Shape(
                "attention weights must be finite and non-negative".into(),
            ));
        }
        Ok(AttentionMatrix { n, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, TopicsError> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(TopicsError::Shape("attention matrix must be square".into()));
        }
        Self::new(n, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    fn check_row_stochastic(&self, tolerance: f64) -> Result<(), TopicsError> {
        for i in 0..self.n {
            let sum: f64 = self.row(i).iter().sum();
            if (sum - 1.0).abs() > tolerance {
                return Err(TopicsError::NotRowStochastic { row: i, sum });
            }
        }
        Ok(())
    }
}

/// Attention received by each token: the column sums of `alpha`.
pub fn compute_beta(alpha: &AttentionMatrix) -> Result<Vec<f64>, TopicsError> {
    alpha.check_row_stochastic(ROW_SUM_TOLERANCE)?;
    let n = alpha.n();
    let mut beta = vec![0.0; n];
    for i in 0..n {
        for (b, a) in beta.iter_mut().zip(alpha.row(i)) {
            *b += a;
        }
    }
    Ok(beta)
}

/// Attention-weighted token representations `e_i = sum_j alpha_ij v_j` and
/// their mean `e`.
pub fn aggregate_token_values(
    alpha: &AttentionMatrix,
    values: &[Vec<f64>],
) -> Result<(Vec<Vec<f64>>, Vec<f64>), TopicsError> {
    let n = alpha.n();
    if values.len() != n {
        return Err(TopicsError::Shape(format!(
            "{} value vectors for {n} tokens",
            values.len()
        )));
    }
    let d = values.first().map_or(0, Vec::len);
    if values.iter().any(|v| v.len() != d) {
        return Err(TopicsError::Shape("value vectors differ in length".into()));
    }
    let per_token: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut e = vec![0.0; d];
            for (a, v) in alpha.row(i).iter().zip(values) {
                for (acc, x) in e.iter_mut().zip(v) {
                    *acc += a * x;
                }
            }
            e
        })
        .collect();
    let mut sentence = vec![0.0; d];
    for e in &per_token {
        for (acc, x) in sentence.iter_mut().zip(e) {
            *acc += x;
        }
    }
    if n > 0 {
        sentence.iter_mut().for_each(|x| *x /= n as f64);
    }
    Ok((per_token, sentence))
}

/// `(1/n) sum_j beta_j v_j`, the same sentence vector reached through the column sums.
pub fn beta_weighted_mean(beta: &[f64], values: &[Vec<f64>]) -> Result<Vec<f64>, TopicsError> {
    if beta.len() != values.len() {
        return Err(TopicsError::Shape(format!(
            "{} weights for {} value vectors",
            beta.len(),
            values.len()
        )));
    }
    let d = values.first().map_or(0, Vec::len);
    let mut out = vec![0.0; d];
    for (b, v) in beta.iter().zip(values) {
        for (acc, x) in out.iter_mut().zip(v) {
            *acc += b * x;
        }
    }
    let n = beta.len().max(1) as f64;
    out.iter_mut().for_each(|x| *x /= n);
    Ok(out)
}

/// Per-layer attention column sums for one document.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaProfile {
    pub id: String,
    /// `layers × tokens`.
    pub beta: Vec<Vec<f64>>,
    /// Special-token mask aligned with `beta` columns; empty means none special.
    pub special: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct BetaRecord {
    id: String,
    layers: usize,
    beta: Vec<Vec<f64>>,
}

impl BetaProfile {
    pub fn new(id: impl Into<String>, beta: Vec<Vec<f64>>) -> Result<Self, TopicsError> {
        let p = BetaProfile {
            id: id.into(),
            beta,
            special: Vec::new(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn layers(&self) -> usize {
        self.beta.len()
    }

    pub fn tokens(&self) -> usize {
        self.beta.first().map_or(0, Vec::len)
    }

    pub fn is_special(&self, token: usize) -> bool {
        self.special.get(token).copied().unwrap_or(false)
    }

    /// Each layer must cover the same tokens and sum to the token count.
    pub fn validate(&self) -> Result<(), TopicsError> {
        let n = self.tokens();
        for (layer, row) in self.beta.iter().enumerate() {
            if row.len() != n {
                return Err(TopicsError::Shape(format!(
                    "profile `{}` layer {layer} has {} tokens, expected {n}",
                    self.id,
                    row.len()
                )));
            }
            let sum: f64 = row.iter().sum();
            if row.iter().any(|b| !b.is_finite() || *b < 0.0)
                || (sum - n as f64).abs() > ROW_SUM_TOLERANCE
            {
                return Err(TopicsError::BetaSum {
                    id: self.id.clone(),
                    layer,
                    sum,
                    tokens: n,
                });
            }
        }
        Ok(())
    }

    /// Takes the special-token mask from `doc`, whose tokens must align with the columns.
    pub fn align_with(&mut self, doc: &Document) -> Result<(), TopicsError> {
        if doc.id != self.id {
            return Err(TopicsError::Misaligned(format!(
                "profile `{}` paired with document `{}`",
                self.id, doc.id
            )));
        }
        if !self.beta.is_empty() && doc.tokens.len() != self.tokens() {
            return Err(TopicsError::Misaligned(format!(
                "profile `{}` has {} tokens but the document has {}",
                self.id,
                self.tokens(),
                doc.tokens.len()
            )));
        }
        self.special = doc.tokens.iter().map(|t| t.special).collect();
        Ok(())
    }
}

pub fn read_beta_profiles(path: &Path) -> Result<Vec<BetaProfile>, TopicsError> {
    let file = File::open(path).map_err(|e| TopicsError::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| TopicsError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: BetaRecord = serde_json::from_str(&line).map_err(|e| TopicsError::Format {
            path: path.to_path_buf(),
            message: format!("line {}: {e}", lineno + 1),
        })?;
        if rec.layers != rec.beta.len() {
            return Err(TopicsError::Format {
                path: path.to_path_buf(),
                message: format!(
                    "line {}: `layers` = {} but {} rows given",
                    lineno + 1,
                    rec.layers,
                    rec.beta.len()
                ),
            });
        }
        out.push(BetaProfile::new(rec.id, rec.beta)?);
    }
    Ok(out)
}

pub fn write_beta_profiles(path: &Path, profiles: &[BetaProfile]) -> Result<(), TopicsError> {
    let file = File::create(path).map_err(|e| TopicsError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in profiles {
        let rec = BetaRecord {
            id: p.id.clone(),
            layers: p.layers(),
            beta: p.beta.clone(),
        };
        let line = serde_json::to_string(&rec).expect("record serializes");
        writeln!(w, "{line}").map_err(|e| TopicsError::io(path, e))?;
    }
    w.flush().map_err(|e| TopicsError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_beta() {
        let a = AttentionMatrix::new(4, vec![0.25; 16]).unwrap();
        assert_eq!(compute_beta(&a).unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn two_by_two_beta() {
        let a = AttentionMatrix::from_rows(&[vec![0.1, 0.9], vec![0.2, 0.8]]).unwrap();
        let b = compute_beta(&a).unwrap();
        assert!((b[0] - 0.3).abs() < 1e-15 && (b[1] - 1.7).abs() < 1e-15);
    }

    #[test]
    fn corrupt_rows_rejected() {
        let a = AttentionMatrix::from_rows(&[vec![0.5, 0.49], vec![0.5, 0.5]]).unwrap();
        assert!(matches!(compute_beta(&a), Err(TopicsError::NotRowStochastic { row: 0, .. })));
        assert!(AttentionMatrix::new(2, vec![0.5; 3]).is_err());
        assert!(AttentionMatrix::new(1, vec![-1.0]).is_err());
    }

    #[test]
    fn identity_attention_aggregates_to_values() {
        let v = vec![vec![1.0, 2.0], vec![3.0, -1.0], vec![0.0, 5.0]];
        let mut eye = vec![0.0; 9];
        for i in 0..3 {
            eye[i * 3 + i] = 1.0;
        }
        let (e, s) = aggregate_token_values(&AttentionMatrix::new(3, eye).unwrap(), &v).unwrap();
        assert_eq!(e, v);
        assert!((s[0] - 4.0 / 3.0).abs() < 1e-15 && (s[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_attention_gives_mean_everywhere() {
        let v = vec![vec![1.0], vec![2.0], vec![6.0]];
        let (e, s) =
            aggregate_token_values(&AttentionMatrix::new(3, vec![1.0 / 3.0; 9]).unwrap(), &v)
                .unwrap();
        for row in e {
            assert!((row[0] - 3.0).abs() < 1e-12);
        }
        assert!((s[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch() {
        let a = AttentionMatrix::new(2, vec![0.5; 4]).unwrap();
        assert!(aggregate_token_values(&a, &[vec![1.0]]).is_err());
    }

    #[test]
    fn profile_validation_and_io() {
        assert!(BetaProfile::new("x", vec![vec![1.0, 1.5]]).is_err());
        let p = BetaProfile::new("x", vec![vec![1.0, 1.0], vec![0.5, 1.5]]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.jsonl");
        write_beta_profiles(&path, std::slice::from_ref(&p)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(r#"{"id":"x","layers":2,"beta":[[1.0,1.0],[0.5,1.5]]}"#));
        assert_eq!(read_beta_profiles(&path).unwrap(), vec![p]);
    }
}
