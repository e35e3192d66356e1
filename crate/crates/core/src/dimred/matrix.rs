use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DimredError;

const MAGIC: &[u8; 4] = b"CTEM";
const VERSION: u32 = 1;

/// Which model stage produced an embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Original,
    Enhanced,
}

impl Stage {
    fn tag(self) -> u8 {
        match self {
            Stage::Original => 0,
            Stage::Enhanced => 1,
        }
    }

    fn from_tag(tag: u8) -> Result<Self, DimredError> {
        match tag {
            0 => Ok(Stage::Original),
            1 => Ok(Stage::Enhanced),
            t => Err(DimredError::Format(format!("unknown stage tag {t}"))),
        }
    }
}

/// Dense row-major `n × d` matrix of document vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n: usize,
    d: usize,
    values: Vec<f64>,
    pub stage: Stage,
}

impl EmbeddingMatrix {
    pub fn new(n: usize, d: usize, values: Vec<f64>, stage: Stage) -> Result<Self, DimredError> {
        if values.len() != n * d {
            return Err(DimredError::Shape(format!(
                "expected {n}x{d} = {} values, got {}",
                n * d,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(DimredError::NonFinite(format!(
                "entry ({}, {})",
                pos / d.max(1),
                pos % d.max(1)
            )));
        }
        Ok(EmbeddingMatrix {
            n,
            d,
            values,
            stage,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], stage: Stage) -> Result<Self, DimredError> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(DimredError::Shape("ragged rows".into()));
        }
        Self::new(rows.len(), d, rows.concat(), stage)
    }

    pub fn zeros(n: usize, d: usize, stage: Stage) -> Self {
        EmbeddingMatrix {
            n,
            d,
            values: vec![0.0; n * d],
            stage,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.d.max(1)).take(self.n)
    }

    /// Copy with rows reordered so that output row `i` is input row `order[i]`.
    pub fn select_rows(&self, order: &[usize]) -> Self {
        let mut values = Vec::with_capacity(order.len() * self.d);
        for &i in order {
            values.extend_from_slice(self.row(i));
        }
        EmbeddingMatrix {
            n: order.len(),
            d: self.d,
            values,
            stage: self.stage,
        }
    }

    pub fn write_ctem(&self, path: &Path) -> Result<(), DimredError> {
        let file = File::create(path).map_err(|e| DimredError::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut buf = Vec::with_capacity(25 + 4 * self.values.len());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.n as u64).to_le_bytes());
        buf.extend_from_slice(&(self.d as u64).to_le_bytes());
        buf.push(self.stage.tag());
        for v in &self.values {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        w.write_all(&buf).map_err(|e| DimredError::io(path, e))?;
        w.flush().map_err(|e| DimredError::io(path, e))
    }

    pub fn read_ctem(path: &Path) -> Result<Self, DimredError> {
        let file = File::open(path).map_err(|e| DimredError::io(path, e))?;
        let mut bytes = Vec::new();
        BufReader::new(file)
            .read_to_end(&mut bytes)
            .map_err(|e| DimredError::io(path, e))?;
        Self::decode_ctem(&bytes)
    }

    pub fn decode_ctem(bytes: &[u8]) -> Result<Self, DimredError> {
        if bytes.len() < 25 || &bytes[..4] != MAGIC {
            return Err(DimredError::Format("bad CTEM magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(DimredError::Format(format!(
                "unsupported CTEM version {version}"
            )));
        }
        let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let d = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
        let stage = Stage::from_tag(bytes[24])?;
        let body = &bytes[25..];
        let expected = n
            .checked_mul(d)
            .and_then(|c| c.checked_mul(4))
            .ok_or_else(|| DimredError::Format("CTEM size overflow".into()))?;
        if body.len() != expected {
            return Err(DimredError::Format(format!(
                "CTEM body has {} bytes, header implies {expected}",
                body.len()
            )));
        }
        let values = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Self::new(n, d, values, stage)
    }
}

pub(crate) fn sq_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    sq_euclidean(a, b).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(
            EmbeddingMatrix::new(1, 2, vec![0.0, f64::NAN], Stage::Original),
            Err(DimredError::NonFinite(_))
        ));
    }

    #[test]
    fn ctem_header_layout() {
        let m = EmbeddingMatrix::new(2, 1, vec![1.0, -2.5], Stage::Enhanced).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ctem");
        m.write_ctem(&p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"CTEM");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..16], &2u64.to_le_bytes());
        assert_eq!(&bytes[16..24], &1u64.to_le_bytes());
        assert_eq!(bytes[24], 1);
        assert_eq!(&bytes[25..29], &1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 25 + 8);
    }

    #[test]
    fn ctem_rejects_bad_magic_and_version() {
        let mut bytes = b"CTEX".to_vec();
        bytes.extend_from_slice(&[0; 21]);
        assert!(EmbeddingMatrix::decode_ctem(&bytes).is_err());
        let mut bytes = b"CTEM".to_vec();
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&[0; 17]);
        assert!(matches!(
            EmbeddingMatrix::decode_ctem(&bytes),
            Err(DimredError::Format(m)) if m.contains("version")
        ));
    }

    proptest! {
        #[test]
        fn ctem_roundtrip_f32(rows in 1usize..6, cols in 1usize..5, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let vals: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1e3f32..1e3) as f64).collect();
            let m = EmbeddingMatrix::new(rows, cols, vals, Stage::Original).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("m.ctem");
            m.write_ctem(&p).unwrap();
            prop_assert_eq!(EmbeddingMatrix::read_ctem(&p).unwrap(), m);
        }
    }
}
