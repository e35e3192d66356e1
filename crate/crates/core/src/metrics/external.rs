use serde::{Deserialize, Serialize};

use super::{check_lengths, ContingencyTable, MetricsError};

fn comb2(x: u64) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index; two trivial labelings score 1 by convention.
pub fn ari(a: &[i64], b: &[i64]) -> Result<f64, MetricsError> {
    check_lengths(a, b)?;
    if a.len() < 2 {
        return Err(MetricsError::TooFewItems {
            needed: 2,
            got: a.len(),
        });
    }
    let t = ContingencyTable::new(a, b)?;
    let index: f64 = t.nonzero().map(|(_, _, c)| comb2(c)).sum();
    let sum_a: f64 = t.row_sums.iter().map(|&c| comb2(c)).sum();
    let sum_b: f64 = t.col_sums.iter().map(|&c| comb2(c)).sum();
    let expected = sum_a * sum_b / comb2(t.total);
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MiVariant {
    Nmi,
    Ami,
}

fn entropy(counts: &[u64], total: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum()
}

fn mutual_info(t: &ContingencyTable) -> f64 {
    let n = t.total as f64;
    t.nonzero()
        .map(|(i, j, c)| {
            let c = c as f64;
            let outer = t.row_sums[i] as f64 * t.col_sums[j] as f64;
            (c / n) * (n * c / outer).ln()
        })
        .sum::<f64>()
        .max(0.0)
}

fn ln_factorials(n: u64) -> Vec<f64> {
    let mut table = Vec::with_capacity(n as usize + 1);
    table.push(0.0);
    let mut acc = 0.0f64;
    for k in 1..=n {
        acc += (k as f64).ln();
        table.push(acc);
    }
    table
}

/// Expected mutual information under the hypergeometric permutation model.
pub fn expected_mutual_info(t: &ContingencyTable) -> f64 {
    let n = t.total;
    let nf = n as f64;
    let lf = ln_factorials(n);
    let mut emi = 0.0;
    for &ai in &t.row_sums {
        for &bj in &t.col_sums {
            let lo = (ai + bj).saturating_sub(n).max(1);
            let hi = ai.min(bj);
            let fixed = lf[ai as usize] + lf[bj as usize] + lf[(n - ai) as usize]
                + lf[(n - bj) as usize]
                - lf[n as usize];
            for nij in lo..=hi {
                let x = nij as f64;
                let term = (x / nf) * (nf * x / (ai as f64 * bj as f64)).ln();
                let log_p = fixed
                    - lf[nij as usize]
                    - lf[(ai - nij) as usize]
                    - lf[(bj - nij) as usize]
                    - lf[(n + nij - ai - bj) as usize];
                emi += term * log_p.exp();
            }
        }
    }
    emi
}

/// Normalised or adjusted mutual information (natural logs, arithmetic-mean normaliser).
pub fn mutual_info_family(a: &[i64], b: &[i64], variant: MiVariant) -> Result<f64, MetricsError> {
    check_lengths(a, b)?;
    if a.is_empty() {
        return Err(MetricsError::TooFewItems { needed: 1, got: 0 });
    }
    let t = ContingencyTable::new(a, b)?;
    let n = t.total as f64;
    let mean_h = 0.5 * (entropy(&t.row_sums, n) + entropy(&t.col_sums, n));
    let mi = mutual_info(&t);
    let degenerate = || if t.is_bijective() { 1.0 } else { 0.0 };
    match variant {
        MiVariant::Nmi => {
            if mean_h <= 0.0 {
                return Ok(degenerate());
            }
            Ok((mi / mean_h).min(1.0))
        }
        MiVariant::Ami => {
            let emi = expected_mutual_info(&t);
            let denom = mean_h - emi;
            if denom.abs() < 1e-15 {
                return Ok(degenerate());
            }
            Ok((mi - emi) / denom)
        }
    }
}

pub fn nmi(a: &[i64], b: &[i64]) -> Result<f64, MetricsError> {
    mutual_info_family(a, b, MiVariant::Nmi)
}

pub fn adjusted_mutual_info(a: &[i64], b: &[i64]) -> Result<f64, MetricsError> {
    mutual_info_family(a, b, MiVariant::Ami)
}

/// Fraction of items that fall in their cluster's majority class; the noise
/// label forms one cluster of its own.
pub fn purity(pred: &[i64], truth: &[i64]) -> Result<f64, MetricsError> {
    check_lengths(pred, truth)?;
    if pred.is_empty() {
        return Err(MetricsError::TooFewItems { needed: 1, got: 0 });
    }
    let t = ContingencyTable::new(pred, truth)?;
    let hits: u64 = t
        .counts
        .iter()
        .map(|r| r.iter().copied().max().unwrap_or(0))
        .sum();
    Ok(hits as f64 / t.total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairScores {
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub f1: f64,
    pub tp: f64,
    pub fp: f64,
    pub fn_: f64,
    pub tn: f64,
}

/// Pair-counting precision, recall, accuracy and F1 of `pred` against `truth`.
///
/// A pair is predicted together when both items share a non-noise label.
/// With no predicted (or no true) pairs, precision (recall) is 1 if the other
/// side also has none and 0 otherwise.
pub fn pair_scores(pred: &[i64], truth: &[i64]) -> Result<PairScores, MetricsError> {
    check_lengths(pred, truth)?;
    if pred.len() < 2 {
        return Err(MetricsError::TooFewItems {
            needed: 2,
            got: pred.len(),
        });
    }
    let t = ContingencyTable::new(pred, truth)?;
    let grouped = |row: usize| t.row_labels[row] >= 0;
    let tp: f64 = t
        .nonzero()
        .filter(|(i, _, _)| grouped(*i))
        .map(|(_, _, c)| comb2(c))
        .sum();
    let predicted: f64 = (0..t.row_sums.len())
        .filter(|&i| grouped(i))
        .map(|i| comb2(t.row_sums[i]))
        .sum();
    let actual: f64 = t.col_sums.iter().map(|&c| comb2(c)).sum();
    let total = comb2(t.total);
    let fp = predicted - tp;
    let fn_ = actual - tp;
    let tn = total - tp - fp - fn_;

    let precision = if predicted > 0.0 {
        tp / predicted
    } else if actual > 0.0 {
        0.0
    } else {
        1.0
    };
    let recall = if actual > 0.0 {
        tp / actual
    } else if predicted > 0.0 {
        0.0
    } else {
        1.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(PairScores {
        precision,
        recall,
        accuracy: (tp + tn) / total,
        f1,
        tp,
        fp,
        fn_,
        tn,
    })
}
