use std::collections::BTreeMap;

use super::{check_lengths, MetricsError};

/// Co-occurrence counts of two labelings; rows and columns follow sorted label order.
#[derive(Debug, Clone, PartialEq)]
pub struct ContingencyTable {
    pub row_labels: Vec<i64>,
    pub col_labels: Vec<i64>,
    pub counts: Vec<Vec<u64>>,
    pub row_sums: Vec<u64>,
    pub col_sums: Vec<u64>,
    pub total: u64,
}

impl ContingencyTable {
    pub fn new(a: &[i64], b: &[i64]) -> Result<Self, MetricsError> {
        check_lengths(a, b)?;
        let index = |labels: &[i64]| -> BTreeMap<i64, usize> {
            let mut m: BTreeMap<i64, usize> = labels.iter().map(|&l| (l, 0)).collect();
            for (i, v) in m.values_mut().enumerate() {
                *v = i;
            }
            m
        };
        let (ra, cb) = (index(a), index(b));
        let mut counts = vec![vec![0u64; cb.len()]; ra.len()];
        for (x, y) in a.iter().zip(b) {
            counts[ra[x]][cb[y]] += 1;
        }
        let row_sums: Vec<u64> = counts.iter().map(|r| r.iter().sum()).collect();
        let col_sums: Vec<u64> = (0..cb.len())
            .map(|j| counts.iter().map(|r| r[j]).sum())
            .collect();
        Ok(ContingencyTable {
            row_labels: ra.into_keys().collect(),
            col_labels: cb.into_keys().collect(),
            counts,
            row_sums,
            col_sums,
            total: a.len() as u64,
        })
    }

    pub fn nonzero(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        self.counts.iter().enumerate().flat_map(|(i, r)| {
            r.iter()
                .enumerate()
                .filter(|(_, c)| **c > 0)
                .map(move |(j, c)| (i, j, *c))
        })
    }

    /// True when both labelings induce the same partition.
    pub fn is_bijective(&self) -> bool {
        self.row_labels.len() == self.col_labels.len()
            && self.counts.iter().all(|r| r.iter().filter(|c| **c > 0).count() == 1)
    }
}
