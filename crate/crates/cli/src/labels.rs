use std::collections::HashMap;
use std::path::Path;

use anyhow::{bail, Context, Result};

use clustop_core::cluster::read_labels;

/// Reads an `{"id", "label"}` file and orders it by `ids`; both id sets must match.
pub fn read_aligned(path: &Path, ids: &[&str]) -> Result<Vec<i64>> {
    let records = read_labels(path).with_context(|| format!("reading labels {}", path.display()))?;
    if records.len() != ids.len() {
        bail!(
            "{} has {} labels for {} documents",
            path.display(),
            records.len(),
            ids.len()
        );
    }
    let mut by_id = HashMap::with_capacity(records.len());
    for r in records {
        if by_id.insert(r.id.clone(), r.label).is_some() {
            bail!("{}: duplicate id `{}`", path.display(), r.id);
        }
    }
    ids.iter()
        .map(|id| {
            by_id
                .get(*id)
                .copied()
                .with_context(|| format!("{}: no label for `{id}`", path.display()))
        })
        .collect()
}
