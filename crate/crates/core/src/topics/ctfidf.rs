//! Class-based TF-IDF: every cluster's documents are concatenated into one
//! pseudo-document and words are weighted by `tf_{w,c} * ln(1 + A / f_w)`.

use std::collections::HashMap;

use super::{ClusterTopics, TopicMethod, TopicReport, TopicsError};
use crate::cluster::ClusterAssignment;
use crate::corpus::Corpus;

/// Top-`k` words per cluster by c-TF-IDF.
///
/// `tf_{w,c}` is the count of `w` in cluster `c` over all words in `c`,
/// `f_w` the count of `w` across all clusters and `A` the mean number of
/// words per cluster. Noise documents are ignored. Equal scores keep
/// first-occurrence order.
pub fn ctfidf_topics(
    corpus: &Corpus,
    assignment: &ClusterAssignment,
    k: usize,
) -> Result<TopicReport, TopicsError> {
    if assignment.len() != corpus.len() {
        return Err(TopicsError::Misaligned(format!(
            "{} labels for {} documents",
            assignment.len(),
            corpus.len()
        )));
    }
    if k == 0 {
        return Err(TopicsError::Shape("top-K must be at least 1".into()));
    }
    // Per cluster: word -> (count, first-seen order), and total word count.
    let mut per_cluster: Vec<(HashMap<String, (usize, usize)>, usize)> =
        (0..assignment.k).map(|_| (HashMap::new(), 0)).collect();
    let mut global: HashMap<String, usize> = HashMap::new();
    let mut order = 0usize;
    for (doc, &label) in corpus.documents.iter().zip(&assignment.labels) {
        if label < 0 {
            continue;
        }
        let slot = &mut per_cluster[label as usize];
        for w in doc.word_strings() {
            *global.entry(w.clone()).or_default() += 1;
            slot.0.entry(w).or_insert((0, order)).0 += 1;
            slot.1 += 1;
            order += 1;
        }
    }
    let clusters_n = per_cluster.len().max(1) as f64;
    let avg_words = per_cluster.iter().map(|c| c.1).sum::<usize>() as f64 / clusters_n;

    let clusters = per_cluster
        .into_iter()
        .enumerate()
        .map(|(label, (counts, total))| {
            let mut scored: Vec<(String, f64, usize)> = counts
                .into_iter()
                .map(|(w, (c, first))| {
                    let tf = c as f64 / total as f64;
                    let idf = (1.0 + avg_words / global[&w] as f64).ln();
                    (w, tf * idf, first)
                })
                .collect();
            scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.2.cmp(&b.2)));
            ClusterTopics {
                label: label as i64,
                words: scored.into_iter().take(k).map(|(w, s, _)| (w, s)).collect(),
                unmapped: 0,
            }
        })
        .collect();
    Ok(TopicReport {
        clusters,
        method: TopicMethod::Ctfidf,
        layer: None,
    })
}
