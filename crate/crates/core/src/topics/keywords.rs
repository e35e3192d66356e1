use std::collections::HashMap;

use super::{ClusterTopics, TopicMethod, TopicReport, TopicsError};
use crate::cluster::ClusterAssignment;
use crate::corpus::Document;
use crate::topics::BetaProfile;

/// Non-special token with the largest column sum in `layer`; ties go to the lower index.
pub fn key_token(profile: &BetaProfile, layer: usize) -> Result<Option<usize>, TopicsError> {
    let row = profile.beta.get(layer).ok_or(TopicsError::LayerOutOfRange {
        layer,
        layers: profile.layers(),
    })?;
    let mut best: Option<(usize, f64)> = None;
    for (t, &b) in row.iter().enumerate() {
        if profile.is_special(t) {
            continue;
        }
        if best.is_none_or(|(_, v)| b > v) {
            best = Some((t, b));
        }
    }
    Ok(best.map(|(t, _)| t))
}

/// The segmented word containing token `token`, or `None` when the token is
/// special or not inside a single word.
pub fn token_to_word(doc: &Document, token: usize) -> Result<Option<String>, TopicsError> {
    let t = doc.tokens.get(token).ok_or(TopicsError::TokenOutOfRange {
        index: token,
        len: doc.tokens.len(),
    })?;
    if t.special {
        return Ok(None);
    }
    Ok(doc.word_containing(t.span()).and_then(|w| doc.word(w)))
}

/// Ranks each cluster's sentence keywords by frequency (ties: first
/// occurrence in document order) and keeps the top `k`.
pub fn cluster_topics(
    assignment: &ClusterAssignment,
    keywords: &[Option<String>],
    k: usize,
) -> Result<TopicReport, TopicsError> {
    if keywords.len() != assignment.len() {
        return Err(TopicsError::Misaligned(format!(
            "{} keywords for {} documents",
            keywords.len(),
            assignment.len()
        )));
    }
    if k == 0 {
        return Err(TopicsError::Shape("top-K must be at least 1".into()));
    }
    // Per cluster: word -> (count, first document index), plus unmapped count.
    let mut tallies: Vec<(HashMap<&str, (usize, usize)>, usize)> =
        (0..assignment.k).map(|_| (HashMap::new(), 0)).collect();
    for (doc, (&label, kw)) in assignment.labels.iter().zip(keywords).enumerate() {
        if label < 0 {
            continue;
        }
        let slot = &mut tallies[label as usize];
        match kw {
            Some(word) => slot.0.entry(word.as_str()).or_insert((0, doc)).0 += 1,
            None => slot.1 += 1,
        }
    }
    let clusters = tallies
        .into_iter()
        .enumerate()
        .map(|(label, (counts, unmapped))| {
            let mut ranked: Vec<(&str, usize, usize)> =
                counts.into_iter().map(|(w, (c, first))| (w, c, first)).collect();
            ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
            ClusterTopics {
                label: label as i64,
                words: ranked
                    .into_iter()
                    .take(k)
                    .map(|(w, c, _)| (w.to_string(), c as f64))
                    .collect(),
                unmapped,
            }
        })
        .collect();
    Ok(TopicReport {
        clusters,
        method: TopicMethod::Attention,
        layer: None,
    })
}
