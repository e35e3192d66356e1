//! Per-layer dispersion statistics of attention column sums, used to pick
//! the layer whose attention is most concentrated on a few tokens.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{BetaProfile, TopicsError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStat {
    /// Mean coefficient of variation (population std / mean).
    pub cov: f64,
    /// Mean population excess kurtosis; `None` when no sentence qualified.
    pub kurt: Option<f64>,
    /// Mean relative range ((max - min) / mean).
    pub rr: f64,
    pub sentences: usize,
    pub kurt_sentences: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStats {
    pub layers: Vec<LayerStat>,
}

struct Moments {
    cov: f64,
    rr: f64,
    kurt: Option<f64>,
}

fn moments(values: &[f64]) -> Option<Result<Moments, ()>> {
    let m = values.len();
    if m == 0 {
        return None;
    }
    let mf = m as f64;
    let mean = values.iter().sum::<f64>() / mf;
    if mean == 0.0 {
        return Some(Err(()));
    }
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / mf;
    let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / mf;
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        });
    let kurt = (m >= 3 && m2 > 0.0).then(|| m4 / (m2 * m2) - 3.0);
    Some(Ok(Moments {
        cov: m2.sqrt() / mean,
        rr: (max - min) / mean,
        kurt,
    }))
}

/// Averages per-sentence statistics of the non-special-token column sums for every layer.
///
/// Sentences without non-special tokens are skipped; kurtosis additionally
/// skips sentences with fewer than three such tokens or constant values.
pub fn layer_stats(profiles: &[BetaProfile]) -> Result<LayerStats, TopicsError> {
    let n_layers = profiles.first().map_or(0, BetaProfile::layers);
    if let Some(p) = profiles.iter().find(|p| p.layers() != n_layers) {
        return Err(TopicsError::Shape(format!(
            "profile `{}` has {} layers, expected {n_layers}",
            p.id,
            p.layers()
        )));
    }
    let mut sums = vec![(0.0f64, 0.0f64, 0.0f64, 0usize, 0usize); n_layers];
    for p in profiles {
        for (layer, row) in p.beta.iter().enumerate() {
            let vals: Vec<f64> = row
                .iter()
                .enumerate()
                .filter(|(t, _)| !p.is_special(*t))
                .map(|(_, b)| *b)
                .collect();
            match moments(&vals) {
                None => {}
                Some(Err(())) => {
                    return Err(TopicsError::ZeroMean {
                        id: p.id.clone(),
                        layer,
                    })
                }
                Some(Ok(m)) => {
                    let s = &mut sums[layer];
                    s.0 += m.cov;
                    s.2 += m.rr;
                    s.3 += 1;
                    if let Some(k) = m.kurt {
                        s.1 += k;
                        s.4 += 1;
                    }
                }
            }
        }
    }
    let layers = sums
        .into_iter()
        .map(|(cov, kurt, rr, n, nk)| {
            let div = |x: f64, c: usize| if c > 0 { x / c as f64 } else { 0.0 };
            LayerStat {
                cov: div(cov, n),
                kurt: (nk > 0).then(|| kurt / nk as f64),
                rr: div(rr, n),
                sentences: n,
                kurt_sentences: nk,
            }
        })
        .collect();
    Ok(LayerStats { layers })
}

fn cmp_opt(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => Ordering::Greater,
        (None, Some(_)) => Ordering::Less,
        (None, None) => Ordering::Equal,
    }
}

/// Layer with the highest mean kurtosis (ties: higher cov, higher rr, lower
/// index), or `override_layer` when given.
pub fn select_layer(stats: &LayerStats, override_layer: Option<usize>) -> Result<usize, TopicsError> {
    let count = stats.layers.len();
    if count == 0 {
        return Err(TopicsError::Shape("no layers to select from".into()));
    }
    if let Some(l) = override_layer {
        if l >= count {
            return Err(TopicsError::LayerOutOfRange { layer: l, layers: count });
        }
        return Ok(l);
    }
    let mut best = 0;
    for i in 1..count {
        let (a, b) = (&stats.layers[i], &stats.layers[best]);
        let ord = cmp_opt(a.kurt, b.kurt)
            .then(a.cov.total_cmp(&b.cov))
            .then(a.rr.total_cmp(&b.rr));
        if ord == Ordering::Greater {
            best = i;
        }
    }
    Ok(best)
}
