//! Ranked-retrieval metrics and the manifold smoothing diagnostic.

use std::collections::BTreeSet;

use caaf_core::AffinityMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricError {
    #[error("relevant set is empty")]
    EmptyRelevant,
    #[error("cannot average an empty list")]
    EmptyList,
}

/// `(1/|R|) Σ_{k : item k ∈ R} precision@k`. Relevant items missing from
/// `ranking` contribute zero.
pub fn average_precision<T: Ord>(ranking: &[T], relevant: &BTreeSet<T>) -> Result<f64, MetricError> {
    if relevant.is_empty() {
        return Err(MetricError::EmptyRelevant);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, item) in ranking.iter().enumerate() {
        if relevant.contains(item) {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(sum / relevant.len() as f64)
}

pub fn mean_ap(aps: &[f64]) -> Result<f64, MetricError> {
    if aps.is_empty() {
        return Err(MetricError::EmptyList);
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

/// Interpolated precision at recall levels 0.0, 0.1, …, 1.0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrCurve(pub [f64; 11]);

impl PrCurve {
    pub fn levels() -> [f64; 11] {
        std::array::from_fn(|i| i as f64 / 10.0)
    }
}

/// At each recall level `r`, the best precision over cutoffs whose recall
/// is at least `r`; zero where no cutoff reaches `r`.
pub fn interpolated_pr_11pt<T: Ord>(ranking: &[T], relevant: &BTreeSet<T>) -> Result<PrCurve, MetricError> {
    if relevant.is_empty() {
        return Err(MetricError::EmptyRelevant);
    }
    let total = relevant.len();
    let mut curve = [0.0; 11];
    let mut hits = 0usize;
    for (k, item) in ranking.iter().enumerate() {
        if relevant.contains(item) {
            hits += 1;
        }
        let precision = hits as f64 / (k + 1) as f64;
        // recall ≥ level/10  ⇔  10·hits ≥ level·total, in exact integers
        for (level, best) in curve.iter_mut().enumerate() {
            if 10 * hits >= level * total && precision > *best {
                *best = precision;
            }
        }
    }
    Ok(PrCurve(curve))
}

/// `(1/m²) Σ_ij a_ij (ŷ_i − ŷ_j)²` for a binary ground-truth indicator.
pub fn manifold_smoothing_loss(a: &AffinityMatrix, indicator: &[bool]) -> f64 {
    let m = a.dim();
    assert_eq!(indicator.len(), m, "indicator length must match the affinity");
    let mut total = 0.0;
    for i in 0..m {
        for j in 0..m {
            if indicator[i] != indicator[j] {
                total += a.get(i, j);
            }
        }
    }
    total / (m * m) as f64
}
