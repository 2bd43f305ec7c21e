//! Builds the top-K re-ranking problem for one probe.

use caaf_core::{merge_topk, AffinityMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::features::Dataset;
use crate::similarity::{averaged_probe, cosine_affinity, initial_ranking, initial_scores, temporal_affinity};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AffinityKind {
    #[default]
    Cosine,
    Temporal {
        lambda: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct QueryOptions {
    pub top_k: usize,
    pub affinity: AffinityKind,
    /// Replace the probe by the renormalized mean of this many top-ranked
    /// gallery samples when building the affinity.
    pub averaged_probe: Option<usize>,
}

/// The session-local view of one probe: its `K` best initial candidates plus
/// the probe in last position.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryProblem {
    pub probe_id: String,
    /// Full initial ranking of gallery indices, nearest first.
    pub ranking: Vec<usize>,
    /// `ranking[..K]`; session sample `i < K` is gallery sample `candidates[i]`.
    pub candidates: Vec<usize>,
    pub affinity: AffinityMatrix,
    /// Initial-rank position of every session sample (probe last).
    pub initial_rank: Vec<usize>,
    /// Initial scores of every session sample (probe = 1).
    pub initial_scores: Vec<f64>,
    /// Ground truth per session sample (probe relevant), when known.
    pub relevance: Option<Vec<bool>>,
}

impl QueryProblem {
    pub fn build(dataset: &Dataset, probe_id: &str, options: &QueryOptions) -> Result<Self> {
        let probe = dataset.probe_vector(probe_id)?;
        let gallery = &dataset.gallery;
        if gallery.is_empty() {
            return Err(DataError::Shape("gallery is empty".into()));
        }
        if options.top_k == 0 {
            return Err(DataError::Config("top_k must be at least 1".into()));
        }
        let ranking = initial_ranking(gallery, probe)?;
        let k = if options.top_k > ranking.len() {
            log::warn!(
                "top_k {} exceeds gallery size {}; clamping",
                options.top_k,
                ranking.len()
            );
            ranking.len()
        } else {
            options.top_k
        };
        let candidates = ranking[..k].to_vec();
        let head = gallery.select(&candidates);

        let expanded;
        let affinity_probe = match options.averaged_probe {
            Some(top) => {
                expanded = averaged_probe(gallery, &ranking, top)?;
                expanded.as_slice()
            }
            None => probe,
        };
        let affinity = match options.affinity {
            AffinityKind::Cosine => cosine_affinity(&head, affinity_probe)?,
            AffinityKind::Temporal { lambda } => temporal_affinity(&head, affinity_probe, lambda)?,
        };

        let mut scores = initial_scores(&head, probe)?;
        scores.push(1.0);
        let relevance = dataset.relevance(probe_id).map(|flags| {
            let mut local: Vec<bool> = candidates.iter().map(|&g| flags[g]).collect();
            local.push(true);
            local
        });

        Ok(Self {
            probe_id: probe_id.to_string(),
            ranking,
            candidates,
            affinity,
            initial_rank: (0..=k).collect(),
            initial_scores: scores,
            relevance,
        })
    }

    pub fn top_k(&self) -> usize {
        self.candidates.len()
    }

    /// Final gallery ranking for session scores `f` (probe entry ignored).
    pub fn final_ranking(&self, f: &[f64]) -> Vec<usize> {
        merge_topk(&self.ranking, &f[..self.top_k()])
    }
}
