//! Request and response bodies.

use std::collections::BTreeMap;

use caaf_core::{Label, SessionParams};
use caaf_data::AffinityKind;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub dataset: String,
    pub probe: String,
    /// Missing fields take their defaults.
    #[serde(default)]
    pub params: SessionParams,
    #[serde(default)]
    pub affinity: AffinityKind,
    #[serde(default)]
    pub averaged_probe: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitLabels {
    pub round_token: String,
    /// Keyed by sample id. Suggestions left out count as unsure.
    #[serde(default)]
    pub labels: BTreeMap<String, Label>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    AwaitingLabels,
    /// Labels were accepted and the next round is being computed.
    Ready,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub id: String,
    /// Position in the initial ranking, 0 = nearest.
    pub initial_rank: usize,
    pub score: f64,
    pub confidence: f64,
    pub thumbnail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedItem {
    pub id: String,
    pub score: f64,
    pub thumbnail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relevant: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub round_index: usize,
    pub suggestions: Vec<String>,
    pub labels: BTreeMap<String, Label>,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// AP of the merged gallery ranking after each computed round.
    pub ap: Vec<f64>,
    pub relevant_in_gallery: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub dataset: String,
    pub probe: String,
    pub status: Status,
    pub round_index: usize,
    /// Feedback rounds configured for the session.
    pub rounds: usize,
    /// Token to send with the next label submission; absent once finished.
    pub round_token: Option<String>,
    pub params: SessionParams,
    pub suggestions: Vec<Suggestion>,
    /// Head of the current merged ranking.
    pub preview: Vec<RankedItem>,
    /// Full gallery ranking (ids), present once finished.
    pub final_ranking: Option<Vec<String>>,
    pub history: Vec<HistoryEntry>,
    pub metrics: Option<Metrics>,
    /// Total compute time spent in ranking rounds.
    pub elapsed_ms: f64,
    pub created_at_ms: u64,
    pub updated_at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub id: String,
    pub gallery_size: usize,
    pub dim: usize,
    pub probes: Vec<String>,
    pub has_ground_truth: bool,
    pub has_thumbnails: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub sessions: usize,
    pub datasets: usize,
}
