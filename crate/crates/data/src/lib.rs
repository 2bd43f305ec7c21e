//! Dataset ingestion, affinity construction and synthetic benchmark data.

pub mod error;
pub mod features;
pub mod manifest;
pub mod query;
pub mod similarity;
pub mod synthetic;

pub use error::{DataError, Result};
pub use features::{Dataset, FeatureSet, GroundTruth};
pub use manifest::{load_dataset, write_dataset, DatasetManifest, FeatureFile};
pub use query::{AffinityKind, QueryOptions, QueryProblem};
pub use similarity::{
    averaged_probe, cosine_affinity, initial_ranking, initial_scores, temporal_affinity, DEFAULT_TEMPORAL_LAMBDA,
};
pub use synthetic::{generate_synthetic, SyntheticConfig};
