//! Retrieval metrics, a simulated annotator, and the experiment runner that
//! compares CAAF against plain manifold ranking and random suggestions.

pub mod experiment;
pub mod metrics;
pub mod oracle;

pub use experiment::{
    run_experiment, run_query, summarize, ExperimentConfig, ExperimentError, ExperimentFailure, Report, RunRecord,
    Strategy, StrategySummary,
};
pub use metrics::{average_precision, interpolated_pr_11pt, manifold_smoothing_loss, mean_ap, MetricError, PrCurve};
pub use oracle::SimulatedOracle;
