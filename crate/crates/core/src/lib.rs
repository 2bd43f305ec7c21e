//! Confidence-aware active feedback for interactive instance search.
//!
//! Given an affinity graph over a gallery and its probe, each feedback round
//! diffuses the current labels with a confidence-weighted manifold ranking
//! (the *ranking step*), scores every sample's ranking confidence from its
//! pairwise losses (the *suggestion step*), and asks the annotator about the
//! least confident unlabeled samples.
//!
//! Both steps come in two flavours: closed-form approximations that run one
//! pass per round, and box-constrained QP reference solvers that alternate
//! until the joint objective stalls. See [`session::run_round`].

pub mod affinity;
pub mod error;
mod linalg;
pub mod loss;
pub mod params;
pub mod ranking;
pub mod select;
pub mod session;
pub mod state;
pub mod suggestion;
pub mod topk;

pub use affinity::AffinityMatrix;
pub use error::{CaafError, Result};
pub use loss::{pairwise_loss, LossMatrix};
pub use params::{QpOptions, SelectionPolicy, SessionParams, SolverMode};
pub use ranking::{ranking_step_approx, ranking_step_qp, QpSolution, RankingSystem};
pub use select::{select_candidates, select_random};
pub use session::{
    run_round, run_session, Oracle, OracleError, ReplayOracle, RoundRecord, RoundResult, Session, SessionError,
    SessionOutcome, SessionTranscript, Step,
};
pub use state::{init_state, Label, RankingState};
pub use suggestion::{suggestion_step_approx, suggestion_step_qp};
pub use topk::merge_topk;
