//! Session hyperparameters.

use serde::{Deserialize, Serialize};

use crate::error::{CaafError, Result};

/// How the ranking and suggestion steps are solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverMode {
    /// One closed-form pass of each step per round.
    Approximate,
    /// Box-constrained QP for both steps, alternated until the joint
    /// objective stalls.
    Qp,
}

impl std::fmt::Display for SolverMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolverMode::Approximate => f.write_str("approximate"),
            SolverMode::Qp => f.write_str("qp"),
        }
    }
}

impl std::str::FromStr for SolverMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "approximate" | "approx" => Ok(SolverMode::Approximate),
            "qp" => Ok(SolverMode::Qp),
            other => Err(format!("unknown solver `{other}`")),
        }
    }
}

/// Which unlabeled samples are offered to the annotator each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SelectionPolicy {
    /// The `q` least confident samples.
    Confidence,
    /// Seeded uniform sampling over the eligible pool.
    Random { seed: u64 },
}

/// Projected-gradient and alternation settings for the QP solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpOptions {
    /// Stop when the projected-gradient infinity norm drops below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Maximum ranking/suggestion cycles per round.
    pub alternation_cap: usize,
    /// Stop alternating once the joint objective decreases by less than this.
    pub objective_tol: f64,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 10_000,
            alternation_cap: 20,
            objective_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionParams {
    /// Smoothing/fitting balance, in (0, 1).
    pub alpha: f64,
    /// Loss threshold for the QP suggestion step. `None` uses the mean
    /// off-diagonal pairwise loss of the round.
    pub beta: Option<f64>,
    /// Regularization weight for the QP suggestion step.
    pub gamma: f64,
    /// Number of initial-ranking candidates that are re-ranked.
    pub top_k: usize,
    /// Suggestions per round.
    pub q: usize,
    /// Number of feedback rounds; a session runs `rounds + 1` ranking passes.
    pub rounds: usize,
    pub solver: SolverMode,
    /// Force `v = 1` before each ranking step (plain manifold ranking).
    pub mr_baseline: bool,
    /// First round uses the initial scores as `y` and `v = 1`.
    pub soft_init: bool,
    pub selection: SelectionPolicy,
    /// When false the ranking step is skipped: labeled samples take their
    /// feedback score and unlabeled samples keep their initial scores.
    pub ranking_step: bool,
    pub qp: QpOptions,
}

impl Default for SessionParams {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            beta: None,
            gamma: 1.0,
            top_k: 300,
            q: 5,
            rounds: 4,
            solver: SolverMode::Approximate,
            mr_baseline: false,
            soft_init: false,
            selection: SelectionPolicy::Confidence,
            ranking_step: true,
            qp: QpOptions::default(),
        }
    }
}

impl SessionParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CaafError::InvalidParams(msg));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must be in (0, 1), got {}", self.alpha));
        }
        if let Some(beta) = self.beta {
            if !(beta > 0.0 && beta.is_finite()) {
                return bad(format!("beta must be positive, got {beta}"));
            }
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if self.q == 0 {
            return bad("q must be at least 1".into());
        }
        if self.top_k == 0 {
            return bad("top_k must be at least 1".into());
        }
        if self.qp.tol.is_nan() || self.qp.tol <= 0.0 || self.qp.max_iter == 0 || self.qp.alternation_cap == 0 {
            return bad("QP options must have positive tolerance and iteration caps".into());
        }
        Ok(())
    }
}
