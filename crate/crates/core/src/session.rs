//! Round and session drivers for the alternating ranking/suggestion loop.
//!
//! A session with `rounds = T` performs `T + 1` ranking passes
//! (`t = 0..=T`). Suggestions of rounds `0..T` are labeled and fed back;
//! the suggestions of the final round are still reported but no further
//! ranking consumes them, so a default session consumes `q · T` labels.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affinity::AffinityMatrix;
use crate::error::{CaafError, Result};
use crate::loss::{joint_objective, pairwise_loss};
use crate::params::{SelectionPolicy, SessionParams, SolverMode};
use crate::ranking::{ranking_step_approx, ranking_step_qp};
use crate::select::{select_candidates, select_random};
use crate::state::{init_state, Label, RankingState};
use crate::suggestion::{suggestion_step_approx, suggestion_step_qp};

/// Output of one ranking + suggestion pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundResult {
    pub round_index: usize,
    /// Refined scores over all `m` samples (probe last).
    pub refined_f: Vec<f64>,
    /// Suggestion-step confidences used for selection.
    pub confidence: Vec<f64>,
    pub suggestions: Vec<usize>,
    #[serde(with = "duration_ms")]
    pub elapsed: Duration,
    /// Ranking/suggestion cycles performed (always 1 in approximate mode).
    pub alternations: usize,
    /// False if any ranking QP in this round hit its iteration cap.
    pub converged: bool,
}

mod duration_ms {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64() * 1e3)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let ms = f64::deserialize(d)?;
        Ok(Duration::from_secs_f64(ms.max(0.0) / 1e3))
    }
}

fn ranking_pass(a: &AffinityMatrix, state: &RankingState, params: &SessionParams) -> Result<(Vec<f64>, bool)> {
    if !params.ranking_step {
        let initial = state.initial_scores().ok_or(CaafError::MissingInitialScores)?;
        let f = (0..state.m())
            .map(|i| match state.labeled().get(&i) {
                Some(&s) => f64::from(s),
                None => initial[i],
            })
            .collect();
        return Ok((f, true));
    }
    match params.solver {
        SolverMode::Approximate => Ok((ranking_step_approx(a, state, params.alpha)?, true)),
        SolverMode::Qp => {
            let sol = ranking_step_qp(a, state, params.alpha, &params.qp)?;
            Ok((sol.f, sol.converged))
        }
    }
}

/// Runs one round: reinitialize `y` and `v`, rank, compute losses, solve
/// the suggestion step, and select candidates.
///
/// In QP mode the ranking and suggestion steps alternate until the joint
/// objective decreases by less than `qp.objective_tol` or
/// `qp.alternation_cap` cycles have run. `state.f` receives the refined
/// scores; `state.v` holds the confidences the final ranking step used.
pub fn run_round(
    a: &AffinityMatrix,
    state: &mut RankingState,
    params: &SessionParams,
    initial_rank: &[usize],
) -> Result<RoundResult> {
    params.validate()?;
    let m = state.m();
    if a.dim() != m {
        return Err(CaafError::DimensionMismatch {
            expected: m,
            actual: a.dim(),
        });
    }
    if initial_rank.len() != m {
        return Err(CaafError::DimensionMismatch {
            expected: m,
            actual: initial_rank.len(),
        });
    }
    let start = Instant::now();
    let round_index = state.rounds_completed();

    if round_index == 0 && params.soft_init {
        state.soft_reinit();
    } else {
        state.reinit();
    }
    if params.mr_baseline {
        state.v.fill(1.0);
    }

    let (f, mut converged) = ranking_pass(a, state, params)?;
    state.set_scores(f);
    let mut loss = pairwise_loss(state.f(), state.y(), a, params.alpha)?;
    let mut alternations = 1;

    let confidence = match params.solver {
        SolverMode::Approximate => suggestion_step_approx(&loss),
        SolverMode::Qp => {
            let beta = params
                .beta
                .unwrap_or_else(|| loss.mean_off_diagonal().max(f64::EPSILON));
            let mut v = suggestion_step_qp(&loss, beta, params.gamma, state.labeled())?;
            let mut objective = joint_objective(&loss, &v, beta, params.gamma);
            // Fixed v (baseline or skipped ranking) leaves nothing to alternate.
            let alternate = params.ranking_step && !params.mr_baseline;
            while alternate && alternations < params.qp.alternation_cap {
                state.set_confidence(&v);
                let (f, ok) = ranking_pass(a, state, params)?;
                converged &= ok;
                state.set_scores(f);
                loss = pairwise_loss(state.f(), state.y(), a, params.alpha)?;
                v = suggestion_step_qp(&loss, beta, params.gamma, state.labeled())?;
                alternations += 1;
                let next = joint_objective(&loss, &v, beta, params.gamma);
                let decrease = objective - next;
                objective = next;
                if decrease < params.qp.objective_tol {
                    break;
                }
            }
            v
        }
    };

    let suggestions = match params.selection {
        SelectionPolicy::Confidence => select_candidates(&confidence, state, params.q, initial_rank),
        SelectionPolicy::Random { seed } => select_random(state, params.q, seed, round_index),
    };
    state.rounds_completed += 1;

    Ok(RoundResult {
        round_index,
        refined_f: state.f().to_vec(),
        confidence,
        suggestions,
        elapsed: start.elapsed(),
        alternations,
        converged,
    })
}

/// Source of annotator judgments for suggested samples.
pub trait Oracle {
    /// Labels for some or all of `suggestions`; omitted samples count as
    /// unsure.
    fn label(
        &mut self,
        round: usize,
        suggestions: &[usize],
    ) -> std::result::Result<BTreeMap<usize, Label>, OracleError>;
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("oracle failed: {0}")]
pub struct OracleError(pub String);

/// One round of a session transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_index: usize,
    pub suggestions: Vec<usize>,
    pub labels: BTreeMap<usize, Label>,
    pub f: Vec<f64>,
    pub elapsed_ms: f64,
}

/// Everything needed to replay a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTranscript {
    pub params: SessionParams,
    pub rounds: Vec<RoundRecord>,
}

impl SessionTranscript {
    /// Labels recorded for every round, in order.
    pub fn labels(&self) -> impl Iterator<Item = &BTreeMap<usize, Label>> {
        self.rounds.iter().map(|r| &r.labels)
    }
}

/// Replays recorded labels round by round.
#[derive(Debug, Clone)]
pub struct ReplayOracle {
    rounds: Vec<BTreeMap<usize, Label>>,
}

impl ReplayOracle {
    pub fn new(transcript: &SessionTranscript) -> Self {
        Self {
            rounds: transcript.labels().cloned().collect(),
        }
    }
}

impl Oracle for ReplayOracle {
    fn label(
        &mut self,
        round: usize,
        _suggestions: &[usize],
    ) -> std::result::Result<BTreeMap<usize, Label>, OracleError> {
        self.rounds
            .get(round)
            .cloned()
            .ok_or_else(|| OracleError(format!("no recorded labels for round {round}")))
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Core(#[from] CaafError),
    #[error("label for sample {index}, which was not suggested in round {round}")]
    NotSuggested { round: usize, index: usize },
    #[error("session already finished")]
    Finished,
    #[error("{source} (after {} completed rounds)", partial.rounds.len())]
    Oracle {
        partial: Box<SessionTranscript>,
        source: OracleError,
    },
}

/// A live session: the affinity, parameters and evolving state, advanced
/// one labeled round at a time.
#[derive(Debug, Clone)]
pub struct Session {
    affinity: AffinityMatrix,
    params: SessionParams,
    initial_rank: Vec<usize>,
    state: RankingState,
    history: Vec<RoundRecord>,
    current: RoundResult,
    finished: bool,
}

/// What [`Session::submit`] produced.
#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Next(RoundResult),
    Finished,
}

impl Session {
    /// Initializes state and runs round 0.
    ///
    /// `initial_rank[i]` is the initial-list position of sample `i`
    /// (the probe included, conventionally last). `initial_scores` are
    /// required for soft initialization and the no-ranking-step ablation.
    pub fn start(
        affinity: AffinityMatrix,
        params: SessionParams,
        initial_rank: Vec<usize>,
        initial_scores: Option<Vec<f64>>,
    ) -> Result<Self> {
        params.validate()?;
        let m = affinity.dim();
        let mut state = init_state(m, m.saturating_sub(1), &params, initial_scores.as_deref())?;
        let current = run_round(&affinity, &mut state, &params, &initial_rank)?;
        Ok(Self {
            affinity,
            params,
            initial_rank,
            state,
            history: Vec::new(),
            current,
            finished: false,
        })
    }

    pub fn params(&self) -> &SessionParams {
        &self.params
    }

    pub fn state(&self) -> &RankingState {
        &self.state
    }

    pub fn affinity(&self) -> &AffinityMatrix {
        &self.affinity
    }

    /// The most recent round, awaiting labels unless the session finished.
    pub fn current(&self) -> &RoundResult {
        &self.current
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn is_final_round(&self) -> bool {
        self.current.round_index >= self.params.rounds
    }

    pub fn history(&self) -> &[RoundRecord] {
        &self.history
    }

    /// Applies labels for the current suggestions and advances. Suggestions
    /// missing from `labels` are recorded as unsure. Labels given in the
    /// final round are recorded but no further ranking pass runs.
    pub fn submit(&mut self, labels: &BTreeMap<usize, Label>) -> std::result::Result<Step, SessionError> {
        if self.finished {
            return Err(SessionError::Finished);
        }
        let round = self.current.round_index;
        if let Some(&index) = labels.keys().find(|i| !self.current.suggestions.contains(i)) {
            return Err(SessionError::NotSuggested { round, index });
        }
        let complete: BTreeMap<usize, Label> = self
            .current
            .suggestions
            .iter()
            .map(|&i| (i, labels.get(&i).copied().unwrap_or(Label::Unsure)))
            .collect();

        if self.is_final_round() {
            self.record(complete);
            self.finished = true;
            return Ok(Step::Finished);
        }
        self.state.apply_feedback(&complete)?;
        self.record(complete);
        self.current = run_round(&self.affinity, &mut self.state, &self.params, &self.initial_rank)?;
        Ok(Step::Next(self.current.clone()))
    }

    /// Ends the session with the current round's scores, without labels.
    pub fn finish(&mut self) {
        if !self.finished {
            self.record(BTreeMap::new());
            self.finished = true;
        }
    }

    fn record(&mut self, labels: BTreeMap<usize, Label>) {
        self.history.push(RoundRecord {
            round_index: self.current.round_index,
            suggestions: self.current.suggestions.clone(),
            labels,
            f: self.current.refined_f.clone(),
            elapsed_ms: self.current.elapsed.as_secs_f64() * 1e3,
        });
    }

    /// Gallery scores of the latest round, probe dropped.
    pub fn gallery_scores(&self) -> Vec<f64> {
        let mut f = self.current.refined_f.clone();
        f.truncate(f.len().saturating_sub(1));
        f
    }

    pub fn transcript(&self) -> SessionTranscript {
        SessionTranscript {
            params: self.params,
            rounds: self.history.clone(),
        }
    }
}

/// Result of a complete session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    /// Final gallery scores `f*` (length `n`, probe removed).
    pub final_scores: Vec<f64>,
    pub rounds: Vec<RoundResult>,
    pub transcript: SessionTranscript,
}

/// Runs `params.rounds + 1` rounds, asking `oracle` to label the
/// suggestions of every round but the last.
pub fn run_session(
    a: &AffinityMatrix,
    oracle: &mut dyn Oracle,
    params: &SessionParams,
    initial_rank: &[usize],
    initial_scores: Option<&[f64]>,
) -> std::result::Result<SessionOutcome, SessionError> {
    let mut session = Session::start(
        a.clone(),
        *params,
        initial_rank.to_vec(),
        initial_scores.map(<[f64]>::to_vec),
    )?;
    let mut rounds = vec![session.current().clone()];
    while !session.is_final_round() {
        let current = session.current();
        let labels = oracle
            .label(current.round_index, &current.suggestions)
            .map_err(|source| SessionError::Oracle {
                partial: Box::new(session.transcript()),
                source,
            })?;
        if let Step::Next(result) = session.submit(&labels)? {
            rounds.push(result);
        }
    }
    session.finish();
    Ok(SessionOutcome {
        final_scores: session.gallery_scores(),
        rounds,
        transcript: session.transcript(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct AllRelevant;

    impl Oracle for AllRelevant {
        fn label(&mut self, _: usize, s: &[usize]) -> std::result::Result<BTreeMap<usize, Label>, OracleError> {
            Ok(s.iter().map(|&i| (i, Label::Relevant)).collect())
        }
    }

    struct Failing;

    impl Oracle for Failing {
        fn label(&mut self, round: usize, _: &[usize]) -> std::result::Result<BTreeMap<usize, Label>, OracleError> {
            if round == 0 {
                Ok(BTreeMap::new())
            } else {
                Err(OracleError("annotator left".into()))
            }
        }
    }

    fn pair() -> AffinityMatrix {
        AffinityMatrix::new(2, vec![0.0, 0.5, 0.5, 0.0]).unwrap()
    }

    fn chain(m: usize) -> AffinityMatrix {
        AffinityMatrix::from_upper(m, |i, j| 1.0 / (1.0 + (j - i) as f64))
    }

    #[test]
    fn single_round_composition() {
        let params = SessionParams {
            rounds: 0,
            ..Default::default()
        };
        let out = run_session(&pair(), &mut AllRelevant, &params, &[0, 1], None).unwrap();
        assert_eq!(out.rounds.len(), 1);
        assert_eq!(out.rounds[0].refined_f, vec![0.0, 1.0]);
        assert_eq!(out.rounds[0].suggestions, vec![0]);
        assert_eq!(out.final_scores, vec![0.0]);
    }

    #[test]
    fn default_budget_consumes_q_times_rounds_labels() {
        let m = 40;
        let rank: Vec<usize> = (0..m).collect();
        let out = run_session(&chain(m), &mut AllRelevant, &SessionParams::default(), &rank, None).unwrap();
        assert_eq!(out.rounds.len(), 5);
        let labels: usize = out.transcript.labels().map(BTreeMap::len).sum();
        assert_eq!(labels, 20);
        assert_eq!(out.final_scores.len(), m - 1);
    }

    #[test]
    fn mr_baseline_forces_unit_confidence() {
        let m = 6;
        let params = SessionParams {
            mr_baseline: true,
            ..Default::default()
        };
        let mut state = init_state(m, m - 1, &params, None).unwrap();
        run_round(&chain(m), &mut state, &params, &(0..m).collect::<Vec<_>>()).unwrap();
        assert!(state.v().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn q_larger_than_pool_returns_pool() {
        let params = SessionParams {
            q: 50,
            ..Default::default()
        };
        let m = 7;
        let mut state = init_state(m, m - 1, &params, None).unwrap();
        let r = run_round(&chain(m), &mut state, &params, &(0..m).collect::<Vec<_>>()).unwrap();
        let mut s = r.suggestions.clone();
        s.sort_unstable();
        assert_eq!(s, (0..m - 1).collect::<Vec<_>>());
    }

    #[test]
    fn submit_rejects_unsuggested_and_defaults_to_unsure() {
        let m = 8;
        let mut session = Session::start(chain(m), SessionParams::default(), (0..m).collect(), None).unwrap();
        let suggested = session.current().suggestions.clone();
        let outside = (0..m - 1).find(|i| !suggested.contains(i)).unwrap();
        assert!(matches!(
            session.submit(&BTreeMap::from([(outside, Label::Relevant)])),
            Err(SessionError::NotSuggested { .. })
        ));
        session.submit(&BTreeMap::new()).unwrap();
        assert_eq!(session.state().skipped().len(), suggested.len());
        assert_eq!(session.state().labeled().len(), 1);
    }

    #[test]
    fn oracle_failure_keeps_partial_transcript() {
        let m = 10;
        let err = run_session(
            &chain(m),
            &mut Failing,
            &SessionParams::default(),
            &(0..m).collect::<Vec<_>>(),
            None,
        )
        .unwrap_err();
        match err {
            SessionError::Oracle { partial, .. } => assert_eq!(partial.rounds.len(), 1),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn qp_mode_alternates_and_stays_feasible() {
        let m = 12;
        let params = SessionParams {
            solver: SolverMode::Qp,
            ..Default::default()
        };
        let out = run_session(&chain(m), &mut AllRelevant, &params, &(0..m).collect::<Vec<_>>(), None).unwrap();
        for r in &out.rounds {
            assert!(r.converged);
            assert!(r.alternations >= 1 && r.alternations <= params.qp.alternation_cap);
            assert!(r.refined_f.iter().all(|x| (0.0..=1.0).contains(x)));
            assert!(r.confidence.iter().all(|x| (0.0..=1.0).contains(x)));
        }
    }

    #[test]
    fn skipping_ranking_step_keeps_initial_scores() {
        let m = 5;
        let params = SessionParams {
            ranking_step: false,
            ..Default::default()
        };
        let scores = vec![0.9, 0.7, 0.5, 0.3, 1.0];
        let mut session = Session::start(chain(m), params, (0..m).collect(), Some(scores.clone())).unwrap();
        assert_eq!(session.current().refined_f, scores);
        let first = session.current().suggestions[0];
        let step = session.submit(&BTreeMap::from([(first, Label::Irrelevant)])).unwrap();
        let Step::Next(r) = step else { panic!() };
        assert_eq!(r.refined_f[first], 0.0);
        assert!(Session::start(chain(m), params, (0..m).collect(), None).is_err());
    }

    #[test]
    fn transcript_round_trips_through_json() {
        let m = 15;
        let rank: Vec<usize> = (0..m).collect();
        let out = run_session(&chain(m), &mut AllRelevant, &SessionParams::default(), &rank, None).unwrap();
        let json = serde_json::to_string(&out.transcript).unwrap();
        let back: SessionTranscript = serde_json::from_str(&json).unwrap();
        assert_eq!(back, out.transcript);
        let replay = run_session(&chain(m), &mut ReplayOracle::new(&back), &back.params, &rank, None).unwrap();
        for (a, b) in replay.transcript.rounds.iter().zip(&out.transcript.rounds) {
            assert_eq!(a.f, b.f);
        }
    }
}
