//! Per-session ranking state and feedback bookkeeping.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{CaafError, Result};
use crate::params::SessionParams;

/// Annotator judgment for one suggested sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Relevant,
    Irrelevant,
    /// The annotator abstained; the sample is never suggested again and
    /// does not join the labeled set.
    Unsure,
}

/// Ranking scores `f`, confidences `v` and reference scores `y` over
/// `m = n + 1` samples, together with the labeled and skipped sets.
///
/// Irrelevant labels and unlabeled samples both carry `y = 0`; they differ
/// only in `v` (1 vs 0) and in that labeled samples have `f` pinned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingState {
    pub(crate) f: Vec<f64>,
    pub(crate) v: Vec<f64>,
    pub(crate) y: Vec<f64>,
    /// Feedback score `s_i ∈ {0, 1}` per labeled index; always contains the probe.
    pub(crate) labeled: BTreeMap<usize, u8>,
    pub(crate) skipped: BTreeSet<usize>,
    pub(crate) probe: usize,
    /// Initial ranking scores, used by soft initialization and the
    /// no-ranking-step ablation.
    pub(crate) initial_scores: Option<Vec<f64>>,
    pub(crate) rounds_completed: usize,
}

/// Creates the round-0 state. The probe must be the last sample.
pub fn init_state(
    m: usize,
    probe_index: usize,
    params: &SessionParams,
    initial_scores: Option<&[f64]>,
) -> Result<RankingState> {
    if m == 0 || probe_index != m - 1 {
        return Err(CaafError::ProbeNotLast {
            expected: m.saturating_sub(1),
            actual: probe_index,
        });
    }
    if let Some(scores) = initial_scores {
        if scores.len() != m {
            return Err(CaafError::DimensionMismatch {
                expected: m,
                actual: scores.len(),
            });
        }
        if let Some((index, &value)) = scores.iter().enumerate().find(|(_, s)| !(0.0..=1.0).contains(*s)) {
            return Err(CaafError::ScoreOutOfRange { index, value });
        }
    } else if params.soft_init {
        return Err(CaafError::MissingInitialScores);
    }

    let mut state = RankingState {
        f: vec![0.0; m],
        v: vec![0.0; m],
        y: vec![0.0; m],
        labeled: BTreeMap::from([(probe_index, 1)]),
        skipped: BTreeSet::new(),
        probe: probe_index,
        initial_scores: initial_scores.map(|s| {
            let mut s = s.to_vec();
            s[probe_index] = 1.0;
            s
        }),
        rounds_completed: 0,
    };
    if params.soft_init {
        state.soft_reinit();
    } else {
        state.reinit();
    }
    state.f.copy_from_slice(&state.y);
    Ok(state)
}

impl RankingState {
    pub fn m(&self) -> usize {
        self.f.len()
    }

    pub fn probe(&self) -> usize {
        self.probe
    }

    pub fn f(&self) -> &[f64] {
        &self.f
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn labeled(&self) -> &BTreeMap<usize, u8> {
        &self.labeled
    }

    pub fn skipped(&self) -> &BTreeSet<usize> {
        &self.skipped
    }

    pub fn initial_scores(&self) -> Option<&[f64]> {
        self.initial_scores.as_deref()
    }

    pub fn rounds_completed(&self) -> usize {
        self.rounds_completed
    }

    pub fn is_labeled(&self, i: usize) -> bool {
        self.labeled.contains_key(&i)
    }

    /// Unlabeled, non-skipped, non-probe samples.
    pub fn eligible(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.m()).filter(move |i| *i != self.probe && !self.labeled.contains_key(i) && !self.skipped.contains(i))
    }

    /// Resets `y` and `v` from the labeled set: `y_i = s_i`, `v_i = 1` for
    /// labeled samples, zero otherwise.
    pub fn reinit(&mut self) {
        self.y.fill(0.0);
        self.v.fill(0.0);
        for (&i, &s) in &self.labeled {
            self.y[i] = f64::from(s);
            self.v[i] = 1.0;
        }
    }

    /// Soft initialization: `y` takes the initial scores (labeled samples
    /// keep their feedback score) and `v = 1` everywhere.
    pub(crate) fn soft_reinit(&mut self) {
        if let Some(scores) = &self.initial_scores {
            self.y.copy_from_slice(scores);
        }
        for (&i, &s) in &self.labeled {
            self.y[i] = f64::from(s);
        }
        self.v.fill(1.0);
    }

    /// Replaces the confidence vector, keeping labeled samples pinned to 1.
    pub(crate) fn set_confidence(&mut self, v: &[f64]) {
        self.v.copy_from_slice(v);
        for &i in self.labeled.keys() {
            self.v[i] = 1.0;
        }
    }

    pub(crate) fn set_scores(&mut self, f: Vec<f64>) {
        debug_assert_eq!(f.len(), self.m());
        self.f = f;
    }

    /// Records annotator judgments and reinitializes `y` and `v`.
    ///
    /// The whole batch is validated before any of it is applied.
    pub fn apply_feedback(&mut self, labels: &BTreeMap<usize, Label>) -> Result<()> {
        let m = self.m();
        for &i in labels.keys() {
            if i >= m {
                return Err(CaafError::IndexOutOfRange { index: i, m });
            }
            if i == self.probe {
                return Err(CaafError::ProbeFeedback(i));
            }
            if self.labeled.contains_key(&i) {
                return Err(CaafError::AlreadyLabeled(i));
            }
        }
        for (&i, label) in labels {
            match label {
                Label::Relevant => {
                    self.skipped.remove(&i);
                    self.labeled.insert(i, 1);
                }
                Label::Irrelevant => {
                    self.skipped.remove(&i);
                    self.labeled.insert(i, 0);
                }
                Label::Unsure => {
                    self.skipped.insert(i);
                }
            }
        }
        if labels.values().any(|l| *l != Label::Unsure) {
            self.reinit();
            for (&i, &s) in &self.labeled {
                self.f[i] = f64::from(s);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn soft() -> SessionParams {
        SessionParams {
            soft_init: true,
            ..Default::default()
        }
    }

    #[test]
    fn default_init_pins_probe() {
        let s = init_state(4, 3, &SessionParams::default(), None).unwrap();
        assert_eq!(s.y(), &[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(s.v(), &[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(s.labeled(), &BTreeMap::from([(3, 1)]));
    }

    #[test]
    fn soft_init_uses_initial_scores() {
        let s = init_state(3, 2, &soft(), Some(&[0.9, 0.4, 1.0])).unwrap();
        assert_eq!(s.y(), &[0.9, 0.4, 1.0]);
        assert_eq!(s.v(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn soft_init_without_scores_fails() {
        assert_eq!(
            init_state(2, 1, &soft(), None).unwrap_err(),
            CaafError::MissingInitialScores
        );
        assert!(matches!(
            init_state(2, 1, &soft(), Some(&[1.2, 1.0])).unwrap_err(),
            CaafError::ScoreOutOfRange { index: 0, .. }
        ));
        assert!(init_state(3, 1, &SessionParams::default(), None).is_err());
    }

    #[test]
    fn relevant_feedback_reinitializes() {
        let mut s = init_state(3, 2, &SessionParams::default(), None).unwrap();
        s.apply_feedback(&BTreeMap::from([(0, Label::Relevant)])).unwrap();
        assert_eq!(s.y(), &[1.0, 0.0, 1.0]);
        assert_eq!(s.v(), &[1.0, 0.0, 1.0]);
        assert_eq!(s.labeled(), &BTreeMap::from([(0, 1), (2, 1)]));
    }

    #[test]
    fn irrelevant_differs_from_unlabeled_only_in_confidence() {
        let mut s = init_state(3, 2, &SessionParams::default(), None).unwrap();
        s.apply_feedback(&BTreeMap::from([(0, Label::Irrelevant)])).unwrap();
        assert_eq!(s.y()[0], s.y()[1]);
        assert_eq!(s.v(), &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn unsure_only_skips() {
        let mut s = init_state(3, 2, &SessionParams::default(), None).unwrap();
        let before = s.clone();
        s.apply_feedback(&BTreeMap::from([(0, Label::Unsure)])).unwrap();
        assert_eq!(s.labeled(), before.labeled());
        assert_eq!(s.skipped(), &BTreeSet::from([0]));
        assert_eq!((s.y(), s.v()), (before.y(), before.v()));
        assert_eq!(s.eligible().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn probe_and_relabel_are_rejected() {
        let mut s = init_state(3, 2, &SessionParams::default(), None).unwrap();
        assert_eq!(
            s.apply_feedback(&BTreeMap::from([(2, Label::Irrelevant)])).unwrap_err(),
            CaafError::ProbeFeedback(2)
        );
        s.apply_feedback(&BTreeMap::from([(1, Label::Relevant)])).unwrap();
        assert_eq!(
            s.apply_feedback(&BTreeMap::from([(1, Label::Irrelevant)])).unwrap_err(),
            CaafError::AlreadyLabeled(1)
        );
        // a rejected batch leaves the state untouched
        let before = s.clone();
        assert!(s
            .apply_feedback(&BTreeMap::from([(0, Label::Relevant), (1, Label::Relevant)]))
            .is_err());
        assert_eq!(s, before);
    }
}
