//! Ground-truth-driven stand-in for the human annotator.

use std::collections::BTreeMap;

use caaf_core::{Label, Oracle, OracleError};
use caaf_data::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Answers from ground truth, abstaining with probability `unsure_rate`.
/// Never mislabels.
#[derive(Debug, Clone)]
pub struct SimulatedOracle {
    relevance: Vec<bool>,
    unsure_rate: f64,
    rng: ChaCha8Rng,
}

impl SimulatedOracle {
    /// `relevance[i]` is the ground truth of sample `i` of the session.
    pub fn new(relevance: Vec<bool>, unsure_rate: f64, seed: u64) -> Result<Self, OracleError> {
        if !(0.0..1.0).contains(&unsure_rate) {
            return Err(OracleError(format!("unsure_rate must be in [0, 1), got {unsure_rate}")));
        }
        Ok(Self {
            relevance,
            unsure_rate,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Oracle for `probe_id` over the given gallery candidates (session
    /// order). The probe itself is appended as relevant.
    pub fn for_probe(
        dataset: &Dataset,
        probe_id: &str,
        candidates: &[usize],
        unsure_rate: f64,
        seed: u64,
    ) -> Result<Self, OracleError> {
        let relevant = dataset
            .ground_truth
            .for_probe(probe_id)
            .ok_or_else(|| OracleError(format!("no ground truth for probe `{probe_id}`")))?;
        let mut relevance: Vec<bool> = candidates
            .iter()
            .map(|&g| relevant.contains(dataset.gallery.id(g)))
            .collect();
        relevance.push(true);
        Self::new(relevance, unsure_rate, seed)
    }
}

impl Oracle for SimulatedOracle {
    fn label(&mut self, _round: usize, suggestions: &[usize]) -> Result<BTreeMap<usize, Label>, OracleError> {
        suggestions
            .iter()
            .map(|&i| {
                let relevant = *self
                    .relevance
                    .get(i)
                    .ok_or_else(|| OracleError(format!("unknown sample index {i}")))?;
                let draw: f64 = self.rng.random();
                let label = if draw < self.unsure_rate {
                    Label::Unsure
                } else if relevant {
                    Label::Relevant
                } else {
                    Label::Irrelevant
                };
                Ok((i, label))
            })
            .collect()
    }
}
