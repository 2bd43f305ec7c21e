//! Candidate selection from the eligible pool.

use rand::seq::IteratorRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::state::RankingState;

/// Up to `q` eligible samples ordered by ascending `v`, ties broken by
/// ascending initial-rank position and then by index.
///
/// `initial_rank[i]` is the position of sample `i` in the initial ranking.
pub fn select_candidates(v: &[f64], state: &RankingState, q: usize, initial_rank: &[usize]) -> Vec<usize> {
    let mut pool: Vec<usize> = state.eligible().collect();
    pool.sort_by(|&a, &b| {
        v[a].total_cmp(&v[b])
            .then(initial_rank[a].cmp(&initial_rank[b]))
            .then(a.cmp(&b))
    });
    pool.truncate(q);
    pool
}

/// Uniform sample of up to `q` eligible samples, in ascending index order.
///
/// The stream is keyed by `(seed, round)` so a round's draw does not depend
/// on earlier rounds.
pub fn select_random(state: &RankingState, q: usize, seed: u64, round: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(round as u64);
    let mut picked = state.eligible().choose_multiple(&mut rng, q);
    picked.sort_unstable();
    picked
}
