//! Top-K search scheme: re-rank the head of the initial list, keep the tail.

/// Re-sorts the first `refined.len()` entries of `initial` by descending
/// refined score (stable, so ties keep their initial order) and appends the
/// remaining entries unchanged.
///
/// `refined[i]` is the score of `initial[i]`. A `refined` longer than
/// `initial` is truncated with a warning.
pub fn merge_topk<T: Clone>(initial: &[T], refined: &[f64]) -> Vec<T> {
    let k = if refined.len() > initial.len() {
        log::warn!(
            "top-K of {} exceeds gallery size {}; clamping",
            refined.len(),
            initial.len()
        );
        initial.len()
    } else {
        refined.len()
    };
    let mut head: Vec<usize> = (0..k).collect();
    head.sort_by(|&a, &b| refined[b].total_cmp(&refined[a]));
    head.into_iter()
        .map(|i| initial[i].clone())
        .chain(initial[k..].iter().cloned())
        .collect()
}
