//! The suggestion step: confidence `v` with `f` fixed.

use std::collections::BTreeMap;

use crate::error::{CaafError, Result};
use crate::loss::LossMatrix;

/// Closed-form confidences `v_i = −Σ_j l_ij`.
///
/// Only the ordering is meaningful; values are not rescaled.
pub fn suggestion_step_approx(loss: &LossMatrix) -> Vec<f64> {
    loss.row_sums().into_iter().map(|s| -s).collect()
}

/// Minimizes `(γ/m) vᵀv + (2/m²) l̃ᵀv` with `l̃_i = Σ_j (l_ij − β)` over
/// `0 ≤ v ≤ 1`, `v_i = 1` for labeled samples.
///
/// The problem separates per coordinate, so each unlabeled entry is the
/// clamped stationary point `−l̃_i / (γ m)`.
pub fn suggestion_step_qp(loss: &LossMatrix, beta: f64, gamma: f64, labeled: &BTreeMap<usize, u8>) -> Result<Vec<f64>> {
    if beta.is_nan() || beta <= 0.0 {
        return Err(CaafError::InvalidParams(format!("beta must be positive, got {beta}")));
    }
    if gamma.is_nan() || gamma <= 0.0 {
        return Err(CaafError::InvalidParams(format!("gamma must be positive, got {gamma}")));
    }
    let m = loss.dim() as f64;
    Ok(loss
        .row_sums()
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            if labeled.contains_key(&i) {
                1.0
            } else {
                let shifted = row - m * beta;
                (-shifted / (gamma * m)).clamp(0.0, 1.0)
            }
        })
        .collect())
}
