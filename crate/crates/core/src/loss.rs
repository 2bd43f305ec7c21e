//! Pairwise manifold ranking loss and the joint confidence objective.

use crate::affinity::AffinityMatrix;
use crate::error::{CaafError, Result};

/// Dense `m × m` matrix of pairwise losses `l_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossMatrix {
    m: usize,
    entries: Vec<f64>,
}

impl LossMatrix {
    /// Wraps a row-major buffer. Only the shape is checked.
    pub fn from_entries(m: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != m * m {
            return Err(CaafError::DimensionMismatch {
                expected: m * m,
                actual: entries.len(),
            });
        }
        Ok(Self { m, entries })
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.m + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.m..(i + 1) * self.m]
    }

    /// `Σ_j l_ij` for every row.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.m).map(|i| self.row(i).iter().sum()).collect()
    }

    /// Mean of the off-diagonal entries; zero when `m < 2`.
    pub fn mean_off_diagonal(&self) -> f64 {
        if self.m < 2 {
            return 0.0;
        }
        let total: f64 = self.entries.iter().sum();
        let diag: f64 = (0..self.m).map(|i| self.get(i, i)).sum();
        (total - diag) / (self.m * (self.m - 1)) as f64
    }
}

/// `l_ij = a_ij (f_i − f_j)² + α (f_i − y_i)² + α (f_j − y_j)²`.
pub fn pairwise_loss(f: &[f64], y: &[f64], a: &AffinityMatrix, alpha: f64) -> Result<LossMatrix> {
    let m = a.dim();
    for len in [f.len(), y.len()] {
        if len != m {
            return Err(CaafError::DimensionMismatch {
                expected: m,
                actual: len,
            });
        }
    }
    let fit: Vec<f64> = f.iter().zip(y).map(|(fi, yi)| alpha * (fi - yi) * (fi - yi)).collect();
    let mut entries = vec![0.0; m * m];
    for i in 0..m {
        entries[i * m + i] = 2.0 * fit[i];
        for j in (i + 1)..m {
            let d = f[i] - f[j];
            let l = a.get(i, j) * d * d + fit[i] + fit[j];
            entries[i * m + j] = l;
            entries[j * m + i] = l;
        }
    }
    Ok(LossMatrix { m, entries })
}

/// Joint objective `(1/m²) Σ_ij (v_i + v_j)(l_ij − β) + (γ/m) ‖v‖²`.
pub fn joint_objective(loss: &LossMatrix, v: &[f64], beta: f64, gamma: f64) -> f64 {
    let m = loss.dim() as f64;
    let row_sums = loss.row_sums();
    let linear: f64 = row_sums.iter().zip(v).map(|(l, vi)| vi * (l - m * beta)).sum();
    let reg: f64 = v.iter().map(|x| x * x).sum();
    2.0 * linear / (m * m) + gamma * reg / m
}
