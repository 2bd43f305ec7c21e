//! Dense pairwise affinity over the gallery plus the probe.

use crate::error::{CaafError, Result};

/// Tolerance used when validating externally supplied matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Symmetric, nonnegative, zero-diagonal similarity matrix over `m = n + 1`
/// samples. The probe occupies the last row and column.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    m: usize,
    entries: Vec<f64>,
}

impl AffinityMatrix {
    /// Validates and wraps a row-major `m × m` buffer.
    pub fn new(m: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != m * m {
            return Err(CaafError::DimensionMismatch {
                expected: m * m,
                actual: entries.len(),
            });
        }
        for i in 0..m {
            if entries[i * m + i] != 0.0 {
                return Err(CaafError::InvalidAffinity(format!(
                    "diagonal entry ({i}, {i}) is {}",
                    entries[i * m + i]
                )));
            }
            for j in 0..m {
                let a = entries[i * m + j];
                if !(0.0..=1.0).contains(&a) {
                    return Err(CaafError::InvalidAffinity(format!(
                        "entry ({i}, {j}) = {a} outside [0, 1]"
                    )));
                }
                if (a - entries[j * m + i]).abs() > SYMMETRY_TOL {
                    return Err(CaafError::InvalidAffinity(format!("entry ({i}, {j}) is not symmetric")));
                }
            }
        }
        Ok(Self { m, entries })
    }

    /// Builds a matrix from a similarity function evaluated on the upper
    /// triangle. Values are clamped to `[0, 1]`, mirrored, and the diagonal is
    /// zeroed, so the result always satisfies the type invariants.
    pub fn from_upper<F>(m: usize, mut sim: F) -> Self
    where
        F: FnMut(usize, usize) -> f64,
    {
        let mut entries = vec![0.0; m * m];
        for i in 0..m {
            for j in (i + 1)..m {
                let raw = sim(i, j);
                let a = if raw.is_nan() { 0.0 } else { raw.clamp(0.0, 1.0) };
                entries[i * m + j] = a;
                entries[j * m + i] = a;
            }
        }
        Self { m, entries }
    }

    pub fn zeros(m: usize) -> Self {
        Self {
            m,
            entries: vec![0.0; m * m],
        }
    }

    /// Number of samples, gallery plus probe.
    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn probe_index(&self) -> usize {
        self.m - 1
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.m + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.m..(i + 1) * self.m]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    /// Restricts the matrix to `indices`, in the given order.
    pub fn submatrix(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.m) {
            return Err(CaafError::IndexOutOfRange { index: bad, m: self.m });
        }
        let k = indices.len();
        let mut entries = Vec::with_capacity(k * k);
        for &i in indices {
            for &j in indices {
                entries.push(self.get(i, j));
            }
        }
        Ok(Self { m: k, entries })
    }
}
