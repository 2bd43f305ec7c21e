use faer::linalg::solvers::Solve;
use faer::{Mat, Side};

use crate::error::{CaafError, Result};

/// Solves `M x = b` for a symmetric positive-definite row-major `M`.
pub(crate) fn solve_spd(matrix: &[f64], m: usize, rhs: &[f64]) -> Result<Vec<f64>> {
    let a = Mat::<f64>::from_fn(m, m, |i, j| matrix[i * m + j]);
    let b = Mat::<f64>::from_fn(m, 1, |i, _| rhs[i]);
    let llt = a.llt(Side::Lower).map_err(|_| CaafError::SingularSystem)?;
    let x = llt.solve(&b);
    let out: Vec<f64> = (0..m).map(|i| x[(i, 0)]).collect();
    if out.iter().all(|x| x.is_finite()) {
        Ok(out)
    } else {
        Err(CaafError::SingularSystem)
    }
}

pub(crate) fn matvec(matrix: &[f64], x: &[f64], out: &mut [f64]) {
    let m = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = matrix[i * m..(i + 1) * m].iter().zip(x).map(|(a, b)| a * b).sum();
    }
}
