//! The ranking step: confidence-weighted manifold ranking of `f` with `v` fixed.
//!
//! With `ṽ_ij = v_i + v_j`, `ã_ij = ṽ_ij a_ij`, `D = diag(Σ_j ã_ij)`,
//! `Q = diag(α Σ_j ṽ_ij)` and `P = D − Ã`, the step minimizes
//! `fᵀ(P + Q)f − 2 fᵀQy`. The approximate route solves the unconstrained
//! system and rescales unlabeled scores into `[0, 1]`; the QP route keeps the
//! box and the labeled pins as hard constraints.

use serde::{Deserialize, Serialize};

use crate::affinity::AffinityMatrix;
use crate::error::{CaafError, Result};
use crate::linalg::{matvec, solve_spd};
use crate::params::QpOptions;
use crate::state::RankingState;

/// The quadratic `fᵀ M f − 2 fᵀ b` with `M = P + Q` and `b = Q y`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingSystem {
    m: usize,
    /// Row-major `P + Q`.
    matrix: Vec<f64>,
    rhs: Vec<f64>,
}

impl RankingSystem {
    pub fn build(a: &AffinityMatrix, v: &[f64], y: &[f64], alpha: f64) -> Result<Self> {
        let m = a.dim();
        for len in [v.len(), y.len()] {
            if len != m {
                return Err(CaafError::DimensionMismatch {
                    expected: m,
                    actual: len,
                });
            }
        }
        let v_sum: f64 = v.iter().sum();
        let mut matrix = vec![0.0; m * m];
        let mut rhs = vec![0.0; m];
        for i in 0..m {
            let row = a.row(i);
            let mut degree = 0.0;
            for j in 0..m {
                if j == i {
                    continue;
                }
                let w = (v[i] + v[j]) * row[j];
                matrix[i * m + j] = -w;
                degree += w;
            }
            let q = alpha * (m as f64 * v[i] + v_sum);
            matrix[i * m + i] = degree + q;
            rhs[i] = q * y[i];
        }
        Ok(Self { m, matrix, rhs })
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    /// Row-major `P + Q`.
    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    /// `Q y`.
    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// Unconstrained minimizer `f̂` of the quadratic.
    pub fn solve(&self) -> Result<Vec<f64>> {
        solve_spd(&self.matrix, self.m, &self.rhs)
    }

    /// `fᵀ M f − 2 fᵀ b`.
    pub fn objective(&self, f: &[f64]) -> f64 {
        let mut mf = vec![0.0; self.m];
        matvec(&self.matrix, f, &mut mf);
        quad_value(f, &mf, &self.rhs)
    }
}

fn quad_value(x: &[f64], mx: &[f64], b: &[f64]) -> f64 {
    x.iter()
        .zip(mx)
        .zip(b)
        .map(|((xi, mxi), bi)| xi * mxi - 2.0 * xi * bi)
        .sum()
}

/// Closed-form ranking step. Labeled samples keep `f_i = y_i`; the rest
/// are min-max normalized over the whole of `f̂` (all zero if `f̂` is flat).
pub fn ranking_step_approx(a: &AffinityMatrix, state: &RankingState, alpha: f64) -> Result<Vec<f64>> {
    let f_hat = RankingSystem::build(a, state.v(), state.y(), alpha)?.solve()?;
    Ok(normalize_scores(&f_hat, state))
}

pub(crate) fn normalize_scores(f_hat: &[f64], state: &RankingState) -> Vec<f64> {
    let (lo, hi) = f_hat.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    });
    let span = hi - lo;
    f_hat
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            if let Some(&s) = state.labeled().get(&i) {
                f64::from(s)
            } else if span > 0.0 {
                ((x - lo) / span).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect()
}

/// Result of the box-constrained ranking QP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub f: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Infinity norm of the projected gradient at `f`.
    pub projected_gradient: f64,
}

/// Ranking step as a QP: `0 ≤ f ≤ 1`, `f_i = y_i` for labeled samples.
///
/// Solved by accelerated projected gradient in the Jacobi-scaled metric,
/// with gradient-based restarts, warm-started from the current `f`. Returns
/// the best iterate seen; `converged` is false when `max_iter` ran out first.
pub fn ranking_step_qp(a: &AffinityMatrix, state: &RankingState, alpha: f64, opts: &QpOptions) -> Result<QpSolution> {
    let system = RankingSystem::build(a, state.v(), state.y(), alpha)?;
    let pins: Vec<Option<f64>> = (0..state.m())
        .map(|i| state.is_labeled(i).then(|| state.y()[i]))
        .collect();
    Ok(projected_gradient(&system, &pins, state.f(), opts))
}

pub(crate) fn projected_gradient(
    system: &RankingSystem,
    pins: &[Option<f64>],
    start: &[f64],
    opts: &QpOptions,
) -> QpSolution {
    let m = system.dim();
    let mat = system.matrix();
    let b = system.rhs();
    let diag: Vec<f64> = (0..m).map(|i| mat[i * m + i]).collect();
    let project = |i: usize, x: f64| pins[i].unwrap_or_else(|| x.clamp(0.0, 1.0));

    // ‖x − Π(x − ∇)‖∞ over free coordinates, with ∇ = 2(Mx − b).
    let pg_norm = |x: &[f64], mx: &[f64]| {
        (0..m)
            .filter(|&i| pins[i].is_none())
            .map(|i| (x[i] - (x[i] - 2.0 * (mx[i] - b[i])).clamp(0.0, 1.0)).abs())
            .fold(0.0, f64::max)
    };

    let mut x: Vec<f64> = (0..m).map(|i| project(i, start[i])).collect();
    let mut mx = vec![0.0; m];
    matvec(mat, &x, &mut mx);
    let mut x_prev = x.clone();
    let mut mx_prev = mx.clone();
    let mut t = 1.0_f64;

    let mut best = (quad_value(&x, &mx, b), x.clone(), pg_norm(&x, &mx));
    let mut z = vec![0.0; m];
    let mut x_next = vec![0.0; m];
    let mut mx_next = vec![0.0; m];

    for iter in 0..opts.max_iter {
        let pg = pg_norm(&x, &mx);
        if pg <= opts.tol {
            return QpSolution {
                f: x,
                converged: true,
                iterations: iter,
                projected_gradient: pg,
            };
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        for i in 0..m {
            z[i] = x[i] + momentum * (x[i] - x_prev[i]);
            // S⁻¹M has spectrum in (0, 2) because M is diagonally dominant.
            let mz = mx[i] + momentum * (mx[i] - mx_prev[i]);
            x_next[i] = project(i, z[i] - 0.5 * (mz - b[i]) / diag[i]);
        }
        matvec(mat, &x_next, &mut mx_next);

        let restart: f64 = (0..m).map(|i| (z[i] - x_next[i]) * (x_next[i] - x[i])).sum();
        t = if restart > 0.0 { 1.0 } else { t_next };

        std::mem::swap(&mut x_prev, &mut x);
        std::mem::swap(&mut mx_prev, &mut mx);
        std::mem::swap(&mut x, &mut x_next);
        std::mem::swap(&mut mx, &mut mx_next);

        let value = quad_value(&x, &mx, b);
        if value < best.0 {
            best = (value, x.clone(), pg_norm(&x, &mx));
        }
    }

    let pg = pg_norm(&x, &mx);
    if pg <= opts.tol {
        return QpSolution {
            f: x,
            converged: true,
            iterations: opts.max_iter,
            projected_gradient: pg,
        };
    }
    log::warn!(
        "ranking QP did not converge in {} iterations (projected gradient {:.3e})",
        opts.max_iter,
        best.2
    );
    QpSolution {
        f: best.1,
        converged: false,
        iterations: opts.max_iter,
        projected_gradient: best.2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::SessionParams;
    use crate::state::init_state;
    use approx::assert_abs_diff_eq;

    fn two_by_two() -> (AffinityMatrix, RankingState) {
        let a = AffinityMatrix::new(2, vec![0.0, 0.5, 0.5, 0.0]).unwrap();
        let s = init_state(2, 1, &SessionParams::default(), None).unwrap();
        (a, s)
    }

    #[test]
    fn two_by_two_system_matches_hand_solve() {
        let (a, s) = two_by_two();
        let sys = RankingSystem::build(&a, s.v(), s.y(), 0.01).unwrap();
        let expected = [0.51, -0.5, -0.5, 0.53];
        for (got, want) in sys.matrix().iter().zip(expected) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(sys.rhs()[1], 0.03, epsilon = 1e-15);
        let f_hat = sys.solve().unwrap();
        // Cramer: det = 0.51·0.53 − 0.25 = 0.0203
        assert_abs_diff_eq!(f_hat[0], 0.5 * 0.03 / 0.0203, epsilon = 1e-12);
        assert_abs_diff_eq!(f_hat[1], 0.51 * 0.03 / 0.0203, epsilon = 1e-12);
        assert_eq!(ranking_step_approx(&a, &s, 0.01).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn no_edges_means_flat_unlabeled_scores() {
        let a = AffinityMatrix::zeros(4);
        let s = init_state(4, 3, &SessionParams::default(), None).unwrap();
        assert_eq!(ranking_step_approx(&a, &s, 0.2).unwrap(), vec![0.0, 0.0, 0.0, 1.0]);
        let qp = ranking_step_qp(&a, &s, 0.2, &QpOptions::default()).unwrap();
        assert!(qp.converged);
        assert_eq!(qp.f, s.y());
    }

    #[test]
    fn qp_two_by_two_pins_probe() {
        let (a, s) = two_by_two();
        let qp = ranking_step_qp(&a, &s, 0.01, &QpOptions::default()).unwrap();
        assert!(qp.converged);
        assert_eq!(qp.f[1], 1.0);
        // With f_1 pinned the objective in f_0 is 0.51 f_0² − f_0.
        assert_abs_diff_eq!(qp.f[0], 0.5 / 0.51, epsilon = 1e-7);
    }

    #[test]
    fn qp_output_is_feasible_on_path_graph() {
        let a = AffinityMatrix::new(3, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
        let s = init_state(3, 2, &SessionParams::default(), None).unwrap();
        let qp = ranking_step_qp(&a, &s, 0.5, &QpOptions::default()).unwrap();
        assert!(qp.converged);
        assert!(qp.f.iter().all(|x| (0.0..=1.0).contains(x)));
        assert_eq!(qp.f[2], 1.0);
    }

    #[test]
    fn non_convergence_is_flagged() {
        let (a, s) = two_by_two();
        let opts = QpOptions {
            max_iter: 1,
            tol: 1e-300,
            ..Default::default()
        };
        let qp = ranking_step_qp(&a, &s, 0.01, &opts).unwrap();
        assert!(!qp.converged);
        assert!(qp.f.iter().all(|x| (0.0..=1.0).contains(x)));
    }
}
