//! Soft-margin SVM dual for a fixed precomputed kernel.
//!
//! Every MKL solver in this crate reduces to repeated calls of this problem
//! with a reweighted Hessian, so the solver accepts a warm start and
//! per-sample box bounds (the latter for boosting's weighted samples).

mod oracle;
mod smo;

use nalgebra::DMatrix;

use crate::error::{invalid, MklError, Result};
use crate::kernels::{eigen_range, psd_noise_floor};

pub use self::oracle::{brute_force_svm, BRUTE_FORCE_MAX_POINTS};

/// Default stopping tolerance on the maximal KKT violation.
pub const DEFAULT_KKT_TOL: f64 = 1e-4;

/// Support vectors are the indices with `αᵢ > SUPPORT_RTOL · C`.
pub const SUPPORT_RTOL: f64 = 1e-8;

/// Relative tolerance on negative eigenvalues of `Q` accepted by [`solve_svm`].
pub const PSD_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SvmSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    /// Box parameter. With per-sample bounds this is the base value they
    /// were scaled from.
    pub c: f64,
    /// `½ αᵀQα − 1ᵀα` at the returned point.
    pub objective: f64,
    pub support_indices: Vec<usize>,
    pub iterations: usize,
    /// Maximal KKT violation at return.
    pub kkt_violation: f64,
    pub converged: bool,
}

impl SvmSolution {
    /// Decision values `Σᵢ αᵢyᵢ cross[i, t] − b` for each test column `t`.
    pub fn decision_values(&self, labels: &[f64], cross: &DMatrix<f64>) -> Result<Vec<f64>> {
        if cross.nrows() != self.alpha.len() || labels.len() != self.alpha.len() {
            return Err(MklError::DimensionMismatch(format!(
                "model has {} training points, cross kernel has {} rows",
                self.alpha.len(),
                cross.nrows()
            )));
        }
        Ok(decision_values(&self.alpha, labels, cross, self.bias))
    }
}

pub(crate) fn decision_values(alpha: &[f64], y: &[f64], cross: &DMatrix<f64>, bias: f64) -> Vec<f64> {
    let coef: Vec<f64> = alpha.iter().zip(y).map(|(a, y)| a * y).collect();
    (0..cross.ncols())
        .map(|t| {
            let col = cross.column(t);
            coef.iter().zip(col.iter()).filter(|(c, _)| **c != 0.0).map(|(c, k)| c * k).sum::<f64>()
                - bias
        })
        .collect()
}

/// `sign` with `sign(0) = +1`.
pub fn sign_label(f: f64) -> i64 {
    if f >= 0.0 {
        1
    } else {
        -1
    }
}

/// `YKY` for labels `y ∈ {−1, +1}`.
pub fn label_conjugate(k: &DMatrix<f64>, y: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| y[i] * y[j] * k[(i, j)])
}

pub(crate) fn check_binary_problem(y: &[f64]) -> Result<()> {
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return invalid("labels must be -1 or +1");
    }
    let pos = y.iter().filter(|&&v| v > 0.0).count();
    if pos == 0 || pos == y.len() {
        return Err(MklError::Infeasible("both classes must be present".into()));
    }
    Ok(())
}

fn check_c(c: f64) -> Result<()> {
    if !(c.is_finite() && c > 0.0) {
        return invalid(format!("C must be positive and finite, got {c}"));
    }
    Ok(())
}

/// Solves the SVM dual with Hessian `q` (already label-conjugated).
pub fn solve_svm(q: &DMatrix<f64>, labels: &[f64], c: f64, kkt_tol: f64) -> Result<SvmSolution> {
    validate_problem(q, labels, c)?;
    if !(kkt_tol.is_finite() && kkt_tol > 0.0) {
        return invalid(format!("kkt_tol must be positive, got {kkt_tol}"));
    }
    Ok(solve_unchecked(q, labels, &vec![c; labels.len()], c, None, kkt_tol))
}

pub(crate) fn validate_problem(q: &DMatrix<f64>, labels: &[f64], c: f64) -> Result<()> {
    check_c(c)?;
    if !q.is_square() || q.nrows() != labels.len() {
        return Err(MklError::DimensionMismatch(format!(
            "Hessian is {}x{} for {} labels",
            q.nrows(),
            q.ncols(),
            labels.len()
        )));
    }
    check_binary_problem(labels)?;
    if q.iter().any(|v| !v.is_finite()) {
        return invalid("Hessian has non-finite entries");
    }
    let scale = q.amax().max(f64::MIN_POSITIVE);
    let m = q.nrows();
    for i in 0..m {
        for j in (i + 1)..m {
            if (q[(i, j)] - q[(j, i)]).abs() > 1e-12 * scale {
                return Err(MklError::MatrixValidation(format!("Hessian is not symmetric at ({i},{j})")));
            }
        }
    }
    let (lo, hi) = eigen_range(q);
    if lo < -(PSD_RTOL * hi.abs()).max(psd_noise_floor(m, hi)) {
        return Err(MklError::MatrixValidation(format!(
            "Hessian is not positive semidefinite (min eigenvalue {lo:e})"
        )));
    }
    Ok(())
}

/// Solver entry used internally once inputs have been validated.
pub(crate) fn solve_unchecked(
    q: &DMatrix<f64>,
    labels: &[f64],
    upper: &[f64],
    c: f64,
    warm: Option<&[f64]>,
    kkt_tol: f64,
) -> SvmSolution {
    let out = smo::solve(q, labels, upper, warm, kkt_tol, smo::default_max_iter(labels.len()));
    finish(labels, upper, c, out.alpha, &out.gradient, out.iterations, out.violation, out.converged)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn finish(
    labels: &[f64],
    upper: &[f64],
    c: f64,
    alpha: Vec<f64>,
    grad: &[f64],
    iterations: usize,
    kkt_violation: f64,
    converged: bool,
) -> SvmSolution {
    let bias = smo::bias(labels, &alpha, upper, grad);
    let objective = 0.5 * alpha.iter().zip(grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>();
    let support_indices =
        alpha.iter().enumerate().filter(|(_, &a)| a > SUPPORT_RTOL * c).map(|(i, _)| i).collect();
    SvmSolution { alpha, bias, c, objective, support_indices, iterations, kkt_violation, converged }
}

/// `½ αᵀQα − 1ᵀα` evaluated directly.
pub fn dual_objective(q: &DMatrix<f64>, alpha: &[f64]) -> f64 {
    quad_form(q, alpha) * 0.5 - alpha.iter().sum::<f64>()
}

/// `αᵀAα`, skipping zero entries of `α`.
pub(crate) fn quad_form(a: &DMatrix<f64>, alpha: &[f64]) -> f64 {
    let mut total = 0.0;
    for (j, &aj) in alpha.iter().enumerate() {
        if aj == 0.0 {
            continue;
        }
        let col = a.column(j);
        let mut s = 0.0;
        for (i, &ai) in alpha.iter().enumerate() {
            s += ai * col[i];
        }
        total += aj * s;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> (DMatrix<f64>, Vec<f64>) {
        let k = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let y = vec![1.0, -1.0];
        (label_conjugate(&k, &y), y)
    }

    #[test]
    fn two_point_analytic() {
        // min ½(a₁+a₂)² − a₁ − a₂ with a₁ = a₂ gives a = ½; b = y·G = 0.
        let (q, y) = two_point();
        let s = solve_svm(&q, &y, 10.0, 1e-10).unwrap();
        assert!((s.alpha[0] - 0.5).abs() < 1e-12);
        assert!((s.alpha[1] - 0.5).abs() < 1e-12);
        assert!(s.bias.abs() < 1e-12);
        assert!((s.objective + 0.5).abs() < 1e-12);
        assert_eq!(s.support_indices, vec![0, 1]);
    }

    #[test]
    fn vanishing_box() {
        let (q, y) = two_point();
        let s = solve_svm(&q, &y, 1e-9, DEFAULT_KKT_TOL).unwrap();
        assert!(s.alpha.iter().all(|&a| a <= 1e-9));
        assert!(s.objective.abs() < 1e-8);
    }

    #[test]
    fn single_class_is_infeasible() {
        let q = DMatrix::identity(2, 2);
        assert!(matches!(solve_svm(&q, &[1.0, 1.0], 1.0, 1e-4), Err(MklError::Infeasible(_))));
    }

    #[test]
    fn indefinite_hessian_rejected() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(solve_svm(&q, &[1.0, -1.0], 1.0, 1e-4), Err(MklError::MatrixValidation(_))));
    }

    #[test]
    fn bad_c_rejected() {
        let (q, y) = two_point();
        assert!(solve_svm(&q, &y, 0.0, 1e-4).is_err());
        assert!(solve_svm(&q, &y, f64::NAN, 1e-4).is_err());
    }

    #[test]
    fn decision_function_on_two_points() {
        let (q, y) = two_point();
        let s = solve_svm(&q, &y, 10.0, 1e-10).unwrap();
        // test points x = 2 and x = -0.5 under the linear kernel
        let cross = DMatrix::from_row_slice(2, 2, &[2.0, -0.5, -2.0, 0.5]);
        let f = s.decision_values(&y, &cross).unwrap();
        assert!((f[0] - 2.0).abs() < 1e-12);
        assert!((f[1] + 0.5).abs() < 1e-12);
        assert_eq!(sign_label(0.0), 1);
    }

    #[test]
    fn warm_start_never_increases_objective() {
        let k = DMatrix::from_row_slice(
            4,
            4,
            &[2.0, 0.5, 0.1, 0.0, 0.5, 1.0, 0.2, 0.3, 0.1, 0.2, 1.5, 0.4, 0.0, 0.3, 0.4, 1.2],
        );
        let y = vec![1.0, 1.0, -1.0, -1.0];
        let q = label_conjugate(&k, &y);
        let start = vec![0.3, 0.1, 0.2, 0.2];
        let before = dual_objective(&q, &start);
        let s = solve_unchecked(&q, &y, &[1.0; 4], 1.0, Some(&start), 1e-12);
        assert!(s.objective <= before);
        assert!((s.objective - dual_objective(&q, &s.alpha)).abs() < 1e-12);
    }
}
