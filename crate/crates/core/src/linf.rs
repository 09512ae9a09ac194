//! Block l-∞ regularized MKL.
//!
//! The dual couples the SVM variables `α` with kernel weights `λ` on the
//! simplex:
//!
//! ```text
//! min_{α, λ}  ½ αᵀQ(λ)α − 1ᵀα,   Q(λ) = ½ Σₖ YKₖY / λₖ
//! s.t.        0 ≤ α ≤ C,  yᵀα = 0,  λ ≥ 0,  1ᵀλ = 1
//! ```
//!
//! The objective is jointly convex, so alternating between an SVM solve in
//! `α` and the closed-form `λ` step gives a non-increasing objective. With
//! `Dₖ = ½ αᵀYKₖYα` the objective at a point is `½ Σₖ Dₖ/λₖ − 1ᵀα` and the
//! `λ` step is [`lambda_update`]. The solver applies it with a small floor
//! on every weight (see [`MklOptions::weight_floor`]).

use std::fmt;

use nalgebra::DMatrix;

use crate::combine::{check_finite, relative_change, to_labels, weighted_decision, Conjugated, MklOptions};
use crate::error::{MklError, Result};
use crate::kernels::GramSet;
use crate::simplex::{floored_sqrt_ratio_update, max_abs_diff, ratio_objective, sqrt_ratio_update, uniform};
use crate::svm::{solve_unchecked, SvmSolution};

/// Which formulation produced a [`LinfModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MklKind {
    Linf,
    L1,
    L2,
}

impl MklKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MklKind::Linf => "linf",
            MklKind::L1 => "l1",
            MklKind::L2 => "l2",
        }
    }

    /// How kernel weights enter the SVM Hessian and the decision function.
    pub fn convention(&self) -> &'static str {
        match self {
            MklKind::Linf => "hessian=sum_k YK_kY/(2*lambda_k);decision=sum_k K_k/(2*lambda_k)",
            MklKind::L1 => "hessian=sum_k lambda_k*YK_kY;decision=sum_k lambda_k*K_k",
            MklKind::L2 => "hessian=sum_k YK_kY;decision=sum_k K_k",
        }
    }
}

impl fmt::Display for MklKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MklKind {
    type Err = MklError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linf" => Ok(MklKind::Linf),
            "l1" => Ok(MklKind::L1),
            "l2" => Ok(MklKind::L2),
            other => Err(MklError::Parse(format!("unknown MKL kind `{other}`"))),
        }
    }
}

/// Kernel weights plus the SVM solved under them. Shared by the l-∞ solver
/// and the l-1/l-2 baselines; `kind` decides how `lambda` is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct LinfModel {
    pub kind: MklKind,
    pub lambda: Vec<f64>,
    pub svm: SvmSolution,
    /// Training labels as ±1.
    pub labels: Vec<f64>,
    /// Dual objective after each weight update.
    pub objective_trace: Vec<f64>,
    /// Weights after each update, aligned with `objective_trace`.
    pub lambda_trace: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
    /// Set when `α = 0` made every `Dₖ` vanish and the weights were frozen.
    pub degenerate: bool,
}

impl LinfModel {
    /// Per-kernel multipliers applied to `Kₖ` in the decision function.
    pub fn kernel_coefficients(&self) -> Vec<f64> {
        match self.kind {
            MklKind::Linf => linf_coefficients(&self.lambda),
            MklKind::L1 => self.lambda.clone(),
            MklKind::L2 => vec![1.0; self.lambda.len()],
        }
    }

    pub fn convention(&self) -> &'static str {
        self.kind.convention()
    }

    /// `f(x) = Σᵢ αᵢyᵢ Σₖ coefₖ Kₖ(xᵢ, x) − b` for each test column.
    pub fn decision_values(&self, slices: &[DMatrix<f64>]) -> Result<Vec<f64>> {
        weighted_decision(&self.svm.alpha, &self.labels, self.svm.bias, &self.kernel_coefficients(), slices)
    }

    pub fn predict(&self, slices: &[DMatrix<f64>]) -> Result<Vec<i64>> {
        Ok(to_labels(&self.decision_values(slices)?))
    }

    /// Final objective value, if any iteration ran.
    pub fn objective(&self) -> Option<f64> {
        self.objective_trace.last().copied()
    }
}

pub(crate) fn linf_coefficients(lambda: &[f64]) -> Vec<f64> {
    lambda.iter().map(|&l| if l > 0.0 { 1.0 / (2.0 * l) } else { 0.0 }).collect()
}

/// `λₖ = √Dₖ / Σⱼ √Dⱼ`.
pub fn lambda_update(d: &[f64]) -> Result<Vec<f64>> {
    sqrt_ratio_update(d)
}

/// `½ Σₖ Dₖ/λₖ − 1ᵀα`.
pub(crate) fn split_objective(d: &[f64], weights: &[f64], alpha: &[f64]) -> f64 {
    0.5 * ratio_objective(d, weights) - alpha.iter().sum::<f64>()
}

/// Alternating minimization for the l-∞ dual, starting from uniform weights.
pub fn fit_linf(g: &GramSet, opts: &MklOptions) -> Result<LinfModel> {
    opts.validate()?;
    let prob = Conjugated::new(g)?;
    let m = prob.m();
    let upper = vec![opts.c; m];

    let mut lambda = uniform(g.num_kernels());
    let mut alpha: Option<Vec<f64>> = None;
    let mut trace = Vec::new();
    let mut lambda_trace = Vec::new();
    let mut converged = false;
    let mut degenerate = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        let h = prob.hessian(&linf_coefficients(&lambda));
        let warm = if opts.warm_start { alpha.as_deref() } else { None };
        let sol = solve_unchecked(&h, &prob.labels, &upper, opts.c, warm, opts.kkt_tol);
        let d: Vec<f64> = prob.quad_forms(&sol.alpha).into_iter().map(|v| 0.5 * v).collect();
        check_finite(&d, "kernel contributions")?;
        let next = match floored_sqrt_ratio_update(&d, opts.weight_floor) {
            Ok(next) => next,
            Err(MklError::DegenerateDirection) => {
                degenerate = true;
                converged = true;
                trace.push(split_objective(&d, &lambda, &sol.alpha));
                lambda_trace.push(lambda.clone());
                alpha = Some(sol.alpha);
                break;
            }
            Err(e) => return Err(e),
        };
        let obj = split_objective(&d, &next, &sol.alpha);
        let moved = max_abs_diff(&next, &lambda);
        let small_change = trace.last().is_some_and(|&prev| relative_change(prev, obj) < opts.obj_tol);
        trace.push(obj);
        lambda_trace.push(next.clone());
        lambda = next;
        alpha = Some(sol.alpha);
        if small_change || moved < opts.weight_tol {
            converged = true;
            break;
        }
    }

    // final SVM under the returned weights so that (α, b, λ) are consistent
    let h = prob.hessian(&linf_coefficients(&lambda));
    let svm = solve_unchecked(&h, &prob.labels, &upper, opts.c, alpha.as_deref(), opts.kkt_tol);
    Ok(LinfModel {
        kind: MklKind::Linf,
        lambda,
        svm,
        labels: prob.labels,
        objective_trace: trace,
        lambda_trace,
        iterations,
        converged,
        degenerate,
    })
}

/// Labels for test columns; `slices[k]` holds `Kₖ(xᵢ, x)` for training rows
/// `i` and test columns.
pub fn predict_linf(model: &LinfModel, slices: &[DMatrix<f64>]) -> Result<Vec<i64>> {
    model.predict(slices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::GramMatrix;

    fn toy_set(kernels: usize) -> GramSet {
        let xs = [-2.0, -1.2, -0.4, 0.3, 1.1, 2.2];
        let labels = vec![-1, -1, -1, 1, 1, 1];
        let grams = (0..kernels)
            .map(|k| {
                let s = 1.0 + k as f64;
                GramMatrix::new(DMatrix::from_fn(6, 6, |i, j| {
                    (-(xs[i] - xs[j]) * (xs[i] - xs[j]) / (2.0 * s * s)).exp()
                }))
                .unwrap()
            })
            .collect();
        GramSet::new(grams, labels).unwrap()
    }

    #[test]
    fn single_kernel_has_unit_weight() {
        let m = fit_linf(&toy_set(1), &MklOptions::new(1.0)).unwrap();
        assert_eq!(m.lambda, vec![1.0]);
        assert!(m.converged);
        assert_eq!(m.kernel_coefficients(), vec![0.5]);
    }

    #[test]
    fn identical_kernels_stay_uniform() {
        let base = toy_set(1);
        let g = GramSet::new(vec![base.kernels()[0].clone(); 3], base.labels().to_vec()).unwrap();
        let m = fit_linf(&g, &MklOptions::new(1.0)).unwrap();
        for l in &m.lambda_trace {
            assert!(l.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-12));
        }
    }

    #[test]
    fn trace_is_monotone_and_weights_positive() {
        let m = fit_linf(&toy_set(3), &MklOptions::new(2.0)).unwrap();
        for w in m.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
        assert!(m.lambda.iter().all(|&l| l > 0.0));
        assert!((m.lambda.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_alpha_freezes_weights() {
        // a zero kernel makes every Dₖ vanish even though α sits at the box
        let g = GramSet::new(
            vec![GramMatrix::new(DMatrix::zeros(4, 4)).unwrap()],
            vec![1, -1, 1, -1],
        )
        .unwrap();
        let m = fit_linf(&g, &MklOptions::new(1.0)).unwrap();
        assert!(m.degenerate);
        assert_eq!(m.lambda, vec![1.0]);
    }

    #[test]
    fn predict_checks_dimensions() {
        let m = fit_linf(&toy_set(2), &MklOptions::new(1.0)).unwrap();
        assert!(m.predict(&[DMatrix::zeros(6, 2)]).is_err());
        assert!(m.predict(&[DMatrix::zeros(5, 2), DMatrix::zeros(5, 2)]).is_err());
        assert_eq!(m.predict(&[DMatrix::zeros(6, 2), DMatrix::zeros(6, 2)]).unwrap().len(), 2);
    }

    #[test]
    fn kind_round_trips_through_str() {
        for k in [MklKind::Linf, MklKind::L1, MklKind::L2] {
            assert_eq!(k.as_str().parse::<MklKind>().unwrap(), k);
        }
    }
}
