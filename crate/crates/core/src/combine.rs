//! Shared plumbing for the kernel-weighting solvers: label-conjugated
//! kernels, weighted Hessians and the per-kernel quadratic forms `αᵀQₖα`.

use nalgebra::DMatrix;

use crate::error::{MklError, Result};
use crate::kernels::{check_slices, GramSet};
use crate::svm::{check_binary_problem, decision_values, label_conjugate, quad_form, sign_label};

/// Default inner SVM tolerance for the alternating solvers. Tighter than the
/// stand-alone default so that objective traces are accurate well below the
/// outer stopping tolerance.
pub const DEFAULT_INNER_KKT_TOL: f64 = 1e-8;

/// Default lower bound on l-∞ weights. The exact optimum may put a weight
/// at zero, which makes its Hessian coefficient `1/(2λ)` unbounded; the
/// floor keeps the SVM subproblems solvable.
pub const DEFAULT_WEIGHT_FLOOR: f64 = 1e-6;

/// Options shared by every alternating kernel-weight solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MklOptions {
    pub c: f64,
    pub max_iter: usize,
    /// Stop when the relative objective change falls below this.
    pub obj_tol: f64,
    /// Stop when no weight moves by more than this (∞-norm).
    pub weight_tol: f64,
    pub kkt_tol: f64,
    pub warm_start: bool,
    /// Lower bound on l-∞ (and composite outer) weights; `0` disables it.
    pub weight_floor: f64,
}

impl MklOptions {
    pub fn new(c: f64) -> Self {
        Self {
            c,
            max_iter: 100,
            obj_tol: 1e-5,
            weight_tol: 1e-6,
            kkt_tol: DEFAULT_INNER_KKT_TOL,
            warm_start: true,
            weight_floor: DEFAULT_WEIGHT_FLOOR,
        }
    }

    pub fn max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn obj_tol(mut self, obj_tol: f64) -> Self {
        self.obj_tol = obj_tol;
        self
    }

    pub fn kkt_tol(mut self, kkt_tol: f64) -> Self {
        self.kkt_tol = kkt_tol;
        self
    }

    pub fn weight_floor(mut self, floor: f64) -> Self {
        self.weight_floor = floor;
        self
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(MklError::InvalidInput(format!("C must be positive, got {}", self.c)));
        }
        if self.max_iter == 0 {
            return Err(MklError::InvalidInput("max_iter must be at least 1".into()));
        }
        if !(self.obj_tol >= 0.0 && self.weight_tol >= 0.0 && self.kkt_tol > 0.0) {
            return Err(MklError::InvalidInput("tolerances must be nonnegative".into()));
        }
        if !(self.weight_floor >= 0.0 && self.weight_floor < 1.0) {
            return Err(MklError::InvalidInput(format!("weight floor must lie in [0, 1), got {}", self.weight_floor)));
        }
        Ok(())
    }
}

/// Binary training problem with every kernel already conjugated by the labels.
pub(crate) struct Conjugated {
    pub labels: Vec<f64>,
    pub q: Vec<DMatrix<f64>>,
}

impl Conjugated {
    pub fn new(g: &GramSet) -> Result<Self> {
        let labels = g.binary_labels()?;
        check_binary_problem(&labels)?;
        let q = g.kernels().iter().map(|k| label_conjugate(k.entries(), &labels)).collect();
        Ok(Self { labels, q })
    }

    pub fn m(&self) -> usize {
        self.labels.len()
    }

    /// `Σₖ coefₖ Qₖ` accumulated in kernel order, skipping zero coefficients.
    pub fn hessian(&self, coef: &[f64]) -> DMatrix<f64> {
        let m = self.m();
        let mut h = DMatrix::zeros(m, m);
        for (q, &c) in self.q.iter().zip(coef) {
            if c != 0.0 {
                add_scaled(&mut h, c, q);
            }
        }
        h
    }

    /// `αᵀQₖα` for every kernel.
    pub fn quad_forms(&self, alpha: &[f64]) -> Vec<f64> {
        self.q.iter().map(|q| quad_form(q, alpha).max(0.0)).collect()
    }
}

/// `acc += c · x`, entrywise.
pub(crate) fn add_scaled(acc: &mut DMatrix<f64>, c: f64, x: &DMatrix<f64>) {
    for (a, v) in acc.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *a += c * v;
    }
}

/// `Σₖ coefₖ · sliceₖ`, the combined m×t cross kernel.
pub(crate) fn combine_slices(
    slices: &[DMatrix<f64>],
    coef: &[f64],
    m: usize,
) -> Result<DMatrix<f64>> {
    let t = check_slices(slices, coef.len(), m)?;
    let mut out = DMatrix::zeros(m, t);
    for (s, &c) in slices.iter().zip(coef) {
        if c != 0.0 {
            add_scaled(&mut out, c, s);
        }
    }
    Ok(out)
}

/// Decision values of a kernel-weighted SVM on test slices.
pub(crate) fn weighted_decision(
    alpha: &[f64],
    labels: &[f64],
    bias: f64,
    coef: &[f64],
    slices: &[DMatrix<f64>],
) -> Result<Vec<f64>> {
    let cross = combine_slices(slices, coef, alpha.len())?;
    Ok(decision_values(alpha, labels, &cross, bias))
}

pub(crate) fn to_labels(f: &[f64]) -> Vec<i64> {
    f.iter().map(|&v| sign_label(v)).collect()
}

pub(crate) fn relative_change(prev: f64, next: f64) -> f64 {
    let scale = prev.abs().max(f64::MIN_POSITIVE);
    (next - prev).abs() / scale
}

pub(crate) fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(MklError::NonConvergence(format!("{what} became non-finite")));
    }
    Ok(())
}
