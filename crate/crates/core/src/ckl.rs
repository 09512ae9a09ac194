//! Composite kernel learning: l-∞ across descriptors, l-1 within each
//! descriptor's kernels.
//!
//! With descriptor weights `γ ∈ Δₙ` and per-descriptor kernel weights
//! `λⱼ ∈ Δₙⱼ`, the SVM is solved on the Hessian
//! `Σⱼ Σₖ λⱼₖ YKⱼₖY / (2γⱼ)` (half of the `¼`-scaled dual term). For fixed
//! `α` the inner problem is linear in `λⱼ`, so it is solved by the vertex at
//! the largest `Dⱼₖ = ½ αᵀYKⱼₖYα`; the outer one is the same `√D` ratio as
//! the l-∞ solver with `Dⱼ = maxₖ Dⱼₖ`.
//!
//! The objective tracked is `½ Σⱼ Dⱼ/γⱼ − 1ᵀα`. Unlike the l-∞ case the
//! inner maximum can switch kernels between iterations, so an SVM step may
//! raise it. When that happens the step is shortened along the segment from
//! the previous `α` (the objective is convex in `α`, so halving finds a
//! decrease whenever the step direction is one); if no shortening helps the
//! previous point is kept and the objective change is zero, which ends the
//! run.
//!
//! A vertex `λⱼ` is only optimal for fixed `γ` when its kernel stays the
//! argmax at the SVM solution it produces. When two kernels of a descriptor
//! tie at the optimum no vertex qualifies and plain alternation flips
//! between them without reaching the minimum. After each SVM solve the
//! inner weights are therefore refined by block Frank-Wolfe on the concave
//! SVM value over the inner simplices, with an exact line search. Runs
//! without flips never enter the refinement and keep one-hot weights.

use nalgebra::DMatrix;

use crate::combine::{check_finite, relative_change, to_labels, weighted_decision, Conjugated, MklOptions};
use crate::error::{MklError, Result};
use crate::kernels::GramSet;
use crate::linf::split_objective;
use crate::simplex::{floored_sqrt_ratio_update, max_abs_diff, sqrt_ratio_update, uniform};
use crate::svm::{solve_unchecked, SvmSolution};

/// How a stored model turns kernels into the Hessian and decision values.
pub const CONVENTION: &str =
    "hessian=sum_j sum_k lambda_jk*YK_jkY/(2*gamma_j);decision=sum_j sum_k lambda_jk*K_jk/(2*gamma_j)";

/// Relative tolerance under which two inner scores count as tied.
pub const TIE_RTOL: f64 = 1e-12;

const MAX_HALVINGS: u32 = 40;
/// Relative Frank-Wolfe gap at which the inner weights count as optimal.
const REFINE_RTOL: f64 = 1e-10;
const MAX_REFINE_ROUNDS: usize = 200;
const LINE_SEARCH_STEPS: usize = 50;

/// Result of the inner (per-descriptor) update.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerUpdate {
    /// One-hot weights at the best kernel.
    pub weights: Vec<f64>,
    /// The selected (largest) score, `Dⱼ`.
    pub value: f64,
    pub index: usize,
    /// More than one kernel attained the maximum; the lowest index won.
    pub tie: bool,
}

/// Picks the largest candidate score; ties go to the lowest index.
pub fn inner_lambda_update(candidates: &[f64]) -> Result<InnerUpdate> {
    if candidates.is_empty() {
        return Err(MklError::InvalidInput("a descriptor group needs at least one kernel".into()));
    }
    if let Some(bad) = candidates.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(MklError::InvalidInput(format!("inner scores must be finite and nonnegative, found {bad}")));
    }
    let mut index = 0;
    for (k, &v) in candidates.iter().enumerate() {
        if v > candidates[index] {
            index = k;
        }
    }
    let value = candidates[index];
    let tie = candidates
        .iter()
        .enumerate()
        .any(|(k, &v)| k != index && (value - v).abs() <= TIE_RTOL * value.max(f64::MIN_POSITIVE));
    let mut weights = vec![0.0; candidates.len()];
    weights[index] = 1.0;
    Ok(InnerUpdate { weights, value, index, tie })
}

/// `γⱼ = √Dⱼ / Σ √D`.
pub fn gamma_update(d: &[f64]) -> Result<Vec<f64>> {
    sqrt_ratio_update(d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CklModel {
    pub gamma: Vec<f64>,
    /// `inner_lambda[j][k]` weights kernel `groups[j][k]`.
    pub inner_lambda: Vec<Vec<f64>>,
    /// Kernel indices per descriptor.
    pub groups: Vec<Vec<usize>>,
    pub svm: SvmSolution,
    pub labels: Vec<f64>,
    pub objective_trace: Vec<f64>,
    pub gamma_trace: Vec<Vec<f64>>,
    pub inner_trace: Vec<Vec<Vec<f64>>>,
    pub iterations: usize,
    pub converged: bool,
    pub degenerate: bool,
    /// Some inner argmax was decided by the lowest-index rule.
    pub tie_broken: bool,
    /// Number of SVM steps that had to be shortened.
    pub shortened_steps: usize,
    /// Number of iterations whose inner weights were moved by the refinement.
    pub refined_steps: usize,
}

impl CklModel {
    /// `λⱼₖ / (2γⱼ)` per kernel, in kernel order.
    pub fn kernel_coefficients(&self) -> Vec<f64> {
        let l = self.groups.iter().map(Vec::len).sum();
        ckl_coefficients(&self.groups, &self.gamma, &self.inner_lambda, l)
    }

    pub fn convention(&self) -> &'static str {
        CONVENTION
    }

    pub fn decision_values(&self, slices: &[DMatrix<f64>]) -> Result<Vec<f64>> {
        weighted_decision(&self.svm.alpha, &self.labels, self.svm.bias, &self.kernel_coefficients(), slices)
    }

    pub fn predict(&self, slices: &[DMatrix<f64>]) -> Result<Vec<i64>> {
        Ok(to_labels(&self.decision_values(slices)?))
    }

    /// Number of kernels with nonzero weight.
    pub fn active_kernels(&self) -> usize {
        self.kernel_coefficients().iter().filter(|&&c| c > 0.0).count()
    }
}

fn ckl_coefficients(groups: &[Vec<usize>], gamma: &[f64], inner: &[Vec<f64>], l: usize) -> Vec<f64> {
    let mut coef = vec![0.0; l];
    for (j, members) in groups.iter().enumerate() {
        for (pos, &k) in members.iter().enumerate() {
            let w = inner[j][pos];
            coef[k] = if w > 0.0 && gamma[j] > 0.0 { w / (2.0 * gamma[j]) } else { 0.0 };
        }
    }
    coef
}

struct Weights {
    gamma: Vec<f64>,
    inner: Vec<Vec<f64>>,
    tie: bool,
}

/// Closed-form weights at `α` from the half quadratic forms `d[k]`. Returns
/// `None` when every descriptor score is zero.
fn closed_form(groups: &[Vec<usize>], d: &[f64], floor: f64) -> Result<Option<(Weights, Vec<f64>)>> {
    let mut inner = Vec::with_capacity(groups.len());
    let mut scores = Vec::with_capacity(groups.len());
    let mut tie = false;
    for members in groups {
        let cand: Vec<f64> = members.iter().map(|&k| d[k]).collect();
        let up = inner_lambda_update(&cand)?;
        tie |= up.tie;
        scores.push(up.value);
        inner.push(up.weights);
    }
    match floored_sqrt_ratio_update(&scores, floor) {
        Ok(gamma) => Ok(Some((Weights { gamma, inner, tie }, scores))),
        Err(MklError::DegenerateDirection) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Fixed-`γ` inner scores `Dⱼₖ/(2γⱼ)` at `α`, grouped by descriptor.
fn inner_scores(prob: &Conjugated, groups: &[Vec<usize>], gamma: &[f64], alpha: &[f64]) -> Vec<Vec<f64>> {
    let q = prob.quad_forms(alpha);
    groups.iter().zip(gamma).map(|(members, g)| members.iter().map(|&k| 0.25 * q[k] / g).collect()).collect()
}

/// `(argmax, max gᵢ − ⟨λ, g⟩)` for one descriptor.
fn block_gap(lambda: &[f64], g: &[f64]) -> (usize, f64) {
    let mut s = 0;
    for (k, &v) in g.iter().enumerate() {
        if v > g[s] {
            s = k;
        }
    }
    let mean: f64 = lambda.iter().zip(g).map(|(a, b)| a * b).sum();
    (s, g[s] - mean)
}

/// Maximizes the SVM value over the inner simplices for fixed `γ`, starting
/// from `inner` and its solution `sol`. Returns the final solution and
/// whether any weight moved.
fn refine_inner(
    prob: &Conjugated,
    groups: &[Vec<usize>],
    gamma: &[f64],
    inner: &mut [Vec<f64>],
    mut sol: SvmSolution,
    upper: &[f64],
    opts: &MklOptions,
) -> (SvmSolution, bool) {
    let l = groups.iter().map(Vec::len).sum();
    let solve_at = |inner: &[Vec<f64>], warm: &[f64]| {
        let h = prob.hessian(&ckl_coefficients(groups, gamma, inner, l));
        solve_unchecked(&h, &prob.labels, upper, opts.c, Some(warm), opts.kkt_tol)
    };
    let mut moved = false;
    for _ in 0..MAX_REFINE_ROUNDS {
        let scores = inner_scores(prob, groups, gamma, &sol.alpha);
        let gaps: Vec<(usize, f64)> = inner.iter().zip(&scores).map(|(lam, g)| block_gap(lam, g)).collect();
        let total: f64 = gaps.iter().map(|g| g.1).sum();
        if total <= REFINE_RTOL * sol.objective.abs().max(1.0) {
            break;
        }
        let j = (0..gaps.len()).fold(0, |b, j| if gaps[j].1 > gaps[b].1 { j } else { b });
        let (s, _) = gaps[j];
        let start = inner[j].clone();
        let at = |t: f64| -> Vec<f64> {
            start.iter().enumerate().map(|(k, &v)| if k == s { v + t * (1.0 - v) } else { v * (1.0 - t) }).collect()
        };
        // sign of the directional derivative at the solution for step t
        let slope = |sol: &SvmSolution| {
            let g = &inner_scores(prob, groups, gamma, &sol.alpha)[j];
            g[s] - start.iter().zip(g).map(|(a, b)| a * b).sum::<f64>()
        };
        inner[j] = at(1.0);
        let full = solve_at(inner, &sol.alpha);
        if slope(&full) >= 0.0 {
            sol = full;
        } else {
            let (mut lo, mut hi) = (0.0, 1.0);
            let mut best = sol.clone();
            for _ in 0..LINE_SEARCH_STEPS {
                let mid = 0.5 * (lo + hi);
                inner[j] = at(mid);
                let trial = solve_at(inner, &best.alpha);
                if slope(&trial) >= 0.0 {
                    lo = mid;
                    best = trial;
                } else {
                    hi = mid;
                }
            }
            inner[j] = at(lo);
            sol = if lo > 0.0 { best } else { solve_at(inner, &sol.alpha) };
        }
        moved = true;
    }
    (sol, moved)
}

/// Objective `½ Σⱼ Dⱼ/γⱼ − 1ᵀα` at the closed-form weights for `α`.
fn profile(prob: &Conjugated, groups: &[Vec<usize>], floor: f64, alpha: &[f64]) -> Result<(f64, Option<Weights>, Vec<f64>)> {
    let d: Vec<f64> = prob.quad_forms(alpha).into_iter().map(|v| 0.5 * v).collect();
    check_finite(&d, "kernel contributions")?;
    match closed_form(groups, &d, floor)? {
        Some((w, scores)) => {
            let obj = split_objective(&scores, &w.gamma, alpha);
            Ok((obj, Some(w), d))
        }
        None => Ok((-alpha.iter().sum::<f64>(), None, d)),
    }
}

/// Alternating solver for the composite formulation. Without a grouping on
/// `g` every kernel is its own descriptor.
pub fn fit_ckl(g: &GramSet, opts: &MklOptions) -> Result<CklModel> {
    opts.validate()?;
    let prob = Conjugated::new(g)?;
    let groups = g.groups();
    let l = g.num_kernels();
    let upper = vec![opts.c; prob.m()];

    let mut gamma = uniform(groups.len());
    let mut inner: Vec<Vec<f64>> = groups.iter().map(|members| uniform(members.len())).collect();
    let mut alpha: Option<Vec<f64>> = None;
    let mut trace: Vec<f64> = Vec::new();
    let mut gamma_trace = Vec::new();
    let mut inner_trace = Vec::new();
    let mut converged = false;
    let mut degenerate = false;
    let mut tie_broken = false;
    let mut shortened_steps = 0;
    let mut refined_steps = 0;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        let h = prob.hessian(&ckl_coefficients(&groups, &gamma, &inner, l));
        let warm = if opts.warm_start { alpha.as_deref() } else { None };
        let sol = solve_unchecked(&h, &prob.labels, &upper, opts.c, warm, opts.kkt_tol);
        let mut refined = inner.clone();
        let (sol, moved) = refine_inner(&prob, &groups, &gamma, &mut refined, sol, &upper, opts);
        refined_steps += usize::from(moved);

        let (mut obj, mut weights, _) = profile(&prob, &groups, opts.weight_floor, &sol.alpha)?;
        let mut accepted = sol.alpha;
        let mut keep_refined = moved;
        if let (Some(&prev), Some(prev_alpha)) = (trace.last(), alpha.as_ref()) {
            if weights.is_some() && obj > prev + TIE_RTOL * prev.abs().max(1.0) {
                shortened_steps += 1;
                keep_refined = false;
                let step: Vec<f64> = accepted.iter().zip(prev_alpha).map(|(a, p)| a - p).collect();
                let mut found = None;
                let mut s = 0.5;
                for _ in 0..MAX_HALVINGS {
                    let trial: Vec<f64> = prev_alpha.iter().zip(&step).map(|(p, d)| p + s * d).collect();
                    let (o, w, _) = profile(&prob, &groups, opts.weight_floor, &trial)?;
                    if w.is_some() && o < prev {
                        found = Some((trial, o, w));
                        break;
                    }
                    s *= 0.5;
                }
                match found {
                    Some((trial, o, w)) => {
                        accepted = trial;
                        obj = o;
                        weights = w;
                    }
                    None => {
                        // no decrease along the step: keep the previous point
                        let (o, w, _) = profile(&prob, &groups, opts.weight_floor, prev_alpha)?;
                        accepted = prev_alpha.clone();
                        obj = o;
                        weights = w;
                    }
                }
            }
        }

        let Some(mut w) = weights else {
            degenerate = true;
            converged = true;
            trace.push(obj);
            gamma_trace.push(gamma.clone());
            inner_trace.push(inner.clone());
            alpha = Some(accepted);
            break;
        };
        if keep_refined {
            w.inner = refined;
        }
        tie_broken |= w.tie;
        let moved = max_abs_diff(&w.gamma, &gamma).max(
            w.inner.iter().zip(&inner).map(|(a, b)| max_abs_diff(a, b)).fold(0.0, f64::max),
        );
        let small_change = trace.last().is_some_and(|&prev| relative_change(prev, obj) < opts.obj_tol);
        trace.push(obj);
        gamma_trace.push(w.gamma.clone());
        inner_trace.push(w.inner.clone());
        gamma = w.gamma;
        inner = w.inner;
        alpha = Some(accepted);
        if small_change || moved < opts.weight_tol {
            converged = true;
            break;
        }
    }

    let h = prob.hessian(&ckl_coefficients(&groups, &gamma, &inner, l));
    let svm = solve_unchecked(&h, &prob.labels, &upper, opts.c, alpha.as_deref(), opts.kkt_tol);
    let (svm, _) = refine_inner(&prob, &groups, &gamma, &mut inner, svm, &upper, opts);
    Ok(CklModel {
        gamma,
        inner_lambda: inner,
        groups,
        svm,
        labels: prob.labels,
        objective_trace: trace,
        gamma_trace,
        inner_trace,
        iterations,
        converged,
        degenerate,
        tie_broken,
        shortened_steps,
        refined_steps,
    })
}

pub fn predict_ckl(model: &CklModel, slices: &[DMatrix<f64>]) -> Result<Vec<i64>> {
    model.predict(slices)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inner_update_picks_maximum() {
        let u = inner_lambda_update(&[0.2, 0.7, 0.1]).unwrap();
        assert_eq!(u.weights, vec![0.0, 1.0, 0.0]);
        assert_eq!(u.value, 0.7);
        assert!(!u.tie);
    }

    #[test]
    fn inner_tie_goes_to_lowest_index() {
        let u = inner_lambda_update(&[0.4, 0.4]).unwrap();
        assert_eq!(u.weights, vec![1.0, 0.0]);
        assert!(u.tie);
    }

    #[test]
    fn inner_singleton() {
        let u = inner_lambda_update(&[3.5]).unwrap();
        assert_eq!(u.weights, vec![1.0]);
        assert_eq!(u.value, 3.5);
        assert!(inner_lambda_update(&[]).is_err());
    }

    #[test]
    fn gamma_substitution() {
        let g = gamma_update(&[1.0, 4.0]).unwrap();
        assert!((g[0] - 1.0 / 3.0).abs() < 1e-15);
        let g = gamma_update(&[5.0, 5.0, 5.0, 5.0]).unwrap();
        assert!(g.iter().all(|v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn coefficients_follow_grouping() {
        let groups = vec![vec![2, 0], vec![1]];
        let coef = ckl_coefficients(&groups, &[0.25, 0.75], &[vec![0.0, 1.0], vec![1.0]], 3);
        assert_eq!(coef, vec![2.0, 1.0 / 1.5, 0.0]);
    }
}
