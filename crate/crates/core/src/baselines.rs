//! Reference formulations: the l-2 block norm (plain sum of kernels) and the
//! l-1 block norm (sparse kernel selection).
//!
//! The l-1 solver minimizes `J(λ) = max_α 1ᵀα − ½ αᵀ(Σₖ λₖYKₖY)α` over the
//! simplex with the variational reweighting `λₖ ← λₖ√Dₖ / Σⱼ λⱼ√Dⱼ`,
//! `Dₖ = αᵀYKₖYα`. Each reweighting is exact block minimization of the primal
//! `½ Σₖ |wₖ|²/λₖ + CΣξ`, so `J` does not increase. Weights that reach zero
//! stay there, which is why two-kernel problems finish with a grid polish.

use crate::combine::{check_finite, relative_change, Conjugated, MklOptions};
use crate::error::Result;
use crate::kernels::GramSet;
use crate::linf::{LinfModel, MklKind};
use crate::simplex::{max_abs_diff, uniform};
use crate::svm::{solve_unchecked, SvmSolution};

/// Weights below this are set to zero (and the rest renormalized) so that
/// kernel selection is explicit.
pub const L1_TRUNCATION: f64 = 1e-6;

/// Grid size of the two-kernel polish.
pub const L1_POLISH_GRID: usize = 201;

/// SVM on `Σₖ Kₖ`. `lambda` is reported as uniform.
pub fn fit_l2(g: &GramSet, opts: &MklOptions) -> Result<LinfModel> {
    opts.validate()?;
    let prob = Conjugated::new(g)?;
    let l = g.num_kernels();
    let h = prob.hessian(&vec![1.0; l]);
    let svm = solve_unchecked(&h, &prob.labels, &vec![opts.c; prob.m()], opts.c, None, opts.kkt_tol);
    let obj = svm.objective;
    Ok(LinfModel {
        kind: MklKind::L2,
        lambda: uniform(l),
        labels: prob.labels,
        objective_trace: vec![obj],
        lambda_trace: vec![uniform(l)],
        iterations: 1,
        converged: svm.converged,
        degenerate: false,
        svm,
    })
}

struct L1Problem<'a> {
    prob: &'a Conjugated,
    upper: Vec<f64>,
    opts: &'a MklOptions,
}

impl L1Problem<'_> {
    fn solve(&self, lambda: &[f64], warm: Option<&[f64]>) -> SvmSolution {
        let h = self.prob.hessian(lambda);
        let warm = if self.opts.warm_start { warm } else { None };
        solve_unchecked(&h, &self.prob.labels, &self.upper, self.opts.c, warm, self.opts.kkt_tol)
    }

    /// `J(λ)`: the negated SVM optimum.
    fn value(&self, lambda: &[f64], warm: Option<&[f64]>) -> (f64, SvmSolution) {
        let s = self.solve(lambda, warm);
        (-s.objective, s)
    }
}

/// l-1 block-norm MKL by multiplicative reweighting from uniform weights.
pub fn fit_l1(g: &GramSet, opts: &MklOptions) -> Result<LinfModel> {
    opts.validate()?;
    let prob = Conjugated::new(g)?;
    let l = g.num_kernels();
    let p = L1Problem { prob: &prob, upper: vec![opts.c; prob.m()], opts };

    let mut lambda = uniform(l);
    let mut alpha: Option<Vec<f64>> = None;
    let mut trace = Vec::new();
    let mut lambda_trace = Vec::new();
    let mut converged = false;
    let mut degenerate = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        let (value, sol) = p.value(&lambda, alpha.as_deref());
        let small_change = trace.last().is_some_and(|&prev| relative_change(prev, value) < opts.obj_tol);
        trace.push(value);
        lambda_trace.push(lambda.clone());
        let d = prob.quad_forms(&sol.alpha);
        check_finite(&d, "kernel contributions")?;
        alpha = Some(sol.alpha);
        if small_change {
            converged = true;
            break;
        }
        let scores: Vec<f64> = lambda.iter().zip(&d).map(|(lk, dk)| lk * dk.sqrt()).collect();
        let total: f64 = scores.iter().sum();
        if total <= 0.0 {
            degenerate = true;
            converged = true;
            break;
        }
        let next: Vec<f64> = scores.iter().map(|s| s / total).collect();
        let moved = max_abs_diff(&next, &lambda);
        lambda = next;
        if moved < opts.weight_tol {
            converged = true;
            break;
        }
    }
    // the last weight update may not have been evaluated yet
    if lambda_trace.last() != Some(&lambda) {
        let (value, sol) = p.value(&lambda, alpha.as_deref());
        if value <= *trace.last().expect("trace is non-empty") {
            trace.push(value);
            lambda_trace.push(lambda.clone());
            alpha = Some(sol.alpha);
        } else {
            lambda = lambda_trace.last().expect("trace is non-empty").clone();
        }
    }

    if l == 2 && !degenerate {
        let current = *trace.last().expect("trace is non-empty");
        if let Some((t, value)) = polish_two(&p, lambda[0]) {
            if value < current {
                lambda = vec![t, 1.0 - t];
                trace.push(value);
                lambda_trace.push(lambda.clone());
            }
        }
    }

    let lambda = truncate(&lambda);
    let svm = p.solve(&lambda, alpha.as_deref());
    Ok(LinfModel {
        kind: MklKind::L1,
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

/// Best point of a uniform grid on the 1-simplex, refined by golden-section
/// search on the neighbouring cells (`J` is convex in `λ`).
fn polish_two(p: &L1Problem<'_>, start: f64) -> Option<(f64, f64)> {
    let n = L1_POLISH_GRID - 1;
    let eval = |t: f64| p.value(&[t, 1.0 - t], None).0;
    let mut best_t = start;
    let mut best = eval(start);
    for i in 0..=n {
        let t = i as f64 / n as f64;
        let v = eval(t);
        if v < best {
            best = v;
            best_t = t;
        }
    }
    let h = 1.0 / n as f64;
    let (mut a, mut b) = ((best_t - h).max(0.0), (best_t + h).min(1.0));
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let (mut f1, mut f2) = (eval(x1), eval(x2));
    for _ in 0..40 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = eval(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = eval(x2);
        }
    }
    for (t, v) in [(x1, f1), (x2, f2)] {
        if v < best {
            best = v;
            best_t = t;
        }
    }
    Some((best_t, best))
}

fn truncate(lambda: &[f64]) -> Vec<f64> {
    let kept: Vec<f64> = lambda.iter().map(|&v| if v < L1_TRUNCATION { 0.0 } else { v }).collect();
    let total: f64 = kept.iter().sum();
    if total <= 0.0 {
        return lambda.to_vec();
    }
    kept.into_iter().map(|v| v / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::GramMatrix;
    use crate::svm::{label_conjugate, solve_svm};
    use nalgebra::DMatrix;

    fn rbf(xs: &[f64], s: f64) -> GramMatrix {
        GramMatrix::new(DMatrix::from_fn(xs.len(), xs.len(), |i, j| {
            (-(xs[i] - xs[j]).powi(2) / (2.0 * s * s)).exp()
        }))
        .unwrap()
    }

    #[test]
    fn l2_is_svm_on_kernel_sum() {
        let xs = [-1.5, -0.7, -0.2, 0.4, 0.9, 1.8];
        let y = vec![-1, -1, 1, -1, 1, 1];
        let g = GramSet::new(vec![rbf(&xs, 0.5), rbf(&xs, 1.0), rbf(&xs, 2.0)], y).unwrap();
        let opts = MklOptions::new(3.0);
        let model = fit_l2(&g, &opts).unwrap();
        let mut sum = g.kernels()[0].entries().clone();
        sum += g.kernels()[1].entries();
        sum += g.kernels()[2].entries();
        let yf = g.binary_labels().unwrap();
        let direct = solve_svm(&label_conjugate(&sum, &yf), &yf, 3.0, opts.kkt_tol).unwrap();
        assert_eq!(model.svm.alpha, direct.alpha);
    }

    #[test]
    fn l1_single_kernel_is_plain_svm() {
        let xs = [-1.5, -0.7, -0.2, 0.4, 0.9, 1.8];
        let g = GramSet::new(vec![rbf(&xs, 1.0)], vec![-1, -1, 1, -1, 1, 1]).unwrap();
        let model = fit_l1(&g, &MklOptions::new(1.0)).unwrap();
        assert_eq!(model.lambda, vec![1.0]);
        let yf = g.binary_labels().unwrap();
        let direct =
            solve_svm(&label_conjugate(g.kernels()[0].entries(), &yf), &yf, 1.0, 1e-8).unwrap();
        for (a, b) in model.svm.alpha.iter().zip(&direct.alpha) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn truncation_renormalizes() {
        let t = truncate(&[0.5, 5e-7, 0.4999995]);
        assert_eq!(t[1], 0.0);
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
