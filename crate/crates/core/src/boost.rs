//! Discrete AdaBoost over per-kernel SVMs.
//!
//! Each round trains one SVM per kernel on the current sample weights, by
//! scaling the box bound of every point (`Cᵢ = C·m·wᵢ`) instead of
//! resampling, and keeps the kernel with the smallest weighted training
//! error.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{invalid, MklError, Result};
use crate::kernels::{check_slices, GramSet};
use crate::svm::{check_binary_problem, decision_values, label_conjugate, sign_label, solve_unchecked, SvmSolution};

#[derive(Debug, Clone, PartialEq)]
pub struct BoostRound {
    pub kernel: usize,
    pub svm: SvmSolution,
    /// Vote weight `½ ln((1 − ε)/ε)`.
    pub beta: f64,
    /// Weighted training error of the chosen learner.
    pub error: f64,
    /// Sample weights after this round's reweighting.
    pub sample_weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostModel {
    pub rounds: Vec<BoostRound>,
    pub max_rounds: usize,
    pub labels: Vec<f64>,
    pub c: f64,
    pub num_kernels: usize,
}

/// `½ ln((1 − ε)/ε)` with `ε` clamped below at `1/(2m)`.
pub fn vote_weight(error: f64, m: usize) -> f64 {
    let floor = 1.0 / (2.0 * m as f64);
    let e = error.max(floor);
    0.5 * ((1.0 - e) / e).ln()
}

#[derive(Debug, Clone, Copy)]
pub struct BoostOptions {
    pub c: f64,
    pub max_rounds: usize,
    pub kkt_tol: f64,
}

impl BoostOptions {
    pub fn new(c: f64, max_rounds: usize) -> Self {
        Self { c, max_rounds, kkt_tol: crate::combine::DEFAULT_INNER_KKT_TOL }
    }
}

fn weak_learner(q: &DMatrix<f64>, k: &DMatrix<f64>, y: &[f64], w: &[f64], c: f64, tol: f64) -> (SvmSolution, Vec<i64>, f64) {
    let m = y.len() as f64;
    let upper: Vec<f64> = w.iter().map(|wi| c * m * wi).collect();
    let svm = solve_unchecked(q, y, &upper, c, None, tol);
    let h: Vec<i64> = decision_values(&svm.alpha, y, k, svm.bias).into_iter().map(sign_label).collect();
    let err = h.iter().zip(y).zip(w).filter(|((&h, &y), _)| h as f64 != y).map(|(_, w)| w).sum();
    (svm, h, err)
}

pub fn fit_boost(g: &GramSet, opts: &BoostOptions) -> Result<BoostModel> {
    if !(opts.c.is_finite() && opts.c > 0.0) {
        return invalid(format!("C must be positive, got {}", opts.c));
    }
    if opts.max_rounds == 0 {
        return invalid("max_rounds must be at least 1");
    }
    let y = g.binary_labels()?;
    check_binary_problem(&y)?;
    let m = y.len();
    let qs: Vec<DMatrix<f64>> = g.kernels().iter().map(|k| label_conjugate(k.entries(), &y)).collect();

    let mut w = vec![1.0 / m as f64; m];
    let mut rounds = Vec::new();
    for _ in 0..opts.max_rounds {
        let learners: Vec<(SvmSolution, Vec<i64>, f64)> = (0..qs.len())
            .into_par_iter()
            .map(|k| weak_learner(&qs[k], g.kernels()[k].entries(), &y, &w, opts.c, opts.kkt_tol))
            .collect();
        let (best, _) = learners
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |(bi, be), (k, l)| if l.2 < be { (k, l.2) } else { (bi, be) });
        let (svm, h, err) = learners.into_iter().nth(best).expect("at least one kernel");
        if err >= 0.5 {
            break;
        }
        let beta = vote_weight(err, m);
        for ((wi, &hi), &yi) in w.iter_mut().zip(&h).zip(&y) {
            *wi *= (-beta * yi * hi as f64).exp();
        }
        let total: f64 = w.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(MklError::NonConvergence("sample weights collapsed".into()));
        }
        w.iter_mut().for_each(|wi| *wi /= total);
        let perfect = err <= 0.0;
        rounds.push(BoostRound { kernel: best, svm, beta, error: err, sample_weights: w.clone() });
        if perfect {
            break;
        }
    }
    Ok(BoostModel { rounds, max_rounds: opts.max_rounds, labels: y, c: opts.c, num_kernels: g.num_kernels() })
}

impl BoostModel {
    /// Weighted vote `Σₜ βₜ hₜ(x)` for each test column.
    pub fn scores(&self, slices: &[DMatrix<f64>]) -> Result<Vec<f64>> {
        let t = check_slices(slices, self.num_kernels, self.labels.len())?;
        let mut score = vec![0.0; t];
        for r in &self.rounds {
            let f = decision_values(&r.svm.alpha, &self.labels, &slices[r.kernel], r.svm.bias);
            for (s, v) in score.iter_mut().zip(f) {
                *s += r.beta * sign_label(v) as f64;
            }
        }
        Ok(score)
    }

    pub fn predict(&self, slices: &[DMatrix<f64>]) -> Result<Vec<i64>> {
        Ok(self.scores(slices)?.into_iter().map(sign_label).collect())
    }

    /// Ensemble labels after each prefix of rounds, for training-error curves.
    pub fn staged_predict(&self, slices: &[DMatrix<f64>]) -> Result<Vec<Vec<i64>>> {
        let t = check_slices(slices, self.num_kernels, self.labels.len())?;
        let mut score = vec![0.0; t];
        let mut stages = Vec::with_capacity(self.rounds.len());
        for r in &self.rounds {
            let f = decision_values(&r.svm.alpha, &self.labels, &slices[r.kernel], r.svm.bias);
            for (s, v) in score.iter_mut().zip(f) {
                *s += r.beta * sign_label(v) as f64;
            }
            stages.push(score.iter().map(|&s| sign_label(s)).collect());
        }
        Ok(stages)
    }
}

pub fn predict_boost(model: &BoostModel, slices: &[DMatrix<f64>]) -> Result<Vec<i64>> {
    model.predict(slices)
}
