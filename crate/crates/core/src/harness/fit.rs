//! One binary fit per method, reduced to a storable predictor.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::baselines::{fit_l1, fit_l2};
use crate::boost::{fit_boost, BoostOptions};
use crate::ckl::fit_ckl;
use crate::combine::{to_labels, weighted_decision, MklOptions, DEFAULT_INNER_KKT_TOL, DEFAULT_WEIGHT_FLOOR};
use crate::error::{invalid, MklError, Result};
use crate::kernels::{check_slices, GramSet};
use crate::linf::{fit_linf, MklKind};
use crate::svm::{decision_values, label_conjugate, sign_label, solve_svm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Plain SVM on one kernel, chosen by [`SolverSettings::svm_kernel`].
    Svm,
    L1,
    L2,
    Linf,
    Ckl,
    Boost,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Svm, Method::L1, Method::L2, Method::Linf, Method::Ckl, Method::Boost];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Svm => "svm",
            Method::L1 => "l1",
            Method::L2 => "l2",
            Method::Linf => "linf",
            Method::Ckl => "ckl",
            Method::Boost => "boost",
        }
    }

    /// How a stored predictor turns kernels into decision values.
    pub fn convention(&self) -> &'static str {
        match self {
            Method::Svm => "decision=K_s for the selected kernel s",
            Method::L1 => MklKind::L1.convention(),
            Method::L2 => MklKind::L2.convention(),
            Method::Linf => MklKind::Linf.convention(),
            Method::Ckl => crate::ckl::CONVENTION,
            Method::Boost => "decision=sum_t beta_t*sign(f_t) with f_t an SVM on kernel k_t",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = MklError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| MklError::Parse(format!("unknown method `{s}`")))
    }
}

/// Solver knobs that are not part of the model selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub kkt_tol: f64,
    pub max_iter: usize,
    pub obj_tol: f64,
    pub weight_floor: f64,
    pub boost_rounds: usize,
    pub svm_kernel: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            kkt_tol: DEFAULT_INNER_KKT_TOL,
            max_iter: 100,
            obj_tol: 1e-5,
            weight_floor: DEFAULT_WEIGHT_FLOOR,
            boost_rounds: 10,
            svm_kernel: 0,
        }
    }
}

impl SolverSettings {
    fn mkl(&self, c: f64) -> MklOptions {
        MklOptions::new(c)
            .kkt_tol(self.kkt_tol)
            .max_iter(self.max_iter)
            .obj_tol(self.obj_tol)
            .weight_floor(self.weight_floor)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostStep {
    pub kernel: usize,
    pub beta: f64,
    pub alpha: Vec<f64>,
    pub bias: f64,
}

/// Everything needed to score new points given the training cross kernels.
#[derive(Debug, Clone, PartialEq)]
pub enum Predictor {
    /// `f(x) = Σᵢ αᵢyᵢ Σₖ coefₖ Kₖ(xᵢ, x) − b`.
    Weighted { coef: Vec<f64>, alpha: Vec<f64>, labels: Vec<f64>, bias: f64 },
    /// `f(x) = Σₜ βₜ sign(Σᵢ αₜᵢyᵢ K_{kₜ}(xᵢ, x) − bₜ)`.
    Boost { steps: Vec<BoostStep>, labels: Vec<f64>, num_kernels: usize },
}

impl Predictor {
    pub fn num_kernels(&self) -> usize {
        match self {
            Predictor::Weighted { coef, .. } => coef.len(),
            Predictor::Boost { num_kernels, .. } => *num_kernels,
        }
    }

    pub fn decision_values(&self, slices: &[DMatrix<f64>]) -> Result<Vec<f64>> {
        match self {
            Predictor::Weighted { coef, alpha, labels, bias } => weighted_decision(alpha, labels, *bias, coef, slices),
            Predictor::Boost { steps, labels, num_kernels } => {
                let t = check_slices(slices, *num_kernels, labels.len())?;
                let mut score = vec![0.0; t];
                for s in steps {
                    let f = decision_values(&s.alpha, labels, &slices[s.kernel], s.bias);
                    for (acc, v) in score.iter_mut().zip(f) {
                        *acc += s.beta * sign_label(v) as f64;
                    }
                }
                Ok(score)
            }
        }
    }

    pub fn predict(&self, slices: &[DMatrix<f64>]) -> Result<Vec<i64>> {
        Ok(to_labels(&self.decision_values(slices)?))
    }
}

/// Diagnostics of one binary fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitInfo {
    pub iterations: usize,
    pub converged: bool,
    /// Learned kernel weights in the method's own parametrization (`λ` for
    /// l1/l2/linf, outer `γ` for ckl, per-kernel vote totals for boost).
    pub weights: Vec<f64>,
    pub objective_trace: Vec<f64>,
}

/// Fits `method` on a binary set with labels ±1.
///
/// The l-∞ and composite duals carry a factor `½` on the Hessian, so they
/// are solved with box `2C`; with one kernel both then coincide with the
/// plain SVM at `C`.
pub fn fit_binary(g: &GramSet, method: Method, c: f64, settings: &SolverSettings) -> Result<(Predictor, FitInfo)> {
    if !(c.is_finite() && c > 0.0) {
        return invalid(format!("C must be positive, got {c}"));
    }
    let y = g.binary_labels()?;
    let l = g.num_kernels();
    match method {
        Method::Svm => {
            let k = settings.svm_kernel;
            if k >= l {
                return invalid(format!("svm kernel {k} out of range for {l} kernels"));
            }
            let q = label_conjugate(g.kernels()[k].entries(), &y);
            let sol = solve_svm(&q, &y, c, settings.kkt_tol)?;
            let mut coef = vec![0.0; l];
            coef[k] = 1.0;
            let info = FitInfo {
                iterations: sol.iterations,
                converged: sol.converged,
                weights: coef.clone(),
                objective_trace: vec![sol.objective],
            };
            Ok((Predictor::Weighted { coef, alpha: sol.alpha, labels: y, bias: sol.bias }, info))
        }
        Method::L1 | Method::L2 | Method::Linf => {
            let model = match method {
                Method::L1 => fit_l1(g, &settings.mkl(c))?,
                Method::L2 => fit_l2(g, &settings.mkl(c))?,
                _ => fit_linf(g, &settings.mkl(2.0 * c))?,
            };
            let info = FitInfo {
                iterations: model.iterations,
                converged: model.converged,
                weights: model.lambda.clone(),
                objective_trace: model.objective_trace.clone(),
            };
            let coef = model.kernel_coefficients();
            Ok((Predictor::Weighted { coef, alpha: model.svm.alpha, labels: model.labels, bias: model.svm.bias }, info))
        }
        Method::Ckl => {
            let model = fit_ckl(g, &settings.mkl(2.0 * c))?;
            let info = FitInfo {
                iterations: model.iterations,
                converged: model.converged,
                weights: model.gamma.clone(),
                objective_trace: model.objective_trace.clone(),
            };
            let coef = model.kernel_coefficients();
            Ok((Predictor::Weighted { coef, alpha: model.svm.alpha, labels: model.labels, bias: model.svm.bias }, info))
        }
        Method::Boost => {
            let opts = BoostOptions { c, max_rounds: settings.boost_rounds, kkt_tol: settings.kkt_tol };
            let model = fit_boost(g, &opts)?;
            let mut votes = vec![0.0; l];
            for r in &model.rounds {
                votes[r.kernel] += r.beta;
            }
            let info = FitInfo {
                iterations: model.rounds.len(),
                converged: model.rounds.iter().all(|r| r.svm.converged),
                weights: votes,
                objective_trace: model.rounds.iter().map(|r| r.error).collect(),
            };
            let steps = model
                .rounds
                .into_iter()
                .map(|r| BoostStep { kernel: r.kernel, beta: r.beta, alpha: r.svm.alpha, bias: r.svm.bias })
                .collect();
            Ok((Predictor::Boost { steps, labels: model.labels, num_kernels: l }, info))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, SyntheticSpec};

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("l3".parse::<Method>().is_err());
    }

    #[test]
    fn single_kernel_methods_agree_with_svm() {
        let inst = generate(&SyntheticSpec::new(1, 30, 4, 2, 1, 11)).unwrap();
        let settings = SolverSettings { kkt_tol: 1e-10, ..Default::default() };
        let (svm, _) = fit_binary(&inst.grams, Method::Svm, 0.7, &settings).unwrap();
        let base = svm.decision_values(&inst.test_grams).unwrap();
        for m in [Method::L1, Method::L2, Method::Linf, Method::Ckl] {
            let (p, _) = fit_binary(&inst.grams, m, 0.7, &settings).unwrap();
            let f = p.decision_values(&inst.test_grams).unwrap();
            let scale = base.iter().fold(1.0f64, |a, v| a.max(v.abs()));
            for (a, b) in f.iter().zip(&base) {
                assert!((a - b).abs() <= 1e-6 * scale, "{m}: {a} vs {b}");
            }
        }
    }
}
