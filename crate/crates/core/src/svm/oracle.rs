//! Dense reference solver for small SVM duals, used to cross-check the
//! pairwise solver. Accelerated projected gradient with adaptive restart;
//! the projection onto `{0 ≤ α ≤ C, yᵀα = 0}` is computed exactly by
//! bisection on the equality multiplier.

use nalgebra::{DMatrix, SymmetricEigen};

use super::{finish, validate_problem, SvmSolution};
use crate::error::{MklError, Result};

pub const BRUTE_FORCE_MAX_POINTS: usize = 30;

const MAX_ITER: usize = 2_000_000;
const STEP_TOL: f64 = 1e-14;

/// Reference solution of the same problem as [`super::solve_svm`]. Slow;
/// limited to [`BRUTE_FORCE_MAX_POINTS`] points.
pub fn brute_force_svm(q: &DMatrix<f64>, labels: &[f64], c: f64) -> Result<SvmSolution> {
    let m = labels.len();
    if m > BRUTE_FORCE_MAX_POINTS {
        return Err(MklError::SizeGuard { size: m, limit: BRUTE_FORCE_MAX_POINTS });
    }
    validate_problem(q, labels, c)?;

    let lipschitz = SymmetricEigen::new(q.clone()).eigenvalues.max().max(1e-12);
    let step = 1.0 / lipschitz;
    let upper = vec![c; m];

    let objective = |a: &[f64]| super::dual_objective(q, a);
    let gradient = |a: &[f64]| -> Vec<f64> {
        (0..m).map(|i| (0..m).map(|j| q[(i, j)] * a[j]).sum::<f64>() - 1.0).collect()
    };

    let mut x = vec![0.0; m];
    let mut x_prev = x.clone();
    let mut t = 1.0f64;
    let mut f_prev = objective(&x);
    let mut stalled = 0;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        let beta = (t - 1.0) / (t + 2.0).max(1.0);
        let z: Vec<f64> = x.iter().zip(&x_prev).map(|(a, b)| a + beta * (a - b)).collect();
        let g = gradient(&z);
        let v: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| zi - step * gi).collect();
        let next = project(&v, labels, c);
        let f_next = objective(&next);
        if f_next > f_prev {
            // function restart: drop momentum and take a plain projected step
            t = 1.0;
            let g = gradient(&x);
            let v: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - step * gi).collect();
            let plain = project(&v, labels, c);
            let f_plain = objective(&plain);
            let moved = max_diff(&plain, &x);
            x_prev = x;
            x = plain;
            f_prev = f_plain;
            if moved < STEP_TOL {
                break;
            }
            continue;
        }
        let moved = max_diff(&next, &x);
        x_prev = std::mem::replace(&mut x, next);
        f_prev = f_next;
        t += 1.0;
        if moved < STEP_TOL * c.max(1.0) {
            stalled += 1;
            if stalled > 50 {
                break;
            }
        } else {
            stalled = 0;
        }
    }

    let grad = gradient(&x);
    // KKT violation in the same units as the pairwise solver reports
    let mut up = f64::NEG_INFINITY;
    let mut low = f64::NEG_INFINITY;
    for i in 0..m {
        let (y, a) = (labels[i], x[i]);
        let can_up = if y > 0.0 { a < c } else { a > 0.0 };
        let can_low = if y > 0.0 { a > 0.0 } else { a < c };
        if can_up {
            up = up.max(-y * grad[i]);
        }
        if can_low {
            low = low.max(y * grad[i]);
        }
    }
    let violation = (up + low).max(0.0);
    Ok(finish(labels, &upper, c, x, &grad, iterations, violation, iterations < MAX_ITER))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Euclidean projection onto `{0 ≤ α ≤ c, yᵀα = 0}`: `αᵢ = clip(vᵢ − μyᵢ)`
/// with `μ` the root of the non-increasing map `μ ↦ Σ yᵢ clip(vᵢ − μyᵢ)`.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let clip = |x: f64| x.clamp(0.0, c);
    let residual = |mu: f64| -> f64 { v.iter().zip(y).map(|(vi, yi)| yi * clip(vi - mu * yi)).sum() };
    let bound = v.iter().fold(0.0f64, |a, x| a.max(x.abs())) + c + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * bound {
            break;
        }
    }
    let mu = 0.5 * (lo + hi);
    let mut a: Vec<f64> = v.iter().zip(y).map(|(vi, yi)| clip(vi - mu * yi)).collect();
    // the bisection leaves a rounding-level imbalance; put it on a free variable
    let r: f64 = a.iter().zip(y).map(|(ai, yi)| ai * yi).sum();
    if r != 0.0 {
        if let Some(i) = (0..a.len()).find(|&i| {
            let fixed = a[i] - r * y[i];
            a[i] > 0.0 && a[i] < c && (0.0..=c).contains(&fixed)
        }) {
            a[i] -= r * y[i];
        }
    }
    a
}
