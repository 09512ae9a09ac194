//! Pairwise working-set solver for
//!
//! ```text
//! min ½ αᵀQα − 1ᵀα   s.t.  0 ≤ αᵢ ≤ Uᵢ,  yᵀα = 0
//! ```
//!
//! where `Q = YKY` is the label-conjugated kernel. The first index of each
//! pair is the maximal KKT violator; the second maximizes the second-order
//! decrease among violators. Every step is an exact line minimization along
//! a feasible direction, so the objective never increases. That property is
//! what lets the MKL solvers warm-start without breaking monotonicity.
//!
//! Pairwise steps crawl when `Q` is badly conditioned, which the l-∞ solver
//! produces on purpose as weights approach zero. Every `m` steps the solver
//! therefore minimizes exactly over the current free variables
//! ([`face_step`]), truncating at the first bound it meets and repeating on
//! the smaller face until a step is not truncated. These are descent steps
//! too.
//!
//! The requested tolerance is raised to the rounding level of the gradient,
//! `4ε · maxᵢ Σⱼ |Qᵢⱼ αⱼ|`, which for such Hessians can exceed it.

use nalgebra::linalg::Cholesky;
use nalgebra::DMatrix;

const TAU: f64 = 1e-12;

/// Relative ridge on the reduced Hessian of a face step.
const FACE_RIDGE: f64 = 1e-11;

#[derive(Debug, Clone)]
pub(crate) struct SmoOutcome {
    pub alpha: Vec<f64>,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub violation: f64,
    pub converged: bool,
}

pub(crate) fn default_max_iter(m: usize) -> usize {
    (100 * m).max(10_000_000)
}

#[inline]
fn in_up(y: f64, a: f64, u: f64) -> bool {
    if y > 0.0 {
        a < u
    } else {
        a > 0.0
    }
}

#[inline]
fn in_low(y: f64, a: f64, u: f64) -> bool {
    if y > 0.0 {
        a > 0.0
    } else {
        a < u
    }
}

/// Runs the solver from `alpha0` (or zero). `alpha0` must be feasible.
pub(crate) fn solve(
    q: &DMatrix<f64>,
    y: &[f64],
    upper: &[f64],
    alpha0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> SmoOutcome {
    let m = y.len();
    let mut alpha = match alpha0 {
        Some(a) => a.to_vec(),
        None => vec![0.0; m],
    };
    let mut grad = gradient(q, &alpha);
    let diag: Vec<f64> = (0..m).map(|i| q[(i, i)]).collect();

    let block = m.max(50);
    let mut iterations = 0;
    let mut since_face = 0;
    let mut tol = tol.max(rounding_level(q, &alpha));
    loop {
        if since_face >= block {
            since_face = 0;
            let mut moved = false;
            for _ in 0..m {
                match face_step(q, y, upper, &mut alpha, &mut grad) {
                    Face::Unchanged => break,
                    Face::Full => {
                        moved = true;
                        break;
                    }
                    Face::Truncated => moved = true,
                }
            }
            if moved {
                // fresh gradient: face steps are large and pairwise updates
                // have accumulated rounding
                grad = gradient(q, &alpha);
            }
            tol = tol.max(rounding_level(q, &alpha));
        }
        // maximal violating index from the "up" set
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..m {
            if in_up(y[t], alpha[t], upper[t]) {
                let v = -y[t] * grad[t];
                if v >= gmax {
                    gmax = v;
                    i = t;
                }
            }
        }
        // partner with the largest second-order decrease
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        let qi = if i != usize::MAX { Some(q.column(i)) } else { None };
        for t in 0..m {
            if !in_low(y[t], alpha[t], upper[t]) {
                continue;
            }
            let yg = y[t] * grad[t];
            if yg >= gmax2 {
                gmax2 = yg;
            }
            if let Some(qi) = qi {
                let b = gmax + yg;
                if b > 0.0 {
                    let mut a = diag[i] + diag[t] - 2.0 * y[i] * y[t] * qi[t];
                    if a <= 0.0 {
                        a = TAU;
                    }
                    let obj = -(b * b) / a;
                    if obj <= best {
                        best = obj;
                        j = t;
                    }
                }
            }
        }
        let violation = (gmax + gmax2).max(0.0);
        if i == usize::MAX || j == usize::MAX || gmax + gmax2 < tol {
            return SmoOutcome { alpha, gradient: grad, iterations, violation, converged: true };
        }
        if iterations >= max_iter {
            return SmoOutcome { alpha, gradient: grad, iterations, violation, converged: false };
        }
        iterations += 1;
        since_face += 1;

        let (ci, cj) = (upper[i], upper[j]);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = q[(i, j)];
        if y[i] != y[j] {
            let mut quad = diag[i] + diag[j] + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let mut quad = diag[i] + diag[j] - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let di = alpha[i] - old_i;
        let dj = alpha[j] - old_j;
        let (col_i, col_j) = (q.column(i), q.column(j));
        for t in 0..m {
            grad[t] += col_i[t] * di + col_j[t] * dj;
        }
    }
}

fn rounding_level(q: &DMatrix<f64>, alpha: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..alpha.len() {
        let row: f64 = alpha.iter().enumerate().map(|(j, &a)| (q[(i, j)] * a).abs()).sum();
        worst = worst.max(row);
    }
    4.0 * f64::EPSILON * worst
}

fn gradient(q: &DMatrix<f64>, alpha: &[f64]) -> Vec<f64> {
    let m = alpha.len();
    let mut grad = vec![-1.0; m];
    for (j, &aj) in alpha.iter().enumerate() {
        if aj != 0.0 {
            let col = q.column(j);
            for t in 0..m {
                grad[t] += col[t] * aj;
            }
        }
    }
    grad
}

enum Face {
    Unchanged,
    /// Stopped at a bound short of the face minimizer.
    Truncated,
    Full,
}

/// Minimizes the objective over the free variables with the rest fixed,
/// then moves from `alpha` toward that minimizer as far as the box allows.
/// The equality constraint is eliminated through the first free variable.
fn face_step(q: &DMatrix<f64>, y: &[f64], upper: &[f64], alpha: &mut [f64], grad: &mut [f64]) -> Face {
    let free: Vec<usize> = (0..y.len()).filter(|&t| alpha[t] > 0.0 && alpha[t] < upper[t]).collect();
    if free.len() < 2 {
        return Face::Unchanged;
    }
    let r = free[0];
    let rest = &free[1..];
    let f = rest.len();
    // d_r = Σₒ sₒ dₒ keeps yᵀd = 0
    let s: Vec<f64> = rest.iter().map(|&o| -y[r] * y[o]).collect();
    let qrr = q[(r, r)];
    let mut h = DMatrix::from_fn(f, f, |a, b| {
        let (ia, ib) = (rest[a], rest[b]);
        q[(ia, ib)] + s[a] * q[(r, ib)] + s[b] * q[(ia, r)] + s[a] * s[b] * qrr
    });
    let g: Vec<f64> = rest.iter().zip(&s).map(|(&o, so)| grad[o] + so * grad[r]).collect();
    let scale = (0..f).map(|a| h[(a, a)]).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return Face::Unchanged;
    }
    for a in 0..f {
        h[(a, a)] += FACE_RIDGE * scale;
    }
    let Some(chol) = Cholesky::new(h) else {
        return Face::Unchanged;
    };
    let u = chol.solve(&nalgebra::DVector::from_iterator(f, g.iter().map(|v| -v)));

    let mut d = vec![0.0; y.len()];
    for (a, &o) in rest.iter().enumerate() {
        d[o] = u[a];
        d[r] += s[a] * u[a];
    }
    let mut t = 1.0;
    let mut hit = None;
    for &i in &free {
        let limit = if d[i] > 0.0 {
            (upper[i] - alpha[i]) / d[i]
        } else if d[i] < 0.0 {
            -alpha[i] / d[i]
        } else {
            continue;
        };
        if limit < t {
            t = limit;
            hit = Some(i);
        }
    }
    if !(t > 0.0) {
        return Face::Unchanged;
    }
    let mut qd = vec![0.0; y.len()];
    for &i in &free {
        if d[i] != 0.0 {
            let col = q.column(i);
            for (v, c) in qd.iter_mut().zip(col.iter()) {
                *v += c * d[i];
            }
        }
    }
    let slope: f64 = free.iter().map(|&i| grad[i] * d[i]).sum();
    let curv: f64 = free.iter().map(|&i| qd[i] * d[i]).sum();
    if !(t * slope + 0.5 * t * t * curv < 0.0) {
        return Face::Unchanged;
    }
    for &i in &free {
        alpha[i] = (alpha[i] + t * d[i]).clamp(0.0, upper[i]);
    }
    if let Some(i) = hit {
        alpha[i] = if d[i] > 0.0 { upper[i] } else { 0.0 };
    }
    for (gv, v) in grad.iter_mut().zip(&qd) {
        *gv += t * v;
    }
    if hit.is_some() {
        Face::Truncated
    } else {
        Face::Full
    }
}

/// Offset `b` of the decision function `Σ αᵢyᵢK(xᵢ,x) − b`: the mean of
/// `yᵢGᵢ` over free variables, or the midpoint of the feasible KKT interval
/// when every variable sits at a bound.
pub(crate) fn bias(y: &[f64], alpha: &[f64], upper: &[f64], grad: &[f64]) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut sum = 0.0;
    let mut free = 0usize;
    for t in 0..y.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= upper[t] {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    if free > 0 {
        sum / free as f64
    } else if ub.is_finite() && lb.is_finite() {
        0.5 * (ub + lb)
    } else if ub.is_finite() {
        ub
    } else if lb.is_finite() {
        lb
    } else {
        0.0
    }
}
