//! Closed-form minimizer of `Σₖ Dₖ/λₖ` over the probability simplex.

use crate::error::{invalid, MklError, Result};

/// `λₖ = √Dₖ / Σⱼ √Dⱼ`, the minimizer of `Σₖ Dₖ/λₖ` subject to `λ ≥ 0`,
/// `Σλ = 1`.
///
/// Fails with [`MklError::DegenerateDirection`] when every `Dₖ` is zero, in
/// which case any point of the simplex is optimal and the caller decides.
pub fn sqrt_ratio_update(d: &[f64]) -> Result<Vec<f64>> {
    if d.is_empty() {
        return invalid("weight update needs at least one entry");
    }
    if let Some(bad) = d.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return invalid(format!("weight update needs finite nonnegative entries, found {bad}"));
    }
    let roots: Vec<f64> = d.iter().map(|v| v.sqrt()).collect();
    let total: f64 = roots.iter().sum();
    if total <= 0.0 {
        return Err(MklError::DegenerateDirection);
    }
    Ok(roots.into_iter().map(|r| r / total).collect())
}

/// Minimizer of `Σₖ Dₖ/λₖ` over the simplex with every `λₖ ≥ floor`:
/// weights whose share `√Dₖ/ν` would fall below `floor` are held there and
/// the remaining mass is split in proportion to `√D`. With nothing clamped
/// the result is exactly [`sqrt_ratio_update`].
pub fn floored_sqrt_ratio_update(d: &[f64], floor: f64) -> Result<Vec<f64>> {
    let plain = sqrt_ratio_update(d)?;
    if !(floor >= 0.0 && floor * (d.len() as f64) < 1.0) {
        return invalid(format!("weight floor {floor} leaves no mass for {} weights", d.len()));
    }
    if plain.iter().all(|&v| v >= floor) {
        return Ok(plain);
    }
    let roots: Vec<f64> = d.iter().map(|v| v.sqrt()).collect();
    let mut clamped = vec![false; d.len()];
    loop {
        let held = clamped.iter().filter(|&&c| c).count() as f64;
        let mass = 1.0 - floor * held;
        let total: f64 = roots.iter().zip(&clamped).filter(|(_, &c)| !c).map(|(r, _)| r).sum();
        let out: Vec<f64> = roots
            .iter()
            .zip(&clamped)
            .map(|(&r, &c)| if c { floor } else { mass * r / total })
            .collect();
        let mut changed = false;
        for (k, &v) in out.iter().enumerate() {
            if !clamped[k] && v < floor {
                clamped[k] = true;
                changed = true;
            }
        }
        if !changed {
            return Ok(out);
        }
    }
}

/// `Σₖ Dₖ/λₖ`, with `0/0` read as `0` and `D/0` as `+∞`.
pub fn ratio_objective(d: &[f64], lambda: &[f64]) -> f64 {
    d.iter()
        .zip(lambda)
        .map(|(&dk, &lk)| {
            if dk == 0.0 {
                0.0
            } else if lk == 0.0 {
                f64::INFINITY
            } else {
                dk / lk
            }
        })
        .sum()
}

pub fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Largest absolute coordinate difference.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substitution_values() {
        let l = sqrt_ratio_update(&[1.0, 4.0]).unwrap();
        assert!((l[0] - 1.0 / 3.0).abs() < 1e-15 && (l[1] - 2.0 / 3.0).abs() < 1e-15);
        let l = sqrt_ratio_update(&[1.0, 4.0, 9.0]).unwrap();
        for (v, e) in l.iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!((v - e).abs() < 1e-15);
        }
    }

    #[test]
    fn equal_entries_give_uniform() {
        let l = sqrt_ratio_update(&[2.5; 7]).unwrap();
        assert!(l.iter().all(|v| (v - 1.0 / 7.0).abs() < 1e-15));
    }

    #[test]
    fn all_zero_is_degenerate() {
        assert!(matches!(sqrt_ratio_update(&[0.0, 0.0]), Err(MklError::DegenerateDirection)));
        assert!(sqrt_ratio_update(&[-1.0, 2.0]).is_err());
    }

    #[test]
    fn floor_holds_small_weights() {
        let l = floored_sqrt_ratio_update(&[0.0, 1.0, 4.0], 0.01).unwrap();
        assert_eq!(l[0], 0.01);
        assert!((l[1] - 0.99 / 3.0).abs() < 1e-15 && (l[2] - 0.99 * 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(floored_sqrt_ratio_update(&[1.0, 4.0], 0.01).unwrap(), sqrt_ratio_update(&[1.0, 4.0]).unwrap());
        assert!(floored_sqrt_ratio_update(&[1.0, 4.0], 0.5).is_err());
    }

    #[test]
    fn floored_update_beats_floored_points() {
        // tiny entries clamp in cascade
        let d = [1e-12, 1e-8, 1.0, 2.0];
        let l = floored_sqrt_ratio_update(&d, 1e-3).unwrap();
        assert_eq!(&l[..2], &[1e-3, 1e-3]);
        assert!((l.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let best = ratio_objective(&d, &l);
        for t in 1..100 {
            let a = 0.998 * t as f64 / 100.0;
            let other = [1e-3, 1e-3, a, 0.998 - a];
            assert!(best <= ratio_objective(&d, &other) + 1e-12);
        }
    }

    #[test]
    fn zero_entry_gets_zero_weight() {
        let l = sqrt_ratio_update(&[0.0, 3.0]).unwrap();
        assert_eq!(l, vec![0.0, 1.0]);
        assert_eq!(ratio_objective(&[0.0, 3.0], &l), 3.0);
    }
}
