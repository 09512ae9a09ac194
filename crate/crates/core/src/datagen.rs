//! Synthetic kernels with controlled redundancy.
//!
//! Points are drawn from two unit-covariance Gaussians. The `n` features are
//! split into `p` contiguous groups; kernel `k` sees one group `Xₖ` through
//! its own random map `Aₖ` and is `Kₖ = XₖᵀAₖᵀAₖXₖ`. The first `p` kernels
//! take groups `0..p` in order and the remaining `l − p` copy a uniformly
//! chosen group, so `ρ = p/l` runs from one shared source (`p = 1`) to fully
//! disjoint information (`p = l`).
//!
//! Randomness comes from ChaCha20 seeded with `seed`, one stream per purpose:
//! stream 1 draws the class means, 2 the points, 3 the copied groups and 4 the
//! maps `Aₖ` (kernel by kernel, row-major).

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::kernels::{write_labels, write_matrix_binary, write_matrix_csv};
use crate::kernels::{submatrix, GramMatrix, GramSet};

pub const DEFAULT_SEPARATION: f64 = 1.5;

const STREAM_MEANS: u64 = 1;
const STREAM_POINTS: u64 = 2;
const STREAM_PROVENANCE: u64 = 3;
const STREAM_TRANSFORMS: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    /// Number of kernels.
    pub l: usize,
    /// Training points, half per class. The same number is drawn for testing.
    pub m: usize,
    /// Feature dimension.
    pub n: usize,
    /// Row expansion of each map: `Aₖ` is `(τn/p) × (n/p)`.
    pub tau: usize,
    /// Number of disjoint feature groups.
    pub p: usize,
    pub seed: u64,
    /// Distance of each class mean from the origin.
    pub separation: f64,
}

impl SyntheticSpec {
    pub fn new(l: usize, m: usize, n: usize, tau: usize, p: usize, seed: u64) -> Self {
        Self { l, m, n, tau, p, seed, separation: DEFAULT_SEPARATION }
    }

    /// Desk-scale defaults: `l = 10, m = 150, n = 20, τ = 4`.
    pub fn desk(p: usize, seed: u64) -> Self {
        Self::new(10, 150, 20, 4, p, seed)
    }

    pub fn rho(&self) -> f64 {
        self.p as f64 / self.l as f64
    }

    pub fn group_size(&self) -> usize {
        self.n / self.p
    }

    pub fn validate(&self) -> Result<()> {
        if self.l == 0 || self.n == 0 || self.tau == 0 {
            return invalid("l, n and tau must be positive");
        }
        if self.p == 0 || self.p > self.l {
            return invalid(format!("p must lie in 1..={}, got {}", self.l, self.p));
        }
        if self.n % self.p != 0 {
            return invalid(format!("p = {} does not divide n = {}", self.p, self.n));
        }
        if self.m < 2 || self.m % 2 != 0 {
            return invalid(format!("m must be even and at least 2, got {}", self.m));
        }
        if !(self.separation.is_finite() && self.separation >= 0.0) {
            return invalid(format!("separation must be nonnegative, got {}", self.separation));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    pub spec: SyntheticSpec,
    /// Training grams (the first `m` points).
    pub grams: GramSet,
    /// `m × m` cross kernels between training rows and test columns.
    pub test_grams: Vec<DMatrix<f64>>,
    pub train_labels: Vec<i64>,
    pub test_labels: Vec<i64>,
    /// Feature group each kernel was built from.
    pub provenance: Vec<usize>,
    /// Class means for labels +1 and −1.
    pub mean_pos: Vec<f64>,
    pub mean_neg: Vec<f64>,
    /// Grams over all `2m` points, training points first.
    pub full: Vec<GramMatrix>,
}

impl SyntheticInstance {
    pub fn all_labels(&self) -> Vec<i64> {
        self.train_labels.iter().chain(&self.test_labels).copied().collect()
    }

    pub fn train_indices(&self) -> Vec<usize> {
        (0..self.spec.m).collect()
    }

    pub fn test_indices(&self) -> Vec<usize> {
        (self.spec.m..2 * self.spec.m).collect()
    }
}

fn stream(seed: u64, tag: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng
}

fn normal(rng: &mut ChaCha20Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Labels `+1, −1, +1, …` for `m` points (`m` even).
fn alternating(m: usize) -> Vec<i64> {
    (0..m).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect()
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticInstance> {
    spec.validate()?;
    let (l, m, n, p) = (spec.l, spec.m, spec.n, spec.p);
    let total = 2 * m;

    let mut rng = stream(spec.seed, STREAM_MEANS);
    let u: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mean_pos: Vec<f64> = u.iter().map(|v| spec.separation * v / norm).collect();
    let mean_neg: Vec<f64> = mean_pos.iter().map(|v| -v).collect();

    let labels: Vec<i64> = alternating(m).into_iter().chain(alternating(m)).collect();
    let mut rng = stream(spec.seed, STREAM_POINTS);
    // one column per point
    let mut x = DMatrix::zeros(n, total);
    for (j, &y) in labels.iter().enumerate() {
        let mean = if y > 0 { &mean_pos } else { &mean_neg };
        for i in 0..n {
            x[(i, j)] = mean[i] + normal(&mut rng);
        }
    }

    let mut rng = stream(spec.seed, STREAM_PROVENANCE);
    let provenance: Vec<usize> = (0..l).map(|k| if k < p { k } else { rng.random_range(0..p) }).collect();

    let size = spec.group_size();
    let rows = spec.tau * size;
    let mut rng = stream(spec.seed, STREAM_TRANSFORMS);
    let maps: Vec<DMatrix<f64>> = (0..l)
        .map(|_| DMatrix::from_row_iterator(rows, size, (0..rows * size).map(|_| normal(&mut rng))))
        .collect();

    let full: Vec<GramMatrix> = maps
        .par_iter()
        .zip(&provenance)
        .map(|(a, &group)| {
            let z = a * x.rows(group * size, size);
            let k = z.transpose() * &z;
            let sym = DMatrix::from_fn(total, total, |i, j| 0.5 * (k[(i, j)] + k[(j, i)]));
            GramMatrix::new(sym)
        })
        .collect::<Result<_>>()?;

    let train: Vec<usize> = (0..m).collect();
    let test: Vec<usize> = (m..total).collect();
    let grams = GramSet::new(full.iter().map(|g| g.select(&train)).collect(), labels[..m].to_vec())?;
    let test_grams = full.iter().map(|g| submatrix(g.entries(), &train, &test)).collect();
    Ok(SyntheticInstance {
        spec: *spec,
        grams,
        test_grams,
        train_labels: labels[..m].to_vec(),
        test_labels: labels[m..].to_vec(),
        provenance,
        mean_pos,
        mean_neg,
        full,
    })
}

/// One instance per `p`, all sharing the base seed.
pub fn rho_sweep(base: &SyntheticSpec, p_values: &[usize]) -> Result<Vec<SyntheticInstance>> {
    p_values.par_iter().map(|&p| generate(&SyntheticSpec { p, ..*base })).collect()
}

/// Writes `kernel_<k>.csv` (or `.bin`) over all `2m` points, `labels.csv`,
/// `split.csv` (`index,role`) and `provenance.csv` (`kernel_index,group_index`).
pub fn write_instance(dir: impl AsRef<Path>, inst: &SyntheticInstance, binary: bool) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for (k, g) in inst.full.iter().enumerate() {
        if binary {
            write_matrix_binary(dir.join(format!("kernel_{k}.bin")), g.entries())?;
        } else {
            write_matrix_csv(dir.join(format!("kernel_{k}.csv")), g.entries())?;
        }
    }
    write_labels(dir.join("labels.csv"), &inst.all_labels())?;

    let mut split = String::from("index,role\n");
    for i in 0..2 * inst.spec.m {
        split.push_str(&format!("{i},{}\n", if i < inst.spec.m { "train" } else { "test" }));
    }
    fs::write(dir.join("split.csv"), split)?;

    let s = &inst.spec;
    let fmt_vec = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ");
    let mut f = fs::File::create(dir.join("provenance.csv"))?;
    writeln!(f, "# l={} m={} n={} tau={} p={} seed={} separation={}", s.l, s.m, s.n, s.tau, s.p, s.seed, s.separation)?;
    writeln!(f, "# mean_pos={}", fmt_vec(&inst.mean_pos))?;
    writeln!(f, "# mean_neg={}", fmt_vec(&inst.mean_neg))?;
    writeln!(f, "kernel_index,group_index")?;
    for (k, g) in inst.provenance.iter().enumerate() {
        writeln!(f, "{k},{g}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(p: usize, seed: u64) -> SyntheticSpec {
        SyntheticSpec::new(4, 12, 8, 2, p, seed)
    }

    #[test]
    fn full_redundancy_free_is_bijection() {
        let inst = generate(&small(4, 3)).unwrap();
        assert_eq!(inst.provenance, vec![0, 1, 2, 3]);
    }

    #[test]
    fn single_group_feeds_every_kernel() {
        let inst = generate(&small(1, 3)).unwrap();
        assert!(inst.provenance.iter().all(|&g| g == 0));
    }

    #[test]
    fn shapes_and_psd() {
        let inst = generate(&small(2, 9)).unwrap();
        assert_eq!(inst.grams.num_kernels(), 4);
        assert_eq!(inst.grams.num_points(), 12);
        assert_eq!(inst.test_grams[0].shape(), (12, 12));
        assert_eq!(&inst.provenance[..2], &[0, 1]);
        assert!(inst.provenance.iter().all(|&g| g < 2));
        inst.grams.check_psd().unwrap();
        assert!(inst.full.iter().all(GramMatrix::is_psd));
    }

    #[test]
    fn seeds_reproduce_bitwise() {
        let a = generate(&small(2, 42)).unwrap();
        let b = generate(&small(2, 42)).unwrap();
        let c = generate(&small(2, 43)).unwrap();
        assert_eq!(a.full, b.full);
        assert_eq!(a.provenance, b.provenance);
        assert_ne!(a.full, c.full);
    }

    #[test]
    fn group_size_one() {
        let inst = generate(&SyntheticSpec::new(8, 6, 8, 3, 8, 1)).unwrap();
        assert_eq!(inst.spec.group_size(), 1);
        assert_eq!(inst.provenance, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(generate(&small(3, 0)).is_err()); // 3 does not divide 8
        assert!(generate(&small(5, 0)).is_err()); // p > l
        assert!(generate(&SyntheticSpec::new(4, 7, 8, 2, 2, 0)).is_err());
        assert!(generate(&SyntheticSpec::new(4, 8, 8, 2, 0, 0)).is_err());
    }

    #[test]
    fn means_have_requested_length() {
        let inst = generate(&small(2, 5)).unwrap();
        let r: f64 = inst.mean_pos.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((r - DEFAULT_SEPARATION).abs() < 1e-12);
    }
}
