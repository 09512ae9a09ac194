#![allow(dead_code)]

use mkl_core::harness::Dataset;
use mkl_core::kernels::{build_gram, GramMatrix, GramSet, KernelRecipe};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn alternating(m: usize) -> Vec<i64> {
    (0..m).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect()
}

/// `AᵀA` for a random `r×m` matrix with `r` between 1 and `m`.
pub fn random_psd(rng: &mut ChaCha8Rng, m: usize) -> DMatrix<f64> {
    let r = rng.random_range(1..=m);
    let a = gaussian(rng, r, m);
    let k = a.transpose() * a;
    (&k + k.transpose()) * 0.5
}

/// Random labels with both classes present.
pub fn random_labels(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let mut y: Vec<f64> = (0..m).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
    y[0] = 1.0;
    y[1] = -1.0;
    y
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

/// Features for `labels` whose first coordinate is shifted by `shift·y`.
fn shifted(rng: &mut ChaCha8Rng, labels: &[i64], dims: usize, shift: f64) -> DMatrix<f64> {
    let mut x = gaussian(rng, dims, labels.len());
    for (c, &y) in labels.iter().enumerate() {
        x[(0, c)] += shift * y as f64;
    }
    x
}

/// `2m` points: kernel 0 sees class-shifted features, kernel 1 independent
/// noise. The first `m` points are for training, the rest for testing.
pub fn informative_and_noise(seed: u64, m: usize) -> Dataset {
    let mut rng = rng(seed);
    let labels: Vec<i64> = alternating(2 * m);
    let signal = shifted(&mut rng, &labels, 3, 1.2);
    let noise = gaussian(&mut rng, 3, 2 * m);
    let kernels = vec![
        build_gram(&signal, KernelRecipe::Gaussian { width: 1.5 }).unwrap(),
        build_gram(&noise, KernelRecipe::Gaussian { width: 1.5 }).unwrap(),
    ];
    Dataset::new(kernels, labels).unwrap()
}

/// Two noisy descriptors of the same alternating labels, each seen through a
/// narrow and a wide Gaussian kernel.
pub fn two_descriptors(seed: u64, m: usize) -> GramSet {
    let mut rng = rng(seed);
    let labels = alternating(m);
    let mut kernels: Vec<GramMatrix> = Vec::new();
    for shift in [0.8, 0.5] {
        let x = shifted(&mut rng, &labels, 3, shift);
        for width in [0.7, 2.5] {
            kernels.push(build_gram(&x, KernelRecipe::Gaussian { width }).unwrap());
        }
    }
    GramSet::new(kernels, labels).unwrap().with_grouping(vec![0, 0, 1, 1]).unwrap()
}
