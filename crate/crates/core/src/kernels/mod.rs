//! Gram matrices: construction from features or distances, validation,
//! positive-semidefinite repair and the multi-kernel container consumed by
//! every solver.

mod io;

use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{invalid, MklError, Result};

pub use self::io::{
    read_grouping, read_labels, read_matrix, read_matrix_binary, read_matrix_csv, write_grouping,
    write_labels, write_matrix_binary, write_matrix_csv, BINARY_MAGIC,
};

/// Default starting ridge for [`repair_psd`].
pub const DEFAULT_RIDGE: f64 = 1e-8;

/// Number of doublings tried by [`repair_psd`] before giving up.
pub const MAX_RIDGE_DOUBLINGS: u32 = 20;

const SYMMETRY_RTOL: f64 = 1e-12;

/// How a gram matrix is computed from column feature vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelRecipe {
    /// `x·x'`
    Linear,
    /// `(x·x' + offset)^degree`
    Polynomial { degree: u32, offset: f64 },
    /// `exp(-|x - x'|^2 / (2 width^2))`
    Gaussian { width: f64 },
    /// `exp(-d(x, x') / scale)` with `d` the Euclidean distance when built
    /// from features, or the supplied distance in [`gram_from_distance`].
    FromDistance { scale: f64 },
}

impl KernelRecipe {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelRecipe::Linear => Ok(()),
            KernelRecipe::Polynomial { degree, offset } => {
                if degree < 1 {
                    return invalid("polynomial degree must be at least 1");
                }
                if !offset.is_finite() || offset < 0.0 {
                    return invalid(format!("polynomial offset must be finite and >= 0, got {offset}"));
                }
                Ok(())
            }
            KernelRecipe::Gaussian { width } => {
                if !(width.is_finite() && width > 0.0) {
                    return invalid(format!("gaussian width must be positive, got {width}"));
                }
                Ok(())
            }
            KernelRecipe::FromDistance { scale } => {
                if !(scale.is_finite() && scale > 0.0) {
                    return invalid(format!("distance scale must be positive, got {scale}"));
                }
                Ok(())
            }
        }
    }

    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            KernelRecipe::Linear => dot(a, b),
            KernelRecipe::Polynomial { degree, offset } => (dot(a, b) + offset).powi(degree as i32),
            KernelRecipe::Gaussian { width } => (-sq_dist(a, b) / (2.0 * width * width)).exp(),
            KernelRecipe::FromDistance { scale } => (-sq_dist(a, b).sqrt() / scale).exp(),
        }
    }
}

impl fmt::Display for KernelRecipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelRecipe::Linear => write!(f, "linear"),
            KernelRecipe::Polynomial { degree, offset } => {
                write!(f, "polynomial(degree={degree},offset={offset})")
            }
            KernelRecipe::Gaussian { width } => {
                write!(f, "gaussian(width={width},convention=exp(-d2/(2w2)))")
            }
            KernelRecipe::FromDistance { scale } => {
                write!(f, "from_distance(scale={scale},convention=exp(-d/s))")
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// A symmetric m×m similarity matrix together with the ridge that was added
/// to it (zero unless [`repair_psd`] had to intervene).
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    entries: DMatrix<f64>,
    ridge_applied: f64,
}

impl GramMatrix {
    /// Wraps a square, finite, symmetric matrix. Positive semidefiniteness is
    /// not checked here; see [`GramMatrix::min_eigenvalue`] and [`repair_psd`].
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        check_square_symmetric(&entries, "gram matrix")?;
        Ok(Self { entries, ridge_applied: 0.0 })
    }

    /// Wraps a matrix that is symmetric by construction (e.g. a principal
    /// submatrix of a validated gram matrix).
    pub(crate) fn from_trusted(entries: DMatrix<f64>, ridge_applied: f64) -> Self {
        debug_assert!(entries.is_square());
        Self { entries, ridge_applied }
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn ridge_applied(&self) -> f64 {
        self.ridge_applied
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Smallest eigenvalue by full symmetric eigendecomposition.
    pub fn min_eigenvalue(&self) -> f64 {
        eigen_range(&self.entries).0
    }

    /// True when the smallest eigenvalue is nonnegative up to the
    /// eigensolver's rounding floor.
    pub fn is_psd(&self) -> bool {
        let (lo, hi) = eigen_range(&self.entries);
        lo >= -psd_noise_floor(self.dim(), hi)
    }

    /// Divides every entry by `trace / m` so that the mean diagonal is one.
    pub fn trace_normalized(&self) -> Result<Self> {
        let m = self.dim() as f64;
        let scale = self.entries.trace() / m;
        if !(scale.is_finite() && scale > 0.0) {
            return invalid("cannot trace-normalize a matrix with non-positive trace");
        }
        Ok(Self { entries: &self.entries / scale, ridge_applied: self.ridge_applied / scale })
    }

    /// Principal submatrix on `idx` (rows and columns).
    pub fn select(&self, idx: &[usize]) -> Self {
        Self::from_trusted(submatrix(&self.entries, idx, idx), self.ridge_applied)
    }
}

pub(crate) fn submatrix(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

fn check_square_symmetric(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if !a.is_square() {
        return Err(MklError::DimensionMismatch(format!(
            "{what} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.nrows() == 0 {
        return invalid(format!("{what} is empty"));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return invalid(format!("{what} contains non-finite entries"));
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let m = a.nrows();
    for i in 0..m {
        for j in (i + 1)..m {
            if (a[(i, j)] - a[(j, i)]).abs() > SYMMETRY_RTOL * scale {
                return Err(MklError::MatrixValidation(format!(
                    "{what} is not symmetric at ({i},{j}): {} vs {}",
                    a[(i, j)],
                    a[(j, i)]
                )));
            }
        }
    }
    Ok(())
}

/// (smallest, largest-magnitude) eigenvalue of a symmetric matrix.
pub(crate) fn eigen_range(a: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(a.clone());
    let lo = eig.eigenvalues.min();
    let hi = eig.eigenvalues.amax();
    (lo, hi)
}

/// Eigenvalues above `-floor` are indistinguishable from zero for a matrix of
/// dimension `m` and spectral radius `radius`.
pub(crate) fn psd_noise_floor(m: usize, radius: f64) -> f64 {
    16.0 * f64::EPSILON * (m as f64) * radius.max(f64::MIN_POSITIVE)
}

/// Builds the gram matrix of the columns of `features` (n×m, one datapoint per
/// column).
pub fn build_gram(features: &DMatrix<f64>, recipe: KernelRecipe) -> Result<GramMatrix> {
    recipe.validate()?;
    let m = features.ncols();
    if m == 0 {
        return invalid("feature matrix has no datapoints");
    }
    if features.iter().any(|v| !v.is_finite()) {
        return invalid("feature matrix contains non-finite values");
    }
    let cols: Vec<&[f64]> = (0..m).map(|j| column(features, j)).collect();
    let mut k = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = recipe.eval(cols[i], cols[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(GramMatrix::from_trusted(k, 0.0))
}

/// Kernel values between training columns and test columns: an m×m_test
/// slice used at prediction time.
pub fn build_cross_gram(
    train: &DMatrix<f64>,
    test: &DMatrix<f64>,
    recipe: KernelRecipe,
) -> Result<DMatrix<f64>> {
    recipe.validate()?;
    if train.nrows() != test.nrows() {
        return Err(MklError::DimensionMismatch(format!(
            "train features have {} rows, test features {}",
            train.nrows(),
            test.nrows()
        )));
    }
    if train.iter().chain(test.iter()).any(|v| !v.is_finite()) {
        return invalid("feature matrix contains non-finite values");
    }
    Ok(DMatrix::from_fn(train.ncols(), test.ncols(), |i, j| {
        recipe.eval(column(train, i), column(test, j))
    }))
}

fn column(a: &DMatrix<f64>, j: usize) -> &[f64] {
    let n = a.nrows();
    &a.as_slice()[j * n..(j + 1) * n]
}

/// Mean of the off-diagonal entries; the default `scale` for
/// [`gram_from_distance`].
pub fn mean_offdiagonal(dist: &DMatrix<f64>) -> f64 {
    let m = dist.nrows();
    if m < 2 {
        return 1.0;
    }
    let total: f64 = dist.iter().sum::<f64>() - dist.trace();
    total / (m * (m - 1)) as f64
}

/// `exp(-dist / scale)` followed by [`repair_psd`] with [`DEFAULT_RIDGE`].
pub fn gram_from_distance(dist: &DMatrix<f64>, scale: f64) -> Result<GramMatrix> {
    KernelRecipe::FromDistance { scale }.validate()?;
    check_square_symmetric(dist, "distance matrix")?;
    if dist.iter().any(|&d| d < 0.0) {
        return invalid("distance matrix has negative entries");
    }
    if dist.diagonal().iter().any(|&d| d != 0.0) {
        return invalid("distance matrix must have a zero diagonal");
    }
    let k = dist.map(|d| (-d / scale).exp());
    repair_psd(&GramMatrix::from_trusted(k, 0.0), DEFAULT_RIDGE)
}

/// Adds the smallest ridge `δ ∈ {0, ε, 2ε, 4ε, …, 2^20 ε}` that makes the
/// matrix positive semidefinite. The returned matrix records the cumulative
/// ridge.
pub fn repair_psd(g: &GramMatrix, ridge: f64) -> Result<GramMatrix> {
    if !(ridge.is_finite() && ridge > 0.0) {
        return invalid(format!("ridge must be positive, got {ridge}"));
    }
    let (lo, hi) = eigen_range(&g.entries);
    let floor = psd_noise_floor(g.dim(), hi);
    if lo >= -floor {
        return Ok(g.clone());
    }
    let mut delta = ridge;
    for _ in 0..=MAX_RIDGE_DOUBLINGS {
        if lo + delta >= 0.0 {
            let mut entries = g.entries.clone();
            for i in 0..g.dim() {
                entries[(i, i)] += delta;
            }
            return Ok(GramMatrix { entries, ridge_applied: g.ridge_applied + delta });
        }
        delta *= 2.0;
    }
    Err(MklError::Irreparable {
        max_ridge: ridge * f64::from(1u32 << MAX_RIDGE_DOUBLINGS),
        min_eigenvalue: lo,
    })
}

/// The set of gram matrices over a shared list of training points, with
/// labels and an optional kernel → descriptor grouping.
#[derive(Debug, Clone)]
pub struct GramSet {
    kernels: Vec<GramMatrix>,
    labels: Vec<i64>,
    descriptor_of: Option<Vec<usize>>,
}

impl GramSet {
    pub fn new(kernels: Vec<GramMatrix>, labels: Vec<i64>) -> Result<Self> {
        if kernels.is_empty() {
            return invalid("a gram set needs at least one kernel");
        }
        let m = labels.len();
        if m == 0 {
            return invalid("a gram set needs at least one datapoint");
        }
        for (k, g) in kernels.iter().enumerate() {
            if g.dim() != m {
                return Err(MklError::DimensionMismatch(format!(
                    "kernel {k} is {}x{} but there are {m} labels",
                    g.dim(),
                    g.dim()
                )));
            }
        }
        Ok(Self { kernels, labels, descriptor_of: None })
    }

    /// Attaches a kernel → descriptor map. Descriptor ids must form the
    /// contiguous range `0..n` so that no group is empty.
    pub fn with_grouping(mut self, descriptor_of: Vec<usize>) -> Result<Self> {
        if descriptor_of.len() != self.kernels.len() {
            return Err(MklError::DimensionMismatch(format!(
                "grouping covers {} kernels, the set has {}",
                descriptor_of.len(),
                self.kernels.len()
            )));
        }
        let n = descriptor_of.iter().max().map_or(0, |d| d + 1);
        for d in 0..n {
            if !descriptor_of.contains(&d) {
                return invalid(format!("descriptor group {d} is empty"));
            }
        }
        self.descriptor_of = Some(descriptor_of);
        Ok(self)
    }

    pub fn kernels(&self) -> &[GramMatrix] {
        &self.kernels
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn descriptor_of(&self) -> Option<&[usize]> {
        self.descriptor_of.as_deref()
    }

    pub fn num_kernels(&self) -> usize {
        self.kernels.len()
    }

    pub fn num_points(&self) -> usize {
        self.labels.len()
    }

    /// Labels as ±1 reals; fails unless every label is −1 or +1.
    pub fn binary_labels(&self) -> Result<Vec<f64>> {
        self.labels
            .iter()
            .map(|&y| match y {
                1 => Ok(1.0),
                -1 => Ok(-1.0),
                other => invalid(format!("binary labels must be -1 or +1, found {other}")),
            })
            .collect()
    }

    /// Kernel indices per descriptor. Without a grouping every kernel is its
    /// own descriptor.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        match &self.descriptor_of {
            None => (0..self.kernels.len()).map(|k| vec![k]).collect(),
            Some(map) => {
                let n = map.iter().max().map_or(0, |d| d + 1);
                let mut groups = vec![Vec::new(); n];
                for (k, &d) in map.iter().enumerate() {
                    groups[d].push(k);
                }
                groups
            }
        }
    }

    /// Restriction to the datapoints in `idx`, with replaced labels.
    pub fn subset(&self, idx: &[usize], labels: Vec<i64>) -> Result<Self> {
        if idx.len() != labels.len() {
            return Err(MklError::DimensionMismatch("subset index and label lengths differ".into()));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.num_points()) {
            return invalid(format!("subset index {bad} out of range"));
        }
        Ok(Self {
            kernels: self.kernels.iter().map(|g| g.select(idx)).collect(),
            labels,
            descriptor_of: self.descriptor_of.clone(),
        })
    }

    /// The first `count` kernels (grouping is truncated accordingly and
    /// dropped if it would leave an empty group).
    pub fn prefix(&self, count: usize) -> Result<Self> {
        if count == 0 || count > self.kernels.len() {
            return invalid(format!("kernel prefix size {count} out of range"));
        }
        let base = GramSet::new(self.kernels[..count].to_vec(), self.labels.clone())?;
        match &self.descriptor_of {
            Some(map) => base.with_grouping(map[..count].to_vec()),
            None => Ok(base),
        }
    }

    /// Checks every kernel for positive semidefiniteness.
    pub fn check_psd(&self) -> Result<()> {
        for (k, g) in self.kernels.iter().enumerate() {
            if !g.is_psd() {
                return Err(MklError::MatrixValidation(format!(
                    "kernel {k} is not positive semidefinite (min eigenvalue {:e})",
                    g.min_eigenvalue()
                )));
            }
        }
        Ok(())
    }
}

/// Validates cross-kernel slices against the training set size and kernel
/// count, returning the number of test points.
pub(crate) fn check_slices(slices: &[DMatrix<f64>], kernels: usize, m: usize) -> Result<usize> {
    if slices.len() != kernels {
        return Err(MklError::DimensionMismatch(format!(
            "expected {kernels} test slices, got {}",
            slices.len()
        )));
    }
    let cols = slices.first().map_or(0, |s| s.ncols());
    for (k, s) in slices.iter().enumerate() {
        if s.nrows() != m || s.ncols() != cols {
            return Err(MklError::DimensionMismatch(format!(
                "slice {k} is {}x{}, expected {m}x{cols}",
                s.nrows(),
                s.ncols()
            )));
        }
    }
    Ok(cols)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_diagonal_is_one() {
        let x = DMatrix::from_row_slice(2, 3, &[0.3, -1.0, 2.0, 4.0, 0.0, 1.5]);
        let g = build_gram(&x, KernelRecipe::Gaussian { width: 0.7 }).unwrap();
        for i in 0..3 {
            assert_eq!(g.entries()[(i, i)], 1.0);
        }
    }

    #[test]
    fn linear_on_orthonormal_columns_is_identity() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let x = DMatrix::from_row_slice(2, 2, &[s, -s, s, s]);
        let g = build_gram(&x, KernelRecipe::Linear).unwrap();
        assert!((g.entries() - DMatrix::identity(2, 2)).amax() < 1e-15);
    }

    #[test]
    fn gaussian_hand_value() {
        // exp(-(sqrt 2)^2 / 2) = exp(-1) = 0.36787944117144233
        let x = DMatrix::from_row_slice(1, 2, &[0.0, 2f64.sqrt()]);
        let g = build_gram(&x, KernelRecipe::Gaussian { width: 1.0 }).unwrap();
        assert!((g.entries()[(0, 1)] - 0.367_879_441_171_442_33).abs() < 1e-15);
    }

    #[test]
    fn non_finite_features_rejected() {
        let x = DMatrix::from_row_slice(1, 2, &[0.0, f64::NAN]);
        assert!(matches!(build_gram(&x, KernelRecipe::Linear), Err(MklError::InvalidInput(_))));
    }

    #[test]
    fn invalid_recipes_rejected() {
        assert!(KernelRecipe::Gaussian { width: 0.0 }.validate().is_err());
        assert!(KernelRecipe::Polynomial { degree: 0, offset: 1.0 }.validate().is_err());
        assert!(KernelRecipe::FromDistance { scale: -1.0 }.validate().is_err());
    }

    #[test]
    fn zero_distance_gives_ones() {
        let d = DMatrix::zeros(3, 3);
        let g = gram_from_distance(&d, 1.0).unwrap();
        // all-ones is PSD (rank one), so no ridge is needed
        assert_eq!(g.ridge_applied(), 0.0);
        assert!(g.entries().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn distance_equal_to_scale_gives_exp_minus_one() {
        let mu = 2.5;
        let d = DMatrix::from_row_slice(2, 2, &[0.0, mu, mu, 0.0]);
        let g = gram_from_distance(&d, mu).unwrap();
        assert!((g.entries()[(0, 1)] - (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn negative_distance_rejected() {
        let d = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]);
        assert!(matches!(gram_from_distance(&d, 1.0), Err(MklError::InvalidInput(_))));
    }

    #[test]
    fn nonzero_distance_diagonal_rejected() {
        let d = DMatrix::from_row_slice(2, 2, &[0.1, 1.0, 1.0, 0.0]);
        assert!(gram_from_distance(&d, 1.0).is_err());
    }

    #[test]
    fn repair_leaves_identity_alone() {
        let g = GramMatrix::new(DMatrix::identity(4, 4)).unwrap();
        let r = repair_psd(&g, DEFAULT_RIDGE).unwrap();
        assert_eq!(r.ridge_applied(), 0.0);
        assert_eq!(r.entries(), g.entries());
    }

    #[test]
    fn repair_small_negative_eigenvalue() {
        let g = GramMatrix::new(DMatrix::from_diagonal(&nalgebra::dvector![1.0, -1e-9])).unwrap();
        let r = repair_psd(&g, 1e-8).unwrap();
        assert_eq!(r.ridge_applied(), 1e-8);
        assert!(r.min_eigenvalue() >= 0.0);
    }

    #[test]
    fn repair_doubles_until_psd() {
        // min eigenvalue -3e-8 needs 4e-8 = 4ε
        let g = GramMatrix::new(DMatrix::from_diagonal(&nalgebra::dvector![1.0, -3e-8])).unwrap();
        let r = repair_psd(&g, 1e-8).unwrap();
        assert_eq!(r.ridge_applied(), 4e-8);
    }

    #[test]
    fn repair_rank_one_untouched() {
        let v = nalgebra::dvector![1.0, -2.0, 0.5, 3.0];
        let g = GramMatrix::new(&v * v.transpose()).unwrap();
        let r = repair_psd(&g, DEFAULT_RIDGE).unwrap();
        assert_eq!(r.ridge_applied(), 0.0);
    }

    #[test]
    fn repair_gives_up_past_cap() {
        let g = GramMatrix::new(DMatrix::from_diagonal(&nalgebra::dvector![1.0, -1.0])).unwrap();
        assert!(matches!(repair_psd(&g, 1e-8), Err(MklError::Irreparable { .. })));
    }

    #[test]
    fn asymmetric_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(GramMatrix::new(a), Err(MklError::MatrixValidation(_))));
    }

    #[test]
    fn gram_set_dimension_checks() {
        let g = GramMatrix::new(DMatrix::identity(3, 3)).unwrap();
        assert!(GramSet::new(vec![g.clone()], vec![1, -1]).is_err());
        assert!(GramSet::new(vec![], vec![1, -1, 1]).is_err());
        let set = GramSet::new(vec![g.clone(), g], vec![1, -1, 1]).unwrap();
        assert!(set.clone().with_grouping(vec![0, 2]).is_err());
        assert!(set.clone().with_grouping(vec![0]).is_err());
        let grouped = set.with_grouping(vec![1, 0]).unwrap();
        assert_eq!(grouped.groups(), vec![vec![1], vec![0]]);
    }

    #[test]
    fn binary_labels_reject_other_ids() {
        let g = GramMatrix::new(DMatrix::identity(2, 2)).unwrap();
        let set = GramSet::new(vec![g], vec![1, 2]).unwrap();
        assert!(set.binary_labels().is_err());
    }

    #[test]
    fn trace_normalization_gives_unit_mean_diagonal() {
        let g = GramMatrix::new(DMatrix::from_diagonal(&nalgebra::dvector![2.0, 6.0])).unwrap();
        let n = g.trace_normalized().unwrap();
        assert!((n.entries().trace() - 2.0).abs() < 1e-15);
    }
}
