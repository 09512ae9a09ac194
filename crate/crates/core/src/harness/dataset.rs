//! Full `N × N` kernel collections with index-based splits.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::datagen::SyntheticInstance;
use crate::error::{invalid, MklError, Result};
use crate::kernels::{submatrix, GramMatrix, GramSet};

const STREAM_SPLIT: u64 = 5;

/// Kernels over every point of a dataset, with class labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    kernels: Vec<GramMatrix>,
    labels: Vec<i64>,
    grouping: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(kernels: Vec<GramMatrix>, labels: Vec<i64>) -> Result<Self> {
        // reuse the set's dimension checks
        GramSet::new(kernels.clone(), labels.clone())?;
        Ok(Self { kernels, labels, grouping: None })
    }

    pub fn with_grouping(mut self, grouping: Vec<usize>) -> Result<Self> {
        GramSet::new(self.kernels.clone(), self.labels.clone())?.with_grouping(grouping.clone())?;
        self.grouping = Some(grouping);
        Ok(self)
    }

    pub fn from_synthetic(inst: &SyntheticInstance) -> Result<Self> {
        Self::new(inst.full.clone(), inst.all_labels())
    }

    pub fn kernels(&self) -> &[GramMatrix] {
        &self.kernels
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn grouping(&self) -> Option<&[usize]> {
        self.grouping.as_deref()
    }

    pub fn num_points(&self) -> usize {
        self.labels.len()
    }

    pub fn num_kernels(&self) -> usize {
        self.kernels.len()
    }

    /// Sorted distinct labels.
    pub fn classes(&self) -> Vec<i64> {
        distinct(&self.labels)
    }

    /// The first `count` kernels in file order.
    pub fn prefix(&self, count: usize) -> Result<Self> {
        if count == 0 || count > self.kernels.len() {
            return invalid(format!("kernel prefix size {count} out of range"));
        }
        let base = Self::new(self.kernels[..count].to_vec(), self.labels.clone())?;
        match &self.grouping {
            Some(map) => base.with_grouping(map[..count].to_vec()),
            None => Ok(base),
        }
    }

    /// Training set over `idx` with the dataset's own labels.
    pub fn gram_set(&self, idx: &[usize]) -> Result<GramSet> {
        self.relabeled_set(idx, self.labels_at(idx))
    }

    /// Training set over `idx` with replacement labels.
    pub fn relabeled_set(&self, idx: &[usize], labels: Vec<i64>) -> Result<GramSet> {
        self.check_indices(idx)?;
        let set = GramSet::new(self.kernels.iter().map(|g| g.select(idx)).collect(), labels)?;
        match &self.grouping {
            Some(map) => set.with_grouping(map.clone()),
            None => Ok(set),
        }
    }

    /// Cross kernels with `rows` as training points and `cols` as targets.
    pub fn cross(&self, rows: &[usize], cols: &[usize]) -> Result<Vec<DMatrix<f64>>> {
        self.check_indices(rows)?;
        self.check_indices(cols)?;
        Ok(self.kernels.iter().map(|g| submatrix(g.entries(), rows, cols)).collect())
    }

    pub fn labels_at(&self, idx: &[usize]) -> Vec<i64> {
        idx.iter().map(|&i| self.labels[i]).collect()
    }

    fn check_indices(&self, idx: &[usize]) -> Result<()> {
        match idx.iter().find(|&&i| i >= self.num_points()) {
            Some(bad) => invalid(format!("point index {bad} out of range for {} points", self.num_points())),
            None => Ok(()),
        }
    }
}

pub(crate) fn distinct(labels: &[i64]) -> Vec<i64> {
    let mut c = labels.to_vec();
    c.sort_unstable();
    c.dedup();
    c
}

/// Disjoint train / validation / test indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn new(train: Vec<usize>, validation: Vec<usize>, test: Vec<usize>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for &i in train.iter().chain(&validation).chain(&test) {
            if !seen.insert(i) {
                return invalid(format!("point {i} appears in more than one split"));
            }
        }
        if train.is_empty() || test.is_empty() {
            return invalid("train and test splits must be nonempty");
        }
        Ok(Self { train, validation, test })
    }

    /// Training and validation points together, sorted.
    pub fn fit_indices(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.train.iter().chain(&self.validation).copied().collect();
        all.sort_unstable();
        all
    }

    /// Reads `index,role` lines (`train`, `validation` or `test`); a header
    /// line and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (n == 0 && line.starts_with("index")) {
                continue;
            }
            let (idx, role) = line
                .split_once(',')
                .ok_or_else(|| MklError::Parse(format!("split line {}: expected `index,role`", n + 1)))?;
            let idx: usize = idx
                .trim()
                .parse()
                .map_err(|_| MklError::Parse(format!("split line {}: bad index `{idx}`", n + 1)))?;
            match role.trim() {
                "train" => train.push(idx),
                "validation" => val.push(idx),
                "test" => test.push(idx),
                other => return Err(MklError::Parse(format!("split line {}: unknown role `{other}`", n + 1))),
            }
        }
        Self::new(train, val, test)
    }

    pub fn to_csv(&self) -> String {
        let mut rows: Vec<(usize, &str)> = self
            .train
            .iter()
            .map(|&i| (i, "train"))
            .chain(self.validation.iter().map(|&i| (i, "validation")))
            .chain(self.test.iter().map(|&i| (i, "test")))
            .collect();
        rows.sort_unstable();
        let mut out = String::from("index,role\n");
        for (i, r) in rows {
            out.push_str(&format!("{i},{r}\n"));
        }
        out
    }
}

fn split_rng(seed: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_SPLIT);
    rng
}

fn by_class(idx: &[usize], labels: &[i64]) -> BTreeMap<i64, Vec<usize>> {
    let mut classes: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for &i in idx {
        classes.entry(labels[i]).or_default().push(i);
    }
    classes
}

/// Per-class shuffled split with `fractions = (train, validation)`; the rest
/// of each class is test. Counts are floored per class.
pub fn stratified_split(labels: &[i64], fractions: (f64, f64), seed: u64) -> Result<Split> {
    let (ft, fv) = fractions;
    if !(ft > 0.0 && fv >= 0.0 && ft + fv < 1.0) {
        return invalid(format!("split fractions ({ft}, {fv}) must be positive and leave a test share"));
    }
    let mut rng = split_rng(seed);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    let all: Vec<usize> = (0..labels.len()).collect();
    for (_, mut members) in by_class(&all, labels) {
        members.shuffle(&mut rng);
        let n = members.len();
        let nt = ((ft * n as f64).floor() as usize).max(1).min(n);
        let nv = ((fv * n as f64).floor() as usize).min(n - nt);
        train.extend_from_slice(&members[..nt]);
        val.extend_from_slice(&members[nt..nt + nv]);
        test.extend_from_slice(&members[nt + nv..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Split::new(train, val, test)
}

/// Moves a stratified `fraction` of `train` into a validation set.
pub fn hold_out(train: &[usize], labels: &[i64], fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return invalid(format!("validation fraction must lie in (0, 1), got {fraction}"));
    }
    let mut rng = split_rng(seed);
    let (mut fit, mut val) = (Vec::new(), Vec::new());
    for (_, mut members) in by_class(train, labels) {
        members.shuffle(&mut rng);
        let nv = (fraction * members.len() as f64).floor() as usize;
        val.extend_from_slice(&members[..nv]);
        fit.extend_from_slice(&members[nv..]);
    }
    fit.sort_unstable();
    val.sort_unstable();
    Ok((fit, val))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stratified_split_is_disjoint_and_per_class() {
        let labels: Vec<i64> = (0..40).map(|i| (i % 4) as i64).collect();
        let s = stratified_split(&labels, (0.5, 0.25), 3).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (20, 8, 12));
        for c in 0..4 {
            assert_eq!(s.train.iter().filter(|&&i| labels[i] == c).count(), 5);
        }
        assert_eq!(s, stratified_split(&labels, (0.5, 0.25), 3).unwrap());
        assert_ne!(s, stratified_split(&labels, (0.5, 0.25), 4).unwrap());
    }

    #[test]
    fn split_round_trips_through_csv() {
        let s = Split::new(vec![0, 3], vec![1], vec![2, 4]).unwrap();
        assert_eq!(Split::parse(&s.to_csv()).unwrap(), s);
        assert!(Split::new(vec![0, 1], vec![1], vec![2]).is_err());
        assert!(Split::parse("0,train\n1,holdout\n").is_err());
    }

    #[test]
    fn hold_out_keeps_classes() {
        let labels: Vec<i64> = (0..30).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
        let train: Vec<usize> = (0..30).collect();
        let (fit, val) = hold_out(&train, &labels, 1.0 / 3.0, 9).unwrap();
        assert_eq!(val.len(), 10);
        assert_eq!(val.iter().filter(|&&i| labels[i] == 1).count(), 5);
        assert!(fit.iter().all(|i| !val.contains(i)));
    }
}
