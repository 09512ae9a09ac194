//! Accuracy, confusion matrices and summary statistics.

use crate::error::{invalid, MklError, Result};

/// Counts with rows indexed by true class and columns by predicted class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Confusion {
    pub classes: Vec<i64>,
    pub counts: Vec<Vec<usize>>,
}

impl Confusion {
    /// Predictions outside `classes` are rejected; true labels must be listed too.
    pub fn new(classes: &[i64], truth: &[i64], predicted: &[i64]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(MklError::DimensionMismatch(format!(
                "{} true labels but {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut sorted = classes.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let mut counts = vec![vec![0; sorted.len()]; sorted.len()];
        for (&t, &p) in truth.iter().zip(predicted) {
            let (Ok(i), Ok(j)) = (sorted.binary_search(&t), sorted.binary_search(&p)) else {
                return invalid(format!("label pair ({t}, {p}) not among the listed classes"));
            };
            counts[i][j] += 1;
        }
        Ok(Self { classes: sorted, counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Trace over total; 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.correct() as f64 / t as f64,
        }
    }

    pub fn row_sums(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// Element-wise sum; both matrices must list the same classes.
    pub fn add(&mut self, other: &Confusion) -> Result<()> {
        if self.classes != other.classes {
            return invalid("confusion matrices list different classes");
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }
}

/// CSV with a `true\predicted` header row and one row per true class.
pub fn emit_confusion(c: &Confusion) -> String {
    let mut out = String::from("true\\predicted");
    for cl in &c.classes {
        out.push_str(&format!(",{cl}"));
    }
    out.push('\n');
    for (cl, row) in c.classes.iter().zip(&c.counts) {
        out.push_str(&cl.to_string());
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

pub fn accuracy(truth: &[i64], predicted: &[i64]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    truth.iter().zip(predicted).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

/// Mean and sample standard deviation (`n − 1` denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, _) = mean_std(&rx);
    let (my, _) = mean_std(&ry);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            r[o] = avg;
        }
        i = j + 1;
    }
    r
}
