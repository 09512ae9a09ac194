//! Sweeps over redundancy, kernel count and `C`.
//!
//! Every trial is a pure function of the configuration and the repeat index:
//! synthetic repeat `r` draws its instance with seed `seed + r` (the same
//! seed for every `ρ`), file data draws its stratified split with that seed.
//! Units of work run in parallel and are collected in sweep order, so the
//! CSV outputs do not depend on scheduling.

use std::sync::Arc;

use rayon::prelude::*;

use super::config::{DataSource, ExperimentConfig};
use super::dataset::{hold_out, stratified_split, Dataset, Split};
use super::fit::{Method, SolverSettings};
use super::metrics::{accuracy, mean_std, Confusion};
use super::ovo::{ovo_fit, ovo_predict};
use crate::datagen::{generate, SyntheticSpec};
use crate::error::{invalid, Result};

/// Validation share of the synthetic training points when not configured.
pub const SYNTHETIC_VALIDATION_FRACTION: f64 = 1.0 / 3.0;

/// Validation share of all points for file data when not configured.
pub const FILE_VALIDATION_FRACTION: f64 = 0.25;

/// A dataset with the split one repeat uses.
#[derive(Debug, Clone)]
pub struct Trial {
    pub data: Arc<Dataset>,
    pub split: Split,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub method: Method,
    /// `C` used for the final fit.
    pub c: f64,
    /// Validation accuracy per grid value (empty when nothing was selected).
    pub validation: Vec<(f64, f64)>,
    pub accuracy: f64,
    pub confusion: Confusion,
}

/// Picks `C` by validation accuracy when the grid has several values (ties
/// go to the smaller `C`), training on `split.train` only. Returns the choice
/// and the validation accuracy per grid value. Test labels are never read.
pub fn select_c(ds: &Dataset, split: &Split, method: Method, grid: &[f64], settings: &SolverSettings) -> Result<(f64, Vec<(f64, f64)>)> {
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    match grid.as_slice() {
        [] => invalid("C grid is empty"),
        [c] => Ok((*c, Vec::new())),
        _ => {
            if split.validation.is_empty() {
                return invalid("selecting C from a grid needs a validation split");
            }
            let truth = ds.labels_at(&split.validation);
            let mut scores = Vec::with_capacity(grid.len());
            for &c in &grid {
                let model = ovo_fit(ds, &split.train, method, c, settings)?;
                let pred = ovo_predict(&model, ds, &split.validation)?;
                scores.push((c, accuracy(&truth, &pred)));
            }
            let best = scores.iter().fold(scores[0], |b, &s| if s.1 > b.1 { s } else { b });
            Ok((best.0, scores))
        }
    }
}

/// [`select_c`], then a fit on training plus validation points scored on
/// the test points.
pub fn evaluate(ds: &Dataset, split: &Split, method: Method, grid: &[f64], settings: &SolverSettings) -> Result<Evaluation> {
    let (c, validation) = select_c(ds, split, method, grid, settings)?;
    let model = ovo_fit(ds, &split.fit_indices(), method, c, settings)?;
    let pred = ovo_predict(&model, ds, &split.test)?;
    let confusion = Confusion::new(&ds.classes(), &ds.labels_at(&split.test), &pred)?;
    Ok(Evaluation { method, c, validation, accuracy: confusion.accuracy(), confusion })
}

/// Trial for repeat `r`; `p` picks the synthetic redundancy level.
pub fn make_trial(cfg: &ExperimentConfig, p: Option<usize>, r: usize, files: Option<&Arc<Dataset>>) -> Result<Trial> {
    match &cfg.data {
        DataSource::Synthetic { spec, p_values } => {
            let seed = spec.seed.wrapping_add(r as u64);
            let p = p.unwrap_or(p_values[0]);
            let inst = generate(&SyntheticSpec { p, seed, ..*spec })?;
            let ds = Dataset::from_synthetic(&inst)?;
            let train = inst.train_indices();
            let vf = cfg.validation_fraction.unwrap_or(SYNTHETIC_VALIDATION_FRACTION);
            let (fit, val) = if vf > 0.0 { hold_out(&train, ds.labels(), vf, seed)? } else { (train, Vec::new()) };
            let split = Split::new(fit, val, inst.test_indices())?;
            Ok(Trial { data: Arc::new(ds), split, seed })
        }
        DataSource::Files(fd) => {
            let seed = cfg.seed.wrapping_add(r as u64);
            let ds = match files {
                Some(ds) => Arc::clone(ds),
                None => Arc::new(fd.load()?),
            };
            let split = match fd.load_split()? {
                Some(s) => s,
                None => {
                    let vf = cfg.validation_fraction.unwrap_or(FILE_VALIDATION_FRACTION);
                    stratified_split(ds.labels(), (cfg.train_fraction, vf), seed)?
                }
            };
            Ok(Trial { data: ds, split, seed })
        }
    }
}

fn file_data(cfg: &ExperimentConfig) -> Result<Option<Arc<Dataset>>> {
    match &cfg.data {
        DataSource::Files(fd) => Ok(Some(Arc::new(fd.load()?))),
        DataSource::Synthetic { .. } => Ok(None),
    }
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

fn summed(evals: &[&Evaluation]) -> Result<Confusion> {
    let mut total = evals[0].confusion.clone();
    for e in &evals[1..] {
        total.add(&e.confusion)?;
    }
    Ok(total)
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else {
        f64::NAN
    }
}

/// One repeat of a sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub repeat: usize,
    pub seed: u64,
    /// One evaluation per compared method, in method order.
    pub evals: Vec<Evaluation>,
}

impl TrialResult {
    pub fn accuracy(&self, m: Method) -> f64 {
        self.evals.iter().find(|e| e.method == m).map_or(f64::NAN, |e| e.accuracy)
    }
}

/// Repeats at one value of the sweep axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    /// `p` for redundancy sweeps, kernel count for kernel sweeps, `C` for
    /// `C` sweeps.
    pub value: f64,
    pub trials: Vec<TrialResult>,
}

impl SweepPoint {
    pub fn accuracies(&self, m: Method) -> Vec<f64> {
        self.trials.iter().map(|t| t.accuracy(m)).collect()
    }

    /// Per-repeat `acc(a)/acc(b)`.
    pub fn ratios(&self, a: Method, b: Method) -> Vec<f64> {
        self.trials.iter().map(|t| ratio(t.accuracy(a), t.accuracy(b))).collect()
    }

    pub fn mean_ratio(&self, a: Method, b: Method) -> f64 {
        mean_std(&self.ratios(a, b)).0
    }

    pub fn mean_accuracy(&self, m: Method) -> f64 {
        mean_std(&self.accuracies(m)).0
    }

    /// Confusion counts of `m` summed over repeats.
    pub fn confusion(&self, m: Method) -> Result<Confusion> {
        let evals: Vec<&Evaluation> = self.trials.iter().flat_map(|t| t.evals.iter().filter(|e| e.method == m)).collect();
        if evals.is_empty() {
            return invalid(format!("no evaluations of {m}"));
        }
        summed(&evals)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportKind {
    Redundancy,
    KernelCount,
    CSensitivity,
}

/// Result of one sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub kind: ReportKind,
    pub methods: Vec<Method>,
    pub points: Vec<SweepPoint>,
    /// `l` of the synthetic generator, used to turn `p` into `ρ`.
    pub num_kernels: usize,
}

impl SweepReport {
    fn axis(&self) -> &'static str {
        match self.kind {
            ReportKind::Redundancy => "p",
            ReportKind::KernelCount => "kernels",
            ReportKind::CSensitivity => "c",
        }
    }

    fn point_label(&self, p: &SweepPoint) -> Vec<String> {
        match self.kind {
            ReportKind::Redundancy => vec![fmt(p.value / self.num_kernels as f64), fmt(p.value)],
            _ => vec![fmt(p.value)],
        }
    }

    fn point_header(&self) -> Vec<&'static str> {
        match self.kind {
            ReportKind::Redundancy => vec!["rho", "p"],
            _ => vec![self.axis()],
        }
    }

    /// Ratios of the first method against each of the others.
    fn ratio_pairs(&self) -> Vec<(Method, Method)> {
        if self.kind == ReportKind::CSensitivity {
            return Vec::new();
        }
        self.methods[1..].iter().map(|&b| (self.methods[0], b)).collect()
    }

    /// One row per sweep point and repeat.
    pub fn rows_csv(&self) -> String {
        let mut header: Vec<String> = self.point_header().iter().map(|s| s.to_string()).collect();
        header.extend(["repeat".into(), "seed".into()]);
        for m in &self.methods {
            header.push(format!("acc_{m}"));
            header.push(format!("c_{m}"));
        }
        for (a, b) in self.ratio_pairs() {
            header.push(format!("ratio_{a}_{b}"));
        }
        let mut out = header.join(",") + "\n";
        for p in &self.points {
            for t in &p.trials {
                let mut row = self.point_label(p);
                row.extend([t.repeat.to_string(), t.seed.to_string()]);
                for e in &t.evals {
                    row.push(fmt(e.accuracy));
                    row.push(fmt(e.c));
                }
                for (a, b) in self.ratio_pairs() {
                    row.push(fmt(ratio(t.accuracy(a), t.accuracy(b))));
                }
                out.push_str(&(row.join(",") + "\n"));
            }
        }
        out
    }

    /// One row per sweep point: mean and standard deviation of each
    /// accuracy, mean and variance of each ratio.
    pub fn summary_csv(&self) -> String {
        let mut header: Vec<String> = self.point_header().iter().map(|s| s.to_string()).collect();
        header.push("repeats".into());
        for m in &self.methods {
            header.push(format!("mean_acc_{m}"));
            header.push(format!("std_acc_{m}"));
        }
        for (a, b) in self.ratio_pairs() {
            header.push(format!("mean_ratio_{a}_{b}"));
            header.push(format!("var_ratio_{a}_{b}"));
        }
        let mut out = header.join(",") + "\n";
        for p in &self.points {
            let mut row = self.point_label(p);
            row.push(p.trials.len().to_string());
            for &m in &self.methods {
                let (mean, std) = mean_std(&p.accuracies(m));
                row.push(fmt(mean));
                row.push(fmt(std));
            }
            for (a, b) in self.ratio_pairs() {
                let (mean, std) = mean_std(&p.ratios(a, b));
                row.push(fmt(mean));
                row.push(fmt(std * std));
            }
            out.push_str(&(row.join(",") + "\n"));
        }
        out
    }

    /// `(file stem, confusion)` per sweep point and method, summed over
    /// repeats.
    pub fn confusions(&self) -> Result<Vec<(String, Confusion)>> {
        let mut out = Vec::new();
        for p in &self.points {
            for &m in &self.methods {
                out.push((format!("confusion_{}{}_{m}", self.axis(), p.value), p.confusion(m)?));
            }
        }
        Ok(out)
    }
}

fn run_trials<F>(units: Vec<(usize, usize)>, trials: &[Trial], f: F) -> Result<Vec<TrialResult>>
where
    F: Fn(usize, &Trial) -> Result<Vec<Evaluation>> + Sync,
{
    units
        .into_par_iter()
        .map(|(point, r)| {
            let t = &trials[r];
            Ok(TrialResult { repeat: r, seed: t.seed, evals: f(point, t)? })
        })
        .collect()
}

fn group(points: Vec<f64>, repeats: usize, results: Vec<TrialResult>) -> Vec<SweepPoint> {
    let mut it = results.into_iter();
    points
        .into_iter()
        .map(|value| SweepPoint { value, trials: it.by_ref().take(repeats).collect() })
        .collect()
}

fn units(points: usize, repeats: usize) -> Vec<(usize, usize)> {
    (0..points).flat_map(|p| (0..repeats).map(move |r| (p, r))).collect()
}

/// Li-MKL against L1-MKL and L2-MKL across the configured `p` values, with
/// `C` chosen per method from the grid.
pub fn run_redundancy_experiment(cfg: &ExperimentConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let DataSource::Synthetic { spec, p_values } = &cfg.data else {
        return invalid("the redundancy experiment needs a [synthetic] data source");
    };
    let methods = vec![Method::Linf, Method::L1, Method::L2];
    let jobs = units(p_values.len(), cfg.repeats);
    let results: Vec<TrialResult> = jobs
        .into_par_iter()
        .map(|(point, r)| {
            let t = make_trial(cfg, Some(p_values[point]), r, None)?;
            let evals = methods
                .iter()
                .map(|&m| evaluate(&t.data, &t.split, m, &cfg.c_grid, &cfg.settings))
                .collect::<Result<Vec<_>>>()?;
            Ok(TrialResult { repeat: r, seed: t.seed, evals })
        })
        .collect::<Result<_>>()?;
    let points = p_values.iter().map(|&p| p as f64).collect();
    Ok(SweepReport { kind: ReportKind::Redundancy, methods, points: group(points, cfg.repeats, results), num_kernels: spec.l })
}

/// Li-MKL against L1-MKL on nested prefixes of the kernel list, every prefix
/// on the same splits. Synthetic data uses the first configured `p`.
pub fn run_kernel_count_sweep(cfg: &ExperimentConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let files = file_data(cfg)?;
    let trials: Vec<Trial> = (0..cfg.repeats)
        .into_par_iter()
        .map(|r| make_trial(cfg, None, r, files.as_ref()))
        .collect::<Result<_>>()?;
    let l = trials[0].data.num_kernels();
    let counts: Vec<usize> = if cfg.kernel_counts.is_empty() { (1..=l).collect() } else { cfg.kernel_counts.clone() };
    if let Some(&k) = counts.iter().find(|&&k| k == 0 || k > l) {
        return invalid(format!("kernel count {k} out of range for {l} kernels"));
    }
    let methods = vec![Method::Linf, Method::L1];
    let results = run_trials(units(counts.len(), cfg.repeats), &trials, |point, t| {
        let ds = t.data.prefix(counts[point])?;
        methods.iter().map(|&m| evaluate(&ds, &t.split, m, &cfg.c_grid, &cfg.settings)).collect()
    })?;
    let points = counts.iter().map(|&k| k as f64).collect();
    Ok(SweepReport { kind: ReportKind::KernelCount, methods, points: group(points, cfg.repeats, results), num_kernels: l })
}

/// Test accuracy of each configured method at every distinct `C`, fitted on
/// training plus validation points without selection.
pub fn run_c_sensitivity(cfg: &ExperimentConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let files = file_data(cfg)?;
    let trials: Vec<Trial> = (0..cfg.repeats)
        .into_par_iter()
        .map(|r| make_trial(cfg, None, r, files.as_ref()))
        .collect::<Result<_>>()?;
    let grid = cfg.distinct_c();
    let methods = cfg.methods.clone();
    let results = run_trials(units(grid.len(), cfg.repeats), &trials, |point, t| {
        methods.iter().map(|&m| evaluate(&t.data, &t.split, m, &[grid[point]], &cfg.settings)).collect()
    })?;
    let l = trials[0].data.num_kernels();
    Ok(SweepReport { kind: ReportKind::CSensitivity, methods, points: group(grid, cfg.repeats, results), num_kernels: l })
}
