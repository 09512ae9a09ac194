//! Experiment configuration files.
//!
//! ```text
//! [experiment]
//! method = linf              # used by `train`
//! methods = linf, l1         # compared by the sweeps
//! c = 0.01, 0.1, 1, 10       # one value or a grid
//! repeats = 10
//! seed = 7
//! sweep = rho                # rho | kernel_count | c
//! kernel_counts = 1, 2, 5    # kernel_count sweep; default 1..=l
//! train_fraction = 0.5       # file data only
//! validation_fraction = 0.25 # share of all points (files) or of train (synthetic)
//!
//! [synthetic]
//! l = 10
//! m = 150
//! n = 20
//! tau = 4
//! p = 1, 2, 5, 10
//!
//! [data]                     # instead of [synthetic]
//! kernels = k0.csv, k1.csv   # gram matrices over all points
//! distances = d0.csv         # or distance matrices, turned into exp(-d/scale)
//! distance_scale = 0.5       # default: mean off-diagonal distance
//! labels = labels.csv
//! grouping = grouping.csv
//! split = split.csv          # fixed split instead of random stratified ones
//!
//! [solver]
//! kkt_tol = 1e-8
//! max_iter = 100
//! obj_tol = 1e-5
//! weight_floor = 1e-6
//! boost_rounds = 10
//! svm_kernel = 0
//! ```
//!
//! Relative paths are resolved against the configuration file's directory.
//! Unknown sections and keys are errors.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;

use super::dataset::{Dataset, Split};
use super::fit::{Method, SolverSettings};
use crate::datagen::SyntheticSpec;
use crate::error::{invalid, MklError, Result};
use crate::kernels::{gram_from_distance, mean_offdiagonal, read_grouping, read_labels, read_matrix, GramMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Rho,
    KernelCount,
    C,
}

impl SweepAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepAxis::Rho => "rho",
            SweepAxis::KernelCount => "kernel_count",
            SweepAxis::C => "c",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepAxis {
    type Err = MklError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "rho" => Ok(SweepAxis::Rho),
            "kernel_count" | "kernels" => Ok(SweepAxis::KernelCount),
            "c" | "C" | "csweep" => Ok(SweepAxis::C),
            other => Err(MklError::Parse(format!("unknown sweep axis `{other}`"))),
        }
    }
}

/// Precomputed matrices over every point of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct FileData {
    pub kernels: Vec<PathBuf>,
    pub distances: Vec<PathBuf>,
    pub distance_scale: Option<f64>,
    pub labels: PathBuf,
    pub grouping: Option<PathBuf>,
    pub split: Option<PathBuf>,
}

impl FileData {
    /// Kernel files come first, then the kernels built from distances.
    pub fn load(&self) -> Result<Dataset> {
        let labels = read_labels(&self.labels)?;
        let mut kernels = Vec::with_capacity(self.kernels.len() + self.distances.len());
        for p in &self.kernels {
            kernels.push(GramMatrix::new(read_matrix(p)?)?);
        }
        for p in &self.distances {
            let d = read_matrix(p)?;
            let scale = self.distance_scale.unwrap_or_else(|| mean_offdiagonal(&d));
            kernels.push(gram_from_distance(&d, scale)?);
        }
        let ds = Dataset::new(kernels, labels)?;
        match &self.grouping {
            Some(g) => ds.with_grouping(read_grouping(g)?),
            None => Ok(ds),
        }
    }

    pub fn load_split(&self) -> Result<Option<Split>> {
        match &self.split {
            Some(p) => Ok(Some(Split::parse(&std::fs::read_to_string(p)?)?)),
            None => Ok(None),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// One instance per `p` value; repeat `r` uses seed `seed + r`.
    Synthetic { spec: SyntheticSpec, p_values: Vec<usize> },
    Files(FileData),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub method: Method,
    pub methods: Vec<Method>,
    pub c_grid: Vec<f64>,
    pub data: DataSource,
    pub repeats: usize,
    pub seed: u64,
    pub sweep: Option<SweepAxis>,
    pub kernel_counts: Vec<usize>,
    pub train_fraction: f64,
    /// Share of all points for file data, of the training points for
    /// synthetic data.
    pub validation_fraction: Option<f64>,
    pub settings: SolverSettings,
}

impl ExperimentConfig {
    /// Synthetic configuration with one `C`, comparing l-∞ against l-1.
    pub fn synthetic(spec: SyntheticSpec, p_values: Vec<usize>, c: f64, repeats: usize, seed: u64) -> Self {
        Self {
            method: Method::Linf,
            methods: vec![Method::Linf, Method::L1],
            c_grid: vec![c],
            data: DataSource::Synthetic { spec, p_values },
            repeats,
            seed,
            sweep: None,
            kernel_counts: Vec::new(),
            train_fraction: 0.5,
            validation_fraction: None,
            settings: SolverSettings::default(),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let ini = Ini::load_from_str_noescape(text).map_err(|e| MklError::Parse(format!("config: {e}")))?;
        let mut cfg = Self::synthetic(SyntheticSpec::desk(1, 0), vec![1], 1.0, 1, 0);
        let mut synthetic: Option<(SyntheticSpec, Vec<usize>)> = None;
        let mut files: Option<FileData> = None;

        for (section, props) in ini.iter() {
            match section {
                None => {
                    if let Some((k, _)) = props.iter().next() {
                        return Err(MklError::Parse(format!("config key `{k}` outside a section")));
                    }
                }
                Some("experiment") => {
                    for (k, v) in props.iter() {
                        match k {
                            "method" => cfg.method = v.parse()?,
                            "methods" => cfg.methods = parse_list(k, v)?,
                            "c" | "c_grid" => cfg.c_grid = parse_list(k, v)?,
                            "repeats" => cfg.repeats = parse_value(k, v)?,
                            "seed" => cfg.seed = parse_value(k, v)?,
                            "sweep" => cfg.sweep = Some(v.parse()?),
                            "kernel_counts" => cfg.kernel_counts = parse_list(k, v)?,
                            "train_fraction" => cfg.train_fraction = parse_value(k, v)?,
                            "validation_fraction" => cfg.validation_fraction = Some(parse_value(k, v)?),
                            _ => return unknown_key("experiment", k),
                        }
                    }
                }
                Some("synthetic") => {
                    let mut spec = SyntheticSpec::desk(1, 0);
                    let mut p_values = vec![1];
                    for (k, v) in props.iter() {
                        match k {
                            "l" => spec.l = parse_value(k, v)?,
                            "m" => spec.m = parse_value(k, v)?,
                            "n" => spec.n = parse_value(k, v)?,
                            "tau" => spec.tau = parse_value(k, v)?,
                            "p" => p_values = parse_list(k, v)?,
                            "separation" => spec.separation = parse_value(k, v)?,
                            _ => return unknown_key("synthetic", k),
                        }
                    }
                    synthetic = Some((spec, p_values));
                }
                Some("data") => {
                    let mut fd = FileData {
                        kernels: Vec::new(),
                        distances: Vec::new(),
                        distance_scale: None,
                        labels: PathBuf::new(),
                        grouping: None,
                        split: None,
                    };
                    for (k, v) in props.iter() {
                        match k {
                            "kernels" => fd.kernels = path_list(base, v),
                            "distances" => fd.distances = path_list(base, v),
                            "distance_scale" => fd.distance_scale = Some(parse_value(k, v)?),
                            "labels" => fd.labels = base.join(v.trim()),
                            "grouping" => fd.grouping = Some(base.join(v.trim())),
                            "split" => fd.split = Some(base.join(v.trim())),
                            _ => return unknown_key("data", k),
                        }
                    }
                    files = Some(fd);
                }
                Some("solver") => {
                    let s = &mut cfg.settings;
                    for (k, v) in props.iter() {
                        match k {
                            "kkt_tol" => s.kkt_tol = parse_value(k, v)?,
                            "max_iter" => s.max_iter = parse_value(k, v)?,
                            "obj_tol" => s.obj_tol = parse_value(k, v)?,
                            "weight_floor" => s.weight_floor = parse_value(k, v)?,
                            "boost_rounds" => s.boost_rounds = parse_value(k, v)?,
                            "svm_kernel" => s.svm_kernel = parse_value(k, v)?,
                            _ => return unknown_key("solver", k),
                        }
                    }
                }
                Some(other) => return Err(MklError::Parse(format!("unknown config section [{other}]"))),
            }
        }

        cfg.data = match (synthetic, files) {
            (Some(_), Some(_)) => return invalid("config has both [synthetic] and [data] sections"),
            (None, None) => return invalid("config needs a [synthetic] or [data] section"),
            (Some((spec, p_values)), None) => {
                let spec = SyntheticSpec { seed: cfg.seed, ..spec };
                DataSource::Synthetic { spec, p_values }
            }
            (None, Some(fd)) => DataSource::Files(fd),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_grid.is_empty() {
            return invalid("C grid is empty");
        }
        if let Some(c) = self.c_grid.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return invalid(format!("C must be positive, got {c}"));
        }
        if self.repeats == 0 {
            return invalid("repeats must be at least 1");
        }
        if self.methods.is_empty() {
            return invalid("methods list is empty");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return invalid(format!("train_fraction must lie in (0, 1), got {}", self.train_fraction));
        }
        if let Some(v) = self.validation_fraction {
            if !(0.0..1.0).contains(&v) {
                return invalid(format!("validation_fraction must lie in [0, 1), got {v}"));
            }
        }
        if self.kernel_counts.contains(&0) {
            return invalid("kernel counts must be positive");
        }
        match &self.data {
            DataSource::Synthetic { spec, p_values } => {
                if p_values.is_empty() {
                    return invalid("p list is empty");
                }
                for &p in p_values {
                    SyntheticSpec { p, ..*spec }.validate()?;
                }
                if let Some(&k) = self.kernel_counts.iter().find(|&&k| k > spec.l) {
                    return invalid(format!("kernel count {k} exceeds l = {}", spec.l));
                }
            }
            DataSource::Files(fd) => {
                if fd.kernels.is_empty() && fd.distances.is_empty() {
                    return invalid("[data] lists no kernels or distances");
                }
                let mut paths: Vec<&PathBuf> = fd.kernels.iter().chain(&fd.distances).collect();
                paths.push(&fd.labels);
                paths.extend(fd.grouping.iter());
                paths.extend(fd.split.iter());
                for p in paths {
                    if !p.is_file() {
                        return invalid(format!("referenced file {} does not exist", p.display()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Sorted C grid without duplicates.
    pub fn distinct_c(&self) -> Vec<f64> {
        let mut c = self.c_grid.clone();
        c.sort_by(f64::total_cmp);
        c.dedup();
        c
    }
}

fn unknown_key<T>(section: &str, key: &str) -> Result<T> {
    Err(MklError::Parse(format!("unknown key `{key}` in [{section}]")))
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| MklError::Parse(format!("bad value `{v}` for `{key}`")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_value(key, s)).collect()
}

fn path_list(base: &Path, v: &str) -> Vec<PathBuf> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| base.join(s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_synthetic_config() {
        let text = "[experiment]\nmethods = linf, l1, l2\nc = 1, 0.1, 1\nrepeats = 3\nseed = 5\nsweep = rho\n\n[synthetic]\nl = 10\nm = 20\nn = 20\ntau = 2\np = 1, 2, 5, 10\n\n[solver]\nkkt_tol = 1e-6\n";
        let cfg = ExperimentConfig::parse(text, Path::new(".")).unwrap();
        assert_eq!(cfg.methods, vec![Method::Linf, Method::L1, Method::L2]);
        assert_eq!(cfg.distinct_c(), vec![0.1, 1.0]);
        assert_eq!(cfg.repeats, 3);
        assert_eq!(cfg.sweep, Some(SweepAxis::Rho));
        assert_eq!(cfg.settings.kkt_tol, 1e-6);
        match cfg.data {
            DataSource::Synthetic { spec, p_values } => {
                assert_eq!((spec.l, spec.m, spec.n, spec.tau, spec.seed), (10, 20, 20, 2, 5));
                assert_eq!(p_values, vec![1, 2, 5, 10]);
            }
            _ => panic!("expected synthetic data"),
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let base = Path::new(".");
        let ok = "[synthetic]\nl = 4\nm = 10\nn = 4\ntau = 1\np = 2\n";
        assert!(ExperimentConfig::parse(ok, base).is_ok());
        assert!(ExperimentConfig::parse(&format!("[experiment]\nc = -1\n{ok}"), base).is_err());
        assert!(ExperimentConfig::parse(&format!("[experiment]\nrepeats = 0\n{ok}"), base).is_err());
        assert!(ExperimentConfig::parse(&format!("[experiment]\ncolour = red\n{ok}"), base).is_err());
        assert!(ExperimentConfig::parse(&format!("[extra]\na = 1\n{ok}"), base).is_err());
        assert!(ExperimentConfig::parse("[experiment]\nrepeats = 1\n", base).is_err());
        assert!(ExperimentConfig::parse("[data]\nkernels = missing.csv\nlabels = missing.csv\n", base).is_err());
    }
}
