use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mkl_core::datagen::{generate, write_instance, SyntheticSpec, DEFAULT_SEPARATION};
use mkl_core::harness::{
    accuracy, emit_confusion, load_model, ovo_fit, ovo_predict, run_c_sensitivity, run_kernel_count_sweep,
    run_redundancy_experiment, save_model, select_c, stratified_split, Confusion, DataSource, Dataset, ExperimentConfig,
    FileData, Split, SweepReport,
};
use mkl_core::{MklError, Result};

#[derive(Parser)]
#[command(name = "mkl", version, about = "Multiple kernel learning experiments on precomputed kernels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic instance with controlled kernel redundancy.
    Gen(GenArgs),
    /// Fit a one-vs-one model on the training (and validation) points.
    Train(TrainArgs),
    /// Score points with a saved model.
    Predict(PredictArgs),
    /// Run a sweep and write per-repeat and summary CSVs.
    Experiment(ExperimentArgs),
    /// Print a CSV file as an aligned table.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 10)]
    l: usize,
    #[arg(long, default_value_t = 150)]
    m: usize,
    #[arg(long, default_value_t = 20)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    tau: usize,
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_SEPARATION)]
    separation: f64,
    /// Write kernels in the binary format instead of CSV.
    #[arg(long)]
    binary: bool,
    #[arg(long)]
    out: PathBuf,
}

/// Dataset and solver flags; each overrides the matching config entry.
#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Gram matrices over all points, comma separated.
    #[arg(long, value_delimiter = ',')]
    kernels: Vec<PathBuf>,
    /// Distance matrices turned into kernels with exp(-d/scale).
    #[arg(long, value_delimiter = ',')]
    distances: Vec<PathBuf>,
    #[arg(long)]
    distance_scale: Option<f64>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    grouping: Option<PathBuf>,
    /// `index,role` file fixing the train/validation/test split.
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    method: Option<String>,
    /// One value or a comma-separated grid chosen on the validation points.
    #[arg(long, value_delimiter = ',')]
    c: Vec<f64>,
    #[arg(long)]
    model: PathBuf,
    /// Also write the split used.
    #[arg(long)]
    split_out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: PathBuf,
    /// Predictions as `index,true,predicted`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    confusion: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sweep {
    Redundancy,
    Kernels,
    Csweep,
}

impl Sweep {
    fn name(self) -> &'static str {
        match self {
            Sweep::Redundancy => "redundancy",
            Sweep::Kernels => "kernels",
            Sweep::Csweep => "csweep",
        }
    }
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(value_enum)]
    sweep: Sweep,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repeats: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    input: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Experiment(a) => experiment(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn gen(a: GenArgs) -> Result<()> {
    let spec = SyntheticSpec { separation: a.separation, ..SyntheticSpec::new(a.l, a.m, a.n, a.tau, a.p, a.seed) };
    let inst = generate(&spec)?;
    write_instance(&a.out, &inst, a.binary)?;
    println!("wrote {} kernels over {} points to {}", spec.l, 2 * spec.m, a.out.display());
    Ok(())
}

/// Merges the config file with the command-line flags.
fn load_config(d: &DataArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &d.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => {
            let labels = d.labels.clone().ok_or_else(|| MklError::InvalidInput("--labels or --config is required".into()))?;
            let mut cfg = ExperimentConfig::synthetic(SyntheticSpec::desk(1, 0), vec![1], 1.0, 1, 0);
            cfg.data = DataSource::Files(FileData {
                kernels: Vec::new(),
                distances: Vec::new(),
                distance_scale: None,
                labels,
                grouping: None,
                split: None,
            });
            cfg
        }
    };
    if let Some(s) = d.seed {
        cfg.seed = s;
    }
    if let DataSource::Files(fd) = &mut cfg.data {
        if !d.kernels.is_empty() || !d.distances.is_empty() {
            fd.kernels = d.kernels.clone();
            fd.distances = d.distances.clone();
        }
        if let Some(s) = d.distance_scale {
            fd.distance_scale = Some(s);
        }
        if let Some(l) = &d.labels {
            fd.labels = l.clone();
        }
        if let Some(g) = &d.grouping {
            fd.grouping = Some(g.clone());
        }
        if let Some(s) = &d.split {
            fd.split = Some(s.clone());
        }
    } else if !d.kernels.is_empty() || d.labels.is_some() {
        return Err(MklError::InvalidInput("data flags cannot be combined with a [synthetic] config".into()));
    }
    Ok(cfg)
}

fn file_data(cfg: &ExperimentConfig) -> Result<&FileData> {
    match &cfg.data {
        DataSource::Files(fd) => Ok(fd),
        DataSource::Synthetic { .. } => {
            Err(MklError::InvalidInput("train and predict need file data; run `mkl gen` first for synthetic kernels".into()))
        }
    }
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = load_config(&a.data)?;
    if let Some(m) = &a.method {
        cfg.method = m.parse()?;
    }
    if !a.c.is_empty() {
        cfg.c_grid = a.c.clone();
    }
    cfg.validate()?;
    let fd = file_data(&cfg)?;
    let ds = fd.load()?;
    let split = match fd.load_split()? {
        Some(s) => s,
        None => stratified_split(ds.labels(), (cfg.train_fraction, cfg.validation_fraction.unwrap_or(0.25)), cfg.seed)?,
    };
    let (c, validation) = select_c(&ds, &split, cfg.method, &cfg.c_grid, &cfg.settings)?;
    for (c, acc) in &validation {
        println!("validation C={c} accuracy={acc}");
    }
    let model = ovo_fit(&ds, &split.fit_indices(), cfg.method, c, &cfg.settings)?;
    save_model(&a.model, &model, ds.labels())?;
    if let Some(p) = &a.split_out {
        fs::write(p, split.to_csv())?;
    }
    let unconverged = model.pairs.iter().filter(|p| !p.info.converged).count();
    let test_accuracy = accuracy(&ds.labels_at(&split.test), &ovo_predict(&model, &ds, &split.test)?);
    println!(
        "method={} C={c} pairs={} test_accuracy={test_accuracy} unconverged_pairs={unconverged}",
        cfg.method,
        model.pairs.len()
    );
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    let cfg = load_config(&a.data)?;
    let fd = file_data(&cfg)?;
    let ds: Dataset = fd.load()?;
    let model = load_model(&a.model, &ds)?;
    let targets: Vec<usize> = match fd.load_split()? {
        Some(Split { test, .. }) => test,
        None => (0..ds.num_points()).filter(|i| !model.train.contains(i)).collect(),
    };
    if targets.is_empty() {
        return Err(MklError::InvalidInput("no points left to score".into()));
    }
    let pred = ovo_predict(&model, &ds, &targets)?;
    let truth = ds.labels_at(&targets);
    let mut out = String::from("index,true,predicted\n");
    for ((i, t), p) in targets.iter().zip(&truth).zip(&pred) {
        out.push_str(&format!("{i},{t},{p}\n"));
    }
    fs::write(&a.out, out)?;
    let confusion = Confusion::new(&ds.classes(), &truth, &pred)?;
    if let Some(p) = &a.confusion {
        fs::write(p, emit_confusion(&confusion))?;
    }
    println!("points={} accuracy={}", targets.len(), confusion.accuracy());
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::from_file(&a.config)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
        if let DataSource::Synthetic { spec, .. } = &mut cfg.data {
            spec.seed = s;
        }
    }
    if let Some(r) = a.repeats {
        cfg.repeats = r;
    }
    let report = match a.sweep {
        Sweep::Redundancy => run_redundancy_experiment(&cfg)?,
        Sweep::Kernels => run_kernel_count_sweep(&cfg)?,
        Sweep::Csweep => run_c_sensitivity(&cfg)?,
    };
    write_report(&a.out, a.sweep.name(), &report)?;
    print!("{}", report.summary_csv());
    Ok(())
}

fn write_report(dir: &Path, name: &str, report: &SweepReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(format!("{name}_rows.csv")), report.rows_csv())?;
    fs::write(dir.join(format!("{name}_summary.csv")), report.summary_csv())?;
    for (stem, c) in report.confusions()? {
        fs::write(dir.join(format!("{name}_{stem}.csv")), emit_confusion(&c))?;
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let text = fs::read_to_string(&a.input)?;
    let rows: Vec<Vec<String>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .map(|cell| match cell.parse::<f64>() {
                    Ok(v) if cell.contains('.') || cell.contains('e') => format!("{v:.4}"),
                    _ => cell.to_string(),
                })
                .collect()
        })
        .collect();
    if rows.is_empty() {
        return Err(MklError::Parse(format!("{} is empty", a.input.display())));
    }
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..cols).map(|c| rows.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0)).collect();
    for r in &rows {
        let line: Vec<String> = r.iter().zip(&widths).map(|(cell, w)| format!("{cell:>w$}")).collect();
        println!("{}", line.join("  "));
    }
    Ok(())
}
