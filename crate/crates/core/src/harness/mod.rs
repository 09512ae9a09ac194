//! Multiclass reduction, metrics, experiment sweeps and the file formats the
//! command-line tool reads and writes.

pub mod config;
pub mod dataset;
pub mod experiment;
pub mod fit;
pub mod metrics;
pub mod model_file;
pub mod ovo;

pub use config::{DataSource, ExperimentConfig, FileData, SweepAxis};
pub use dataset::{hold_out, stratified_split, Dataset, Split};
pub use experiment::{
    evaluate, make_trial, run_c_sensitivity, run_kernel_count_sweep, run_redundancy_experiment, select_c, Evaluation, ReportKind,
    SweepPoint, SweepReport, Trial, TrialResult,
};
pub use fit::{fit_binary, FitInfo, Method, Predictor, SolverSettings};
pub use metrics::{accuracy, emit_confusion, mean_std, spearman, Confusion};
pub use model_file::{load_model, save_model};
pub use ovo::{ovo_fit, ovo_predict, OvoModel, PairModel};
