//! Text model files for one-vs-one models.
//!
//! ```text
//! [model]
//! version = 1
//! method = linf
//! convention = hessian=...;decision=...
//! c = 1
//! classes = 0,1,2
//! num_kernels = 4
//! train = 0,1,5,...
//! label_sha256 = <hex digest of the training labels>
//!
//! [pair.0]
//! positive = 0
//! negative = 1
//! indices = 0,1,5,...
//! labels = 1,-1,...
//! kind = weighted            # or boost
//! coef = ...                 # per-kernel multipliers
//! alpha = ...
//! bias = ...
//! weights = ...              # learned weights in the method's parametrization
//!
//! [pair.0.round.0]           # boost only, one section per round
//! kernel = 2
//! beta = ...
//! alpha = ...
//! bias = ...
//! ```
//!
//! Numbers are written in Rust's shortest round-trip form, so a loaded model
//! predicts bit-identically.

use std::path::Path;

use ini::{EscapePolicy, Ini, Properties};
use sha2::{Digest, Sha256};

use super::dataset::Dataset;
use super::fit::{BoostStep, FitInfo, Method, Predictor};
use super::ovo::{OvoModel, PairModel};
use crate::error::{MklError, Result};

pub const MODEL_VERSION: u32 = 1;

/// SHA-256 over `index:label` lines of the training points.
pub fn label_digest(labels: &[i64], train: &[usize]) -> String {
    let mut h = Sha256::new();
    for &i in train {
        h.update(format!("{i}:{}\n", labels[i]).as_bytes());
    }
    hex::encode(h.finalize())
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

pub fn model_to_ini(model: &OvoModel, labels: &[i64]) -> Ini {
    let mut ini = Ini::new();
    ini.with_section(Some("model"))
        .set("version", MODEL_VERSION.to_string())
        .set("method", model.method.as_str())
        .set("convention", model.method.convention())
        .set("c", model.c.to_string())
        .set("classes", join(&model.classes))
        .set("num_kernels", model.pairs.first().map_or(0, |p| p.predictor.num_kernels()).to_string())
        .set("train", join(&model.train))
        .set("label_sha256", label_digest(labels, &model.train));
    for (n, p) in model.pairs.iter().enumerate() {
        let name = format!("pair.{n}");
        let mut s = ini.with_section(Some(name.as_str()));
        s.set("positive", p.positive.to_string())
            .set("negative", p.negative.to_string())
            .set("indices", join(&p.indices))
            .set("weights", join(&p.info.weights))
            .set("objective_trace", join(&p.info.objective_trace))
            .set("iterations", p.info.iterations.to_string())
            .set("converged", p.info.converged.to_string());
        match &p.predictor {
            Predictor::Weighted { coef, alpha, labels, bias } => {
                s.set("kind", "weighted")
                    .set("labels", join(labels))
                    .set("coef", join(coef))
                    .set("alpha", join(alpha))
                    .set("bias", bias.to_string());
            }
            Predictor::Boost { steps, labels, num_kernels } => {
                s.set("kind", "boost")
                    .set("labels", join(labels))
                    .set("num_kernels", num_kernels.to_string())
                    .set("rounds", steps.len().to_string());
                for (t, step) in steps.iter().enumerate() {
                    let round = format!("pair.{n}.round.{t}");
                    ini.with_section(Some(round.as_str()))
                        .set("kernel", step.kernel.to_string())
                        .set("beta", step.beta.to_string())
                        .set("alpha", join(&step.alpha))
                        .set("bias", step.bias.to_string());
                }
            }
        }
    }
    ini
}

pub fn save_model(path: impl AsRef<Path>, model: &OvoModel, labels: &[i64]) -> Result<()> {
    model_to_ini(model, labels).write_to_file_policy(path, EscapePolicy::Nothing)?;
    Ok(())
}

pub fn model_to_string(model: &OvoModel, labels: &[i64]) -> Result<String> {
    let mut buf = Vec::new();
    model_to_ini(model, labels).write_to_policy(&mut buf, EscapePolicy::Nothing)?;
    String::from_utf8(buf).map_err(|e| MklError::Parse(e.to_string()))
}

fn parse_err(msg: impl Into<String>) -> MklError {
    MklError::Parse(format!("model file: {}", msg.into()))
}

fn section<'a>(ini: &'a Ini, name: &str) -> Result<&'a Properties> {
    ini.section(Some(name)).ok_or_else(|| parse_err(format!("missing section [{name}]")))
}

fn get<'a>(p: &'a Properties, key: &str) -> Result<&'a str> {
    p.get(key).ok_or_else(|| parse_err(format!("missing key `{key}`")))
}

fn value<T: std::str::FromStr>(p: &Properties, key: &str) -> Result<T> {
    let v = get(p, key)?;
    v.trim().parse().map_err(|_| parse_err(format!("bad value `{v}` for `{key}`")))
}

fn list<T: std::str::FromStr>(p: &Properties, key: &str) -> Result<Vec<T>> {
    get(p, key)?
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse().map_err(|_| parse_err(format!("bad entry `{s}` in `{key}`"))))
        .collect()
}

pub fn model_from_str(text: &str) -> Result<(OvoModel, String)> {
    let ini = Ini::load_from_str_noescape(text).map_err(|e| parse_err(e.to_string()))?;
    let head = section(&ini, "model")?;
    let version: u32 = value(head, "version")?;
    if version != MODEL_VERSION {
        return Err(parse_err(format!("unsupported version {version}")));
    }
    let method: Method = get(head, "method")?.parse()?;
    let c: f64 = value(head, "c")?;
    let classes: Vec<i64> = list(head, "classes")?;
    let train: Vec<usize> = list(head, "train")?;
    let digest = get(head, "label_sha256")?.trim().to_string();
    let expected = classes.len() * classes.len().saturating_sub(1) / 2;
    let mut pairs = Vec::with_capacity(expected);
    for n in 0..expected {
        let s = section(&ini, &format!("pair.{n}"))?;
        let labels: Vec<f64> = list(s, "labels")?;
        let predictor = match get(s, "kind")? {
            "weighted" => Predictor::Weighted {
                coef: list(s, "coef")?,
                alpha: list(s, "alpha")?,
                labels,
                bias: value(s, "bias")?,
            },
            "boost" => {
                let rounds: usize = value(s, "rounds")?;
                let steps = (0..rounds)
                    .map(|t| {
                        let r = section(&ini, &format!("pair.{n}.round.{t}"))?;
                        Ok(BoostStep { kernel: value(r, "kernel")?, beta: value(r, "beta")?, alpha: list(r, "alpha")?, bias: value(r, "bias")? })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Predictor::Boost { steps, labels, num_kernels: value(s, "num_kernels")? }
            }
            other => return Err(parse_err(format!("unknown predictor kind `{other}`"))),
        };
        let info = FitInfo {
            iterations: value(s, "iterations")?,
            converged: value(s, "converged")?,
            weights: list(s, "weights")?,
            objective_trace: list(s, "objective_trace")?,
        };
        let indices: Vec<usize> = list(s, "indices")?;
        if indices.len() != labels_len(&predictor) {
            return Err(parse_err(format!("pair {n}: {} indices but {} labels", indices.len(), labels_len(&predictor))));
        }
        pairs.push(PairModel { positive: value(s, "positive")?, negative: value(s, "negative")?, indices, predictor, info });
    }
    Ok((OvoModel { method, c, classes, train, pairs }, digest))
}

fn labels_len(p: &Predictor) -> usize {
    match p {
        Predictor::Weighted { labels, .. } | Predictor::Boost { labels, .. } => labels.len(),
    }
}

/// Loads a model and checks it against the dataset it will score.
pub fn load_model(path: impl AsRef<Path>, ds: &Dataset) -> Result<OvoModel> {
    let (model, digest) = model_from_str(&std::fs::read_to_string(path)?)?;
    check_model(&model, &digest, ds)?;
    Ok(model)
}

pub fn check_model(model: &OvoModel, digest: &str, ds: &Dataset) -> Result<()> {
    if let Some(&bad) = model.train.iter().find(|&&i| i >= ds.num_points()) {
        return Err(MklError::DimensionMismatch(format!("model trains on point {bad}, dataset has {}", ds.num_points())));
    }
    if label_digest(ds.labels(), &model.train) != digest {
        return Err(MklError::InvalidInput("training labels differ from those the model was fitted on".into()));
    }
    for p in &model.pairs {
        if p.predictor.num_kernels() != ds.num_kernels() {
            return Err(MklError::DimensionMismatch(format!(
                "model uses {} kernels, dataset has {}",
                p.predictor.num_kernels(),
                ds.num_kernels()
            )));
        }
    }
    Ok(())
}
