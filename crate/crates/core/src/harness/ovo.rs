//! One-vs-one multiclass reduction.

use rayon::prelude::*;

use super::dataset::{distinct, Dataset};
use super::fit::{fit_binary, FitInfo, Method, Predictor, SolverSettings};
use crate::error::{invalid, Result};
use crate::svm::sign_label;

/// Binary model for classes `positive < negative`, trained on `indices`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairModel {
    pub positive: i64,
    pub negative: i64,
    /// Dataset indices of the pair's training points.
    pub indices: Vec<usize>,
    pub predictor: Predictor,
    pub info: FitInfo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OvoModel {
    pub method: Method,
    pub c: f64,
    /// Sorted class ids.
    pub classes: Vec<i64>,
    /// Dataset indices the model was trained on.
    pub train: Vec<usize>,
    /// Pairs in lexicographic order of `(positive, negative)`.
    pub pairs: Vec<PairModel>,
}

/// Trains one model per class pair on the points of `train` carrying either
/// label; the lower class id maps to +1.
pub fn ovo_fit(ds: &Dataset, train: &[usize], method: Method, c: f64, settings: &SolverSettings) -> Result<OvoModel> {
    let labels = ds.labels_at(train);
    let classes = distinct(&labels);
    if classes.len() < 2 {
        return invalid("one-vs-one needs at least two classes in the training set");
    }
    for &cl in &classes {
        let count = labels.iter().filter(|&&y| y == cl).count();
        if count < 2 {
            return invalid(format!("class {cl} has {count} training point(s); at least 2 are required"));
        }
    }
    let mut jobs = Vec::new();
    for (a, &pos) in classes.iter().enumerate() {
        for &neg in &classes[a + 1..] {
            jobs.push((pos, neg));
        }
    }
    let pairs = jobs
        .into_par_iter()
        .map(|(pos, neg)| {
            let indices: Vec<usize> = train
                .iter()
                .copied()
                .filter(|&i| ds.labels()[i] == pos || ds.labels()[i] == neg)
                .collect();
            let pm: Vec<i64> = indices.iter().map(|&i| if ds.labels()[i] == pos { 1 } else { -1 }).collect();
            let set = ds.relabeled_set(&indices, pm)?;
            let (predictor, info) = fit_binary(&set, method, c, settings)?;
            Ok(PairModel { positive: pos, negative: neg, indices, predictor, info })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OvoModel { method, c, classes, train: train.to_vec(), pairs })
}

/// Per-pair decision values on the points `targets`, in pair order.
pub fn ovo_decisions(model: &OvoModel, ds: &Dataset, targets: &[usize]) -> Result<Vec<Vec<f64>>> {
    model
        .pairs
        .par_iter()
        .map(|p| p.predictor.decision_values(&ds.cross(&p.indices, targets)?))
        .collect()
}

/// Majority vote over pairs. Equal vote counts are resolved by the larger
/// sum of decision values in the class's favour, then by the lower class id.
pub fn ovo_vote(classes: &[i64], pairs: &[(i64, i64)], decisions: &[Vec<f64>]) -> Vec<i64> {
    let t = decisions.first().map_or(0, Vec::len);
    let index = |c: i64| classes.binary_search(&c).expect("pair class is listed");
    (0..t)
        .map(|j| {
            let mut votes = vec![0usize; classes.len()];
            let mut margin = vec![0.0; classes.len()];
            for (&(pos, neg), f) in pairs.iter().zip(decisions) {
                let (p, n) = (index(pos), index(neg));
                if sign_label(f[j]) > 0 {
                    votes[p] += 1;
                } else {
                    votes[n] += 1;
                }
                margin[p] += f[j];
                margin[n] -= f[j];
            }
            let mut best = 0;
            for c in 1..classes.len() {
                if votes[c] > votes[best] || (votes[c] == votes[best] && margin[c] > margin[best]) {
                    best = c;
                }
            }
            classes[best]
        })
        .collect()
}

pub fn ovo_predict(model: &OvoModel, ds: &Dataset, targets: &[usize]) -> Result<Vec<i64>> {
    let decisions = ovo_decisions(model, ds, targets)?;
    let pairs: Vec<(i64, i64)> = model.pairs.iter().map(|p| (p.positive, p.negative)).collect();
    if pairs.is_empty() {
        return invalid("model has no pairs");
    }
    Ok(ovo_vote(&model.classes, &pairs, &decisions))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unanimous_vote_wins() {
        let pairs = [(0, 1), (0, 2), (1, 2)];
        let f = vec![vec![1.0], vec![2.0], vec![-0.5]];
        assert_eq!(ovo_vote(&[0, 1, 2], &pairs, &f), vec![0]);
    }

    #[test]
    fn cycle_is_broken_by_summed_decisions() {
        // 0 beats 1, 1 beats 2, 2 beats 0: one vote each
        let pairs = [(0, 1), (0, 2), (1, 2)];
        // margins: class 0 = 0.2 - 0.1 = 0.1, class 1 = -0.2 + 0.9 = 0.7, class 2 = 0.1 - 0.9 = -0.8
        let f = vec![vec![0.2], vec![-0.1], vec![0.9]];
        assert_eq!(ovo_vote(&[0, 1, 2], &pairs, &f), vec![1]);
        // exact tie everywhere: lowest id
        let f = vec![vec![0.5], vec![-0.5], vec![0.5]];
        assert_eq!(ovo_vote(&[0, 1, 2], &pairs, &f), vec![0]);
    }

    #[test]
    fn two_classes_follow_the_sign() {
        let f = vec![vec![0.3, -0.2, 0.0]];
        assert_eq!(ovo_vote(&[4, 9], &[(4, 9)], &f), vec![4, 9, 4]);
    }
}
