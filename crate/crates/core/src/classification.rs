//! k-nearest-neighbour classification and the train/test repetition split.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng;
use crate::tfa::MovementLabel;

#[derive(Debug, Clone, PartialEq)]
pub struct LabelledPoint {
    pub features: Vec<f64>,
    pub label: MovementLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    points: Vec<LabelledPoint>,
    k: usize,
    dim: usize,
}

impl KnnModel {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn points(&self) -> &[LabelledPoint] {
        &self.points
    }

    pub fn predict(&self, query: &[f64]) -> Result<MovementLabel> {
        knn_predict(self, query)
    }
}

pub fn knn_fit(points: Vec<LabelledPoint>, k: usize) -> Result<KnnModel> {
    if points.is_empty() {
        return Err(Error::arg("k-NN needs at least one training point"));
    }
    if k == 0 || k > points.len() {
        return Err(Error::arg(format!(
            "k = {k} outside 1..={} training points",
            points.len()
        )));
    }
    let dim = points[0].features.len();
    for (i, p) in points.iter().enumerate() {
        if p.features.len() != dim {
            return Err(Error::arg(format!(
                "training point {i} has {} features, expected {dim}",
                p.features.len()
            )));
        }
        if p.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::input(format!(
                "training point {i} has a non-finite feature"
            )));
        }
    }
    Ok(KnnModel { points, k, dim })
}

/// Majority vote among the `k` nearest training points by Euclidean
/// distance. Equal distances are ordered by training index. A tied vote goes
/// to the tied label whose nearest member ranks first.
pub fn knn_predict(model: &KnnModel, query: &[f64]) -> Result<MovementLabel> {
    if query.len() != model.dim {
        return Err(Error::arg(format!(
            "query has {} features, model expects {}",
            query.len(),
            model.dim
        )));
    }
    if query.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("query has a non-finite feature"));
    }
    let mut ranked: Vec<(f64, usize)> = model
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let d2: f64 = p
                .features
                .iter()
                .zip(query)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (d2, i)
        })
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    ranked.truncate(model.k);

    // label -> (votes, rank of first appearance)
    let mut votes: BTreeMap<MovementLabel, (usize, usize)> = BTreeMap::new();
    for (rank, &(_, i)) in ranked.iter().enumerate() {
        votes.entry(model.points[i].label).or_insert((0, rank)).0 += 1;
    }
    let (label, _) = votes
        .into_iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
        .expect("k >= 1");
    Ok(label)
}

pub fn error_rate(predicted: &[MovementLabel], truth: &[MovementLabel]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::arg(format!(
            "{} predictions for {} true labels",
            predicted.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::arg("error rate of an empty test set"));
    }
    let wrong = predicted.iter().zip(truth).filter(|(p, t)| p != t).count();
    Ok(wrong as f64 / truth.len() as f64)
}

/// Confusion counts keyed by (true, predicted).
pub fn confusion(
    predicted: &[MovementLabel],
    truth: &[MovementLabel],
) -> Result<BTreeMap<(MovementLabel, MovementLabel), usize>> {
    error_rate(predicted, truth)?;
    let mut out = BTreeMap::new();
    for (&p, &t) in predicted.iter().zip(truth) {
        *out.entry((t, p)).or_insert(0) += 1;
    }
    Ok(out)
}

/// `truth,predicted,count` rows for every observed pair.
pub fn confusion_csv(counts: &BTreeMap<(MovementLabel, MovementLabel), usize>) -> String {
    let mut s = String::from("truth,predicted,count\n");
    for ((t, p), n) in counts {
        s.push_str(&format!("{t},{p},{n}\n"));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitPlan {
    pub train_fraction: f64,
}

impl Default for SplitPlan {
    fn default() -> Self {
        SplitPlan {
            train_fraction: 0.6,
        }
    }
}

impl SplitPlan {
    /// Training repetitions out of `n`, rounded to nearest.
    pub fn train_count(&self, n: usize) -> usize {
        (self.train_fraction * n as f64).round() as usize
    }
}

/// Repetition positions (0-based, ascending) per movement, indexed by
/// direction: `[positive, negative]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    pub train: [Vec<usize>; 2],
    pub test: [Vec<usize>; 2],
}

/// Stratified random split of the repetitions of both movements of one DoF.
/// Each movement gets the same number of training repetitions, drawn
/// independently.
pub fn split(reps_per_movement: usize, plan: &SplitPlan, seed: u64) -> Result<SplitAssignment> {
    let f = plan.train_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::arg(format!(
            "train fraction must lie in (0, 1), got {f}"
        )));
    }
    let n_train = plan.train_count(reps_per_movement);
    if n_train == 0 || n_train >= reps_per_movement {
        return Err(Error::arg(format!(
            "train fraction {f} of {reps_per_movement} repetitions leaves an empty {} set",
            if n_train == 0 { "training" } else { "test" }
        )));
    }
    let mut r = rng(seed);
    let mut draw = || {
        let mut idx: Vec<usize> = (0..reps_per_movement).collect();
        idx.shuffle(&mut r);
        let mut train = idx[..n_train].to_vec();
        let mut test = idx[n_train..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        (train, test)
    };
    let (tp, sp) = draw();
    let (tn, sn) = draw();
    Ok(SplitAssignment {
        train: [tp, tn],
        test: [sp, sn],
    })
}
