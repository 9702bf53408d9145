//! Accuracy metrics and weight/feature similarity diagnostics.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{Dataset, Group, GroupAssignment};
use crate::error::{Error, Result};
use crate::math::{cosine_similarity, mean, Vector};
use crate::model::ClassifierParams;

/// Unweighted mean of per-class accuracies in each group; `None` when the
/// group has no class with test samples.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GroupAccuracy {
    pub head: Option<f64>,
    pub medium: Option<f64>,
    pub tail: Option<f64>,
}

impl GroupAccuracy {
    pub fn get(&self, group: Group) -> Option<f64> {
        match group {
            Group::Head => self.head,
            Group::Medium => self.medium,
            Group::Tail => self.tail,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub top1: f64,
    pub correct: usize,
    pub total: usize,
    /// NaN for classes absent from the evaluated set.
    pub per_class_accuracy: Vector,
    pub group_accuracy: GroupAccuracy,
    /// Number of samples predicted as each class.
    pub positive_prediction_counts: Vec<usize>,
    /// `confusion[truth][pred]`.
    pub confusion: Vec<Vec<usize>>,
}

pub fn evaluate(pred: &[usize], truth: &[usize], groups: &GroupAssignment) -> Result<EvalReport> {
    if pred.len() != truth.len() {
        return Err(Error::dim(truth.len(), pred.len()));
    }
    if truth.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let k = groups.len();
    let mut confusion = vec![vec![0usize; k]; k];
    for (b, (&p, &t)) in pred.iter().zip(truth).enumerate() {
        if p >= k || t >= k {
            return Err(Error::Domain(format!(
                "sample {b}: label out of range (truth {t}, predicted {p}, {k} classes)"
            )));
        }
        confusion[t][p] += 1;
    }

    let correct = (0..k).map(|c| confusion[c][c]).sum();
    let per_class_accuracy: Vector = confusion
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let n: usize = row.iter().sum();
            if n == 0 {
                f64::NAN
            } else {
                row[c] as f64 / n as f64
            }
        })
        .collect();
    let group_mean = |g: Group| {
        let accs: Vec<f64> = groups.classes(g).map(|c| per_class_accuracy[c]).filter(|a| !a.is_nan()).collect();
        mean(&accs)
    };
    let group_accuracy = GroupAccuracy {
        head: group_mean(Group::Head),
        medium: group_mean(Group::Medium),
        tail: group_mean(Group::Tail),
    };
    let mut positive_prediction_counts = vec![0usize; k];
    for &p in pred {
        positive_prediction_counts[p] += 1;
    }

    Ok(EvalReport {
        top1: correct as f64 / truth.len() as f64,
        correct,
        total: truth.len(),
        per_class_accuracy,
        group_accuracy,
        positive_prediction_counts,
        confusion,
    })
}

/// Cosine similarity between each class weight and the mean feature of
/// that class in `data`.
pub fn similarity_report(params: &ClassifierParams, data: &Dataset) -> Result<Vector> {
    check_shapes(params, data)?;
    let means = data.class_means()?;
    params.weights.iter_rows().zip(means.iter_rows()).map(|(w, m)| cosine_similarity(w, m)).collect()
}

/// Mean cosine similarity of one class weight to individual sample features
/// of head-group and tail-group classes, its own class excluded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossSimilarity {
    /// `None` when no head sample of another class exists.
    pub to_head: Option<f64>,
    pub to_tail: Option<f64>,
}

pub fn cross_similarity_report(
    params: &ClassifierParams,
    data: &Dataset,
    groups: &GroupAssignment,
) -> Result<Vec<CrossSimilarity>> {
    check_shapes(params, data)?;
    if groups.len() != data.num_classes() {
        return Err(Error::dim(data.num_classes(), groups.len()));
    }
    if groups.classes(Group::Head).next().is_none() || groups.classes(Group::Tail).next().is_none() {
        return Err(Error::Degenerate("cross similarity needs both head and tail classes".into()));
    }
    if let Some(c) = data.class_counts().iter().position(|&n| n == 0) {
        return Err(Error::Degenerate(format!("class {c} has no samples")));
    }

    params
        .weights
        .iter_rows()
        .enumerate()
        .map(|(j, w)| {
            let mut head = (0.0, 0usize);
            let mut tail = (0.0, 0usize);
            for (x, &y) in data.features().iter_rows().zip(data.labels()) {
                if y == j {
                    continue;
                }
                let slot = match groups.get(y) {
                    Group::Head => &mut head,
                    Group::Tail => &mut tail,
                    Group::Medium => continue,
                };
                slot.0 += cosine_similarity(w, x)?;
                slot.1 += 1;
            }
            let avg = |(s, n): (f64, usize)| (n > 0).then(|| s / n as f64);
            Ok(CrossSimilarity { to_head: avg(head), to_tail: avg(tail) })
        })
        .collect()
}

fn check_shapes(params: &ClassifierParams, data: &Dataset) -> Result<()> {
    if params.num_classes() != data.num_classes() {
        return Err(Error::dim(data.num_classes(), params.num_classes()));
    }
    if params.dim() != data.dim() {
        return Err(Error::dim(data.dim(), params.dim()));
    }
    Ok(())
}
