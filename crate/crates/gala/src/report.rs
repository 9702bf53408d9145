//! JSON documents: checkpoints, accumulator dumps, history lines and
//! evaluation reports. NaN values serialize as `null`.

use std::path::Path;

use gala_core::{ClassifierParams, EpochRecord, EvalReport, GradAccumulators, Matrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    #[serde(rename = "K")]
    pub num_classes: usize,
    pub d: usize,
    pub use_bias: bool,
    /// Row-major K x d.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl From<&ClassifierParams> for Checkpoint {
    fn from(p: &ClassifierParams) -> Self {
        Self {
            num_classes: p.num_classes(),
            d: p.dim(),
            use_bias: p.use_bias,
            weights: p.weights.as_slice().to_vec(),
            biases: p.biases.clone(),
        }
    }
}

impl Checkpoint {
    pub fn into_params(self) -> Result<ClassifierParams> {
        if self.biases.len() != self.num_classes {
            return Err(Error::Config(format!(
                "checkpoint has {} biases for {} classes",
                self.biases.len(),
                self.num_classes
            )));
        }
        Ok(ClassifierParams {
            weights: Matrix::from_vec(self.num_classes, self.d, self.weights)?,
            biases: self.biases,
            use_bias: self.use_bias,
        })
    }

    pub fn load(path: &Path) -> Result<ClassifierParams> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str::<Checkpoint>(&text)?.into_params()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccumulatorDump {
    pub epoch: usize,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    pub nu: Vec<f64>,
    pub cross: Vec<Vec<f64>>,
}

impl AccumulatorDump {
    pub fn new(epoch: usize, acc: &GradAccumulators) -> Self {
        Self {
            epoch,
            theta: acc.theta.clone(),
            phi: acc.phi.clone(),
            nu: acc.nu.clone(),
            cross: acc.cross.iter_rows().map(<[f64]>::to_vec).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryLine {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
    pub weight_norms: Vec<f64>,
    pub similarity: Vec<f64>,
}

impl From<&EpochRecord> for HistoryLine {
    fn from(r: &EpochRecord) -> Self {
        Self {
            epoch: r.epoch,
            lr: r.lr,
            mean_loss: r.mean_loss,
            weight_norms: r.weight_norms.clone(),
            similarity: r.similarity.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupAccuracyJson {
    pub head: Option<f64>,
    pub medium: Option<f64>,
    pub tail: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReportJson {
    pub top1: f64,
    pub correct: usize,
    pub total: usize,
    pub per_class_accuracy: Vec<f64>,
    pub group_accuracy: GroupAccuracyJson,
    pub positive_prediction_counts: Vec<usize>,
    pub confusion: Vec<Vec<usize>>,
}

impl From<&EvalReport> for EvalReportJson {
    fn from(r: &EvalReport) -> Self {
        Self {
            top1: r.top1,
            correct: r.correct,
            total: r.total,
            per_class_accuracy: r.per_class_accuracy.clone(),
            group_accuracy: GroupAccuracyJson {
                head: r.group_accuracy.head,
                medium: r.group_accuracy.medium,
                tail: r.group_accuracy.tail,
            },
            positive_prediction_counts: r.positive_prediction_counts.clone(),
            confusion: r.confusion.clone(),
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let mut s = String::new();
    for item in items {
        s.push_str(&serde_json::to_string(&item)?);
        s.push('\n');
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}
