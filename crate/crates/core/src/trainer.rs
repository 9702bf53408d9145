//! Mini-batch SGD with momentum and a cosine learning-rate schedule.
//!
//! GALA margins for epoch `e` come from the accumulators as they stood at the
//! end of epoch `e - 1` and stay frozen for the whole epoch. The first epoch
//! floors the empty accumulators at 1, so its margins vanish and it follows
//! the cross-entropy trajectory exactly. Later epochs floor at
//! `eps_floor`. The floor applies to the margin snapshot only; the live
//! accumulators keep their exact sums.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses::{evaluate_sample, LossKind};
use crate::math::{cosine_similarity, Matrix, Vector};
use crate::model::{ClassifierParams, DEFAULT_INIT_SCALE};
use crate::stats::GradAccumulators;

pub const SHUFFLE_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub momentum: f64,
    pub seed: u64,
    pub eps_floor: f64,
    pub use_bias: bool,
    /// Re-balance temperature, consumed at evaluation time.
    pub tau: f64,
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Gala,
            epochs: 100,
            batch_size: 64,
            base_lr: 0.1,
            momentum: 0.9,
            seed: 0,
            eps_floor: 1e-8,
            use_bias: false,
            tau: 1.0,
            init_scale: DEFAULT_INIT_SCALE,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::Config(msg));
        if self.epochs < 1 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size < 1 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.base_lr > 0.0) || !self.base_lr.is_finite() {
            return bad(format!("base_lr must be positive, got {}", self.base_lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.eps_floor > 0.0) || !self.eps_floor.is_finite() {
            return bad(format!("eps_floor must be positive, got {}", self.eps_floor));
        }
        if !(self.tau >= 0.0) || !self.tau.is_finite() {
            return bad(format!("tau must be >= 0, got {}", self.tau));
        }
        if !(self.init_scale > 0.0) || !self.init_scale.is_finite() {
            return bad(format!("init_scale must be positive, got {}", self.init_scale));
        }
        Ok(())
    }
}

/// `base_lr * (1 + cos(pi * epoch / total)) / 2`.
pub fn cosine_lr(epoch: usize, total_epochs: usize, base_lr: f64) -> f64 {
    base_lr * 0.5 * (1.0 + libm::cos(PI * epoch as f64 / total_epochs as f64))
}

/// Momentum buffers, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Velocity {
    pub weights: Matrix,
    pub biases: Vector,
}

impl Velocity {
    pub fn zeros_like(params: &ClassifierParams) -> Self {
        Self {
            weights: Matrix::zeros(params.num_classes(), params.dim()),
            biases: alloc::vec![0.0; params.num_classes()],
        }
    }
}

/// `v <- momentum * v + g; w <- w - lr * v`. Biases move only when enabled.
pub fn sgd_step(
    params: &mut ClassifierParams,
    weight_grad: &Matrix,
    bias_grad: &[f64],
    velocity: &mut Velocity,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    let shape = (params.num_classes(), params.dim());
    if (weight_grad.rows(), weight_grad.cols()) != shape {
        return Err(Error::dim(shape.0 * shape.1, weight_grad.rows() * weight_grad.cols()));
    }
    if bias_grad.len() != shape.0 {
        return Err(Error::dim(shape.0, bias_grad.len()));
    }
    let w = params.weights.as_mut_slice().iter_mut();
    let v = velocity.weights.as_mut_slice().iter_mut();
    for ((w, v), g) in w.zip(v).zip(weight_grad.as_slice()) {
        *v = momentum * *v + g;
        *w -= lr * *v;
    }
    if params.use_bias {
        for ((b, v), g) in params.biases.iter_mut().zip(&mut velocity.biases).zip(bias_grad) {
            *v = momentum * *v + g;
            *b -= lr * *v;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
    /// Accumulators at the end of the epoch.
    pub accumulators: GradAccumulators,
    /// Cosine similarity between each class weight and its class-mean train
    /// feature; NaN where undefined (empty class or zero weight).
    pub similarity: Vector,
    pub weight_norms: Vector,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub params: ClassifierParams,
    pub accumulators: GradAccumulators,
    pub history: TrainHistory,
}

pub fn train(config: &TrainConfig, data: &Dataset) -> Result<TrainOutput> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let k = data.num_classes();
    let d = data.dim();
    let means = data.class_means_or_nan();

    let mut params = ClassifierParams::init(k, d, config.init_scale, config.use_bias, config.seed)?;
    let mut velocity = Velocity::zeros_like(&params);
    let mut acc = GradAccumulators::new(k);
    let mut history = TrainHistory::default();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..data.len()).collect();

    let mut weight_grad = Matrix::zeros(k, d);
    let mut bias_grad = alloc::vec![0.0; k];

    for epoch in 0..config.epochs {
        let lr = cosine_lr(epoch, config.epochs, config.base_lr);
        let margins = acc.floored(if epoch == 0 { 1.0 } else { config.eps_floor });
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            weight_grad.as_mut_slice().fill(0.0);
            bias_grad.fill(0.0);
            let mut batch_loss = 0.0;
            for &i in batch {
                let (x, y) = data.sample(i);
                let z = params.logits(x)?;
                if z.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Diverged { epoch: epoch + 1, batch: batch_idx, loss: f64::NAN });
                }
                let s = evaluate_sample(config.loss, &z, y, &margins.theta, &margins.phi)?;
                if !s.loss.is_finite() {
                    return Err(Error::Diverged { epoch: epoch + 1, batch: batch_idx, loss: s.loss });
                }
                batch_loss += s.loss;
                for (j, &g) in s.grad.iter().enumerate() {
                    for (dst, xi) in weight_grad.row_mut(j).iter_mut().zip(x) {
                        *dst += g * xi;
                    }
                    bias_grad[j] += g;
                }
                acc.accumulate(&s.probs, y)?;
            }
            let scale = 1.0 / batch.len() as f64;
            weight_grad.as_mut_slice().iter_mut().for_each(|g| *g *= scale);
            bias_grad.iter_mut().for_each(|g| *g *= scale);
            sgd_step(&mut params, &weight_grad, &bias_grad, &mut velocity, lr, config.momentum)?;
            if !params.is_finite() {
                return Err(Error::Diverged { epoch: epoch + 1, batch: batch_idx, loss: f64::NAN });
            }
            epoch_loss += batch_loss;
        }

        history.records.push(EpochRecord {
            epoch: epoch + 1,
            lr,
            mean_loss: epoch_loss / data.len() as f64,
            accumulators: acc.clone(),
            similarity: weight_feature_similarity(&params, &means),
            weight_norms: params.weight_norms(),
        });
    }

    Ok(TrainOutput { params, accumulators: acc, history })
}

fn weight_feature_similarity(params: &ClassifierParams, means: &Matrix) -> Vector {
    params
        .weights
        .iter_rows()
        .zip(means.iter_rows())
        .map(|(w, m)| if m.iter().any(|v| v.is_nan()) { f64::NAN } else { cosine_similarity(w, m).unwrap_or(f64::NAN) })
        .collect()
}
