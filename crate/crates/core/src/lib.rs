//! Gradient-aware logit adjustment (GALA) for long-tailed classification.
//!
//! The crate is `no_std` with `alloc`. It covers the pure algorithmic side:
//! dense arithmetic, synthetic long-tailed data, the linear classifier,
//! cross-entropy and GALA losses with analytic gradients, the per-class
//! gradient accumulators that drive the GALA margins, an SGD trainer with
//! momentum and a cosine schedule, post-hoc prediction re-balancing, and
//! evaluation metrics. File formats and the command line live in the `gala`
//! companion crate.

#![no_std]
// `!(x > 0.0)` deliberately rejects NaN too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod data;
pub mod error;
pub mod eval;
pub mod losses;
pub mod math;
pub mod model;
pub mod rebalance;
pub mod stats;
pub mod trainer;

pub use data::{assign_groups, longtail_counts, synthesize, Dataset, Group, GroupAssignment, LongTailProfile, Role};
pub use error::{Error, Result};
pub use eval::{cross_similarity_report, evaluate, similarity_report, CrossSimilarity, EvalReport, GroupAccuracy};
pub use losses::{gala_adjust, grad_logits, grad_params, loss, LossKind};
pub use math::{Matrix, Vector};
pub use model::ClassifierParams;
pub use rebalance::{predict, rebalance, PredictionMatrix};
pub use stats::GradAccumulators;
pub use trainer::{cosine_lr, sgd_step, train, EpochRecord, TrainConfig, TrainHistory, TrainOutput};
