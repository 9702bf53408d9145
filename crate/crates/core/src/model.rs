//! Linear per-class classifier, `z_j = w_j . x + b_j`.

use alloc::format;
use alloc::vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::{dot_unchecked, l2_norm, Matrix, Vector};

pub const INIT_STREAM: u64 = 0;
pub const DEFAULT_INIT_SCALE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    /// K x d, row j is the class weight of class j.
    pub weights: Matrix,
    pub biases: Vector,
    pub use_bias: bool,
}

impl ClassifierParams {
    /// Weights i.i.d. uniform in `[-scale, scale]`, biases zero.
    pub fn init(num_classes: usize, dim: usize, scale: f64, use_bias: bool, seed: u64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::Config(format!("init scale must be positive, got {scale}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(INIT_STREAM);
        let mut weights = Matrix::zeros(num_classes, dim);
        for w in weights.as_mut_slice() {
            *w = rng.random_range(-scale..=scale);
        }
        Ok(Self { weights, biases: vec![0.0; num_classes], use_bias })
    }

    pub fn zeros(num_classes: usize, dim: usize, use_bias: bool) -> Self {
        Self { weights: Matrix::zeros(num_classes, dim), biases: vec![0.0; num_classes], use_bias }
    }

    pub fn num_classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vector> {
        if x.len() != self.dim() {
            return Err(Error::dim(self.dim(), x.len()));
        }
        Ok(self
            .weights
            .iter_rows()
            .zip(&self.biases)
            .map(|(w, b)| {
                let z = dot_unchecked(w, x);
                if self.use_bias {
                    z + b
                } else {
                    z
                }
            })
            .collect())
    }

    /// Per-class L2 norm of the class weights.
    pub fn weight_norms(&self) -> Vector {
        self.weights.iter_rows().map(l2_norm).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.is_finite() && self.biases.iter().all(|b| b.is_finite())
    }
}
