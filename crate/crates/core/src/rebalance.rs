//! Post-hoc prediction re-balancing.
//!
//! Each class column of the test-set probability matrix is divided by its L1
//! norm raised to a temperature `tau`. `tau = 0` leaves the matrix untouched
//! and `tau = 1` is plain column L1 normalization. Predictions are the
//! row-wise argmax of the result.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{argmax, softmax, Matrix};
use crate::model::ClassifierParams;

/// Row tolerance on `sum(p_b) == 1` for [`PredictionMatrix::new`].
pub const ROW_SUM_TOL: f64 = 1e-9;

/// B x K matrix whose rows are probability vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix(Matrix);

impl PredictionMatrix {
    pub fn new(probs: Matrix) -> Result<Self> {
        Self::with_tolerance(probs, ROW_SUM_TOL)
    }

    /// Accepts rows summing to one within `tol`, for probabilities that went
    /// through a lossy text format.
    pub fn with_tolerance(probs: Matrix, tol: f64) -> Result<Self> {
        if probs.cols() == 0 {
            return Err(Error::Empty("prediction matrix has no classes"));
        }
        for (b, row) in probs.iter_rows().enumerate() {
            if let Some(j) = row.iter().position(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Domain(format!("row {b}, class {j}: {} is not a probability", row[j])));
            }
            let s: f64 = row.iter().sum();
            if !((s - 1.0).abs() <= tol) {
                return Err(Error::Domain(format!("row {b} sums to {s}, expected 1")));
            }
        }
        Ok(Self(probs))
    }

    /// Softmax of the raw (unadjusted) logits of every row of `features`.
    pub fn from_model(params: &ClassifierParams, features: &Matrix) -> Result<Self> {
        let mut probs = Matrix::zeros(features.rows(), params.num_classes());
        for (b, x) in features.iter_rows().enumerate() {
            let p = softmax(&params.logits(x)?)?;
            probs.row_mut(b).copy_from_slice(&p);
        }
        Self::new(probs)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }

    pub fn num_classes(&self) -> usize {
        self.0.cols()
    }
}

/// `p~[b][k] = p[b][k] / (sum_b p[b][k])^tau`.
///
/// A zero column is an error for `tau > 0`; at `tau = 0` the input comes back
/// unchanged.
pub fn rebalance(probs: &PredictionMatrix, tau: f64) -> Result<Matrix> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::Domain(format!("tau must be >= 0, got {tau}")));
    }
    let p = probs.matrix();
    if tau == 0.0 {
        return Ok(p.clone());
    }
    let norms = p.col_sums();
    if let Some(k) = norms.iter().position(|&n| !(n > 0.0)) {
        return Err(Error::Degenerate(format!("class {k} has zero total probability")));
    }
    let divisors: Vec<f64> = norms.iter().map(|&n| libm::pow(n, tau)).collect();
    let mut out = p.clone();
    for b in 0..out.rows() {
        for (v, d) in out.row_mut(b).iter_mut().zip(&divisors) {
            *v /= d;
        }
    }
    Ok(out)
}

/// Row-wise argmax, ties toward the lowest class index.
pub fn predict(m: &Matrix) -> Vec<usize> {
    m.iter_rows().map(|r| argmax(r).unwrap_or(0)).collect()
}
