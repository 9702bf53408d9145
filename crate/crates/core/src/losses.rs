//! Cross-entropy and GALA losses with analytic gradients.
//!
//! GALA adjusts every non-target logit of a class-`k` sample by
//! `+ ln theta_j - ln phi_k`, where `theta_j` is the positive gradient
//! accumulated by class weight `j` and `phi_k` the negative gradient produced
//! so far by samples of class `k`. The adjustment terms are constants within
//! a step: no gradient flows into them.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{log_sum_exp, softmax, Matrix, Vector};
use crate::model::ClassifierParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    CrossEntropy,
    Gala,
}

impl LossKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LossKind::CrossEntropy => "cross_entropy",
            LossKind::Gala => "gala",
        }
    }
}

/// `z_j + ln theta_j - ln phi_k` for `j != k`, `z_k` unchanged.
pub fn gala_adjust(logits: &[f64], true_class: usize, theta: &[f64], phi: &[f64]) -> Result<Vector> {
    let k = logits.len();
    check_class(true_class, k)?;
    if theta.len() != k {
        return Err(Error::dim(k, theta.len()));
    }
    if phi.len() != k {
        return Err(Error::dim(k, phi.len()));
    }
    let phi_k = phi[true_class];
    if !(phi_k > 0.0) || !phi_k.is_finite() {
        return Err(Error::Domain(format!("phi[{true_class}] = {phi_k} must be positive")));
    }
    let log_phi = libm::log(phi_k);
    logits
        .iter()
        .zip(theta)
        .enumerate()
        .map(|(j, (&z, &t))| {
            if j == true_class {
                return Ok(z);
            }
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::Domain(format!("theta[{j}] = {t} must be positive")));
            }
            // the margin is formed first so equal theta and phi cancel exactly
            Ok(z + (libm::log(t) - log_phi))
        })
        .collect()
}

fn check_class(true_class: usize, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Empty("logits"));
    }
    if true_class >= k {
        return Err(Error::Domain(format!("class {true_class} out of range for {k} logits")));
    }
    Ok(())
}

/// Logits the loss actually sees: raw for cross-entropy, adjusted for GALA.
pub fn effective_logits(
    kind: LossKind,
    logits: &[f64],
    true_class: usize,
    theta: &[f64],
    phi: &[f64],
) -> Result<Vector> {
    match kind {
        LossKind::CrossEntropy => {
            check_class(true_class, logits.len())?;
            Ok(logits.to_vec())
        }
        LossKind::Gala => gala_adjust(logits, true_class, theta, phi),
    }
}

/// Loss value, softmax of the effective logits, and the logit gradient for
/// one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleEval {
    pub loss: f64,
    pub probs: Vector,
    pub grad: Vector,
}

pub fn evaluate_sample(
    kind: LossKind,
    logits: &[f64],
    true_class: usize,
    theta: &[f64],
    phi: &[f64],
) -> Result<SampleEval> {
    let z = effective_logits(kind, logits, true_class, theta, phi)?;
    let loss = (log_sum_exp(&z)? - z[true_class]).max(0.0);
    let probs = softmax(&z)?;
    let mut grad = probs.clone();
    grad[true_class] -= 1.0;
    Ok(SampleEval { loss, probs, grad })
}

/// `logsumexp(z') - z'_k` over the effective logits `z'`.
///
/// `theta` and `phi` are ignored for cross-entropy.
pub fn loss(kind: LossKind, logits: &[f64], true_class: usize, theta: &[f64], phi: &[f64]) -> Result<f64> {
    let z = effective_logits(kind, logits, true_class, theta, phi)?;
    Ok((log_sum_exp(&z)? - z[true_class]).max(0.0))
}

/// `g_j = q_j - [j == k]`, `q` the softmax of the effective logits.
pub fn grad_logits(kind: LossKind, logits: &[f64], true_class: usize, theta: &[f64], phi: &[f64]) -> Result<Vector> {
    Ok(evaluate_sample(kind, logits, true_class, theta, phi)?.grad)
}

/// Per-sample gradient with respect to the class weights (`g_j x`) and the
/// biases (`g_j`, zero when the bias is disabled).
pub fn grad_params(
    kind: LossKind,
    params: &ClassifierParams,
    x: &[f64],
    true_class: usize,
    theta: &[f64],
    phi: &[f64],
) -> Result<(Matrix, Vector)> {
    let z = params.logits(x)?;
    let g = grad_logits(kind, &z, true_class, theta, phi)?;
    Ok(outer_grads(params, &g, x))
}

pub(crate) fn outer_grads(params: &ClassifierParams, g: &[f64], x: &[f64]) -> (Matrix, Vector) {
    let mut w = Matrix::zeros(params.num_classes(), params.dim());
    for (j, &gj) in g.iter().enumerate() {
        for (dst, xi) in w.row_mut(j).iter_mut().zip(x) {
            *dst = gj * xi;
        }
    }
    let b: Vec<f64> = if params.use_bias { g.to_vec() } else { alloc::vec![0.0; g.len()] };
    (w, b)
}
