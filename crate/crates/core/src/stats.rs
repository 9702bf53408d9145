//! Per-class gradient accumulators.
//!
//! For a class-`k` sample whose effective logits give probabilities `p`, the
//! logit gradient is `p_k - 1` at the target and `p_j` elsewhere. Their
//! magnitudes are accumulated as:
//!
//! * `theta[k] += 1 - p_k`: positive gradient received by class weight `k`
//! * `cross[k][j] += p_j`: negative gradient sent from class `k` onto weight `j`
//! * `phi[k] += p_j`: negative gradient produced by class-`k` samples
//! * `nu[j] += p_j`: negative gradient received by class weight `j`

use alloc::format;
use alloc::vec;

use crate::error::{Error, Result};
use crate::math::{Matrix, Vector};

/// Tolerance on `sum(p) == 1` accepted by [`GradAccumulators::accumulate`].
pub const PROB_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradAccumulators {
    pub theta: Vector,
    pub phi: Vector,
    pub nu: Vector,
    /// `cross[k][j]`, source class `k`, receiving class weight `j`. Zero diagonal.
    pub cross: Matrix,
}

impl GradAccumulators {
    pub fn new(num_classes: usize) -> Self {
        Self {
            theta: vec![0.0; num_classes],
            phi: vec![0.0; num_classes],
            nu: vec![0.0; num_classes],
            cross: Matrix::zeros(num_classes, num_classes),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.theta.len()
    }

    pub fn accumulate(&mut self, probs: &[f64], true_class: usize) -> Result<()> {
        let k = self.num_classes();
        if probs.len() != k {
            return Err(Error::dim(k, probs.len()));
        }
        if true_class >= k {
            return Err(Error::Domain(format!("class {true_class} out of range for {k} classes")));
        }
        let total: f64 = probs.iter().sum();
        if !((total - 1.0).abs() <= PROB_SUM_TOL) || probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::Domain(format!("not a probability vector (sum = {total})")));
        }
        self.theta[true_class] += 1.0 - probs[true_class];
        for (j, &p) in probs.iter().enumerate() {
            if j != true_class {
                self.cross.add_at(true_class, j, p);
                self.nu[j] += p;
                self.phi[true_class] += p;
            }
        }
        Ok(())
    }

    /// Raises `theta` and `phi` to at least `eps` so their logarithms exist.
    pub fn floor_epsilon(&mut self, eps: f64) {
        for t in &mut self.theta {
            *t = t.max(eps);
        }
        for p in &mut self.phi {
            *p = p.max(eps);
        }
    }

    /// Copy with [`floor_epsilon`](Self::floor_epsilon) applied.
    pub fn floored(&self, eps: f64) -> Self {
        let mut out = self.clone();
        out.floor_epsilon(eps);
        out
    }

    /// `theta_j / nu_j`.
    pub fn gradient_ratio(&self) -> Result<Vector> {
        self.theta
            .iter()
            .zip(&self.nu)
            .enumerate()
            .map(|(j, (&t, &n))| {
                if n > 0.0 {
                    Ok(t / n)
                } else {
                    Err(Error::Degenerate(format!("class {j} has received no negative gradient")))
                }
            })
            .collect()
    }

    /// `phi`, optionally normalized to sum to one.
    pub fn produced_negative_distribution(&self, normalize: bool) -> Vector {
        let total: f64 = self.phi.iter().sum();
        if normalize && total > 0.0 {
            self.phi.iter().map(|p| p / total).collect()
        } else {
            self.phi.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn one_hot_is_a_no_op() {
        let mut acc = GradAccumulators::new(3);
        acc.accumulate(&[0.0, 1.0, 0.0], 1).unwrap();
        assert_eq!(acc, GradAccumulators::new(3));
    }

    #[test]
    fn uniform_increment() {
        let mut acc = GradAccumulators::new(4);
        acc.accumulate(&[0.25; 4], 0).unwrap();
        assert_eq!(acc.theta, vec![0.75, 0.0, 0.0, 0.0]);
        assert_eq!(acc.phi, vec![0.75, 0.0, 0.0, 0.0]);
        assert_eq!(acc.nu, vec![0.0, 0.25, 0.25, 0.25]);
        assert_eq!(acc.cross.row(0), &[0.0, 0.25, 0.25, 0.25]);
        for k in 1..4 {
            assert!(acc.cross.row(k).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn theta_and_phi_increments_match() {
        let mut acc = GradAccumulators::new(3);
        acc.accumulate(&[0.2, 0.5, 0.3], 2).unwrap();
        assert_abs_diff_eq!(acc.theta[2], acc.phi[2], epsilon = 1e-15);
    }

    #[test]
    fn rejects_non_probabilities() {
        let mut acc = GradAccumulators::new(2);
        assert!(matches!(acc.accumulate(&[0.5, 0.6], 0), Err(Error::Domain(_))));
        assert!(matches!(acc.accumulate(&[1.5, -0.5], 0), Err(Error::Domain(_))));
        assert!(matches!(acc.accumulate(&[0.5, 0.5], 2), Err(Error::Domain(_))));
        assert!(matches!(acc.accumulate(&[1.0], 0), Err(Error::Dimension { .. })));
        assert_eq!(acc, GradAccumulators::new(2));
    }

    #[test]
    fn floor_examples() {
        let mut acc = GradAccumulators::new(3);
        acc.floor_epsilon(1.0);
        assert_eq!(acc.theta, vec![1.0; 3]);
        assert_eq!(acc.phi, vec![1.0; 3]);

        let mut acc = GradAccumulators::new(2);
        acc.theta = vec![5.0, 0.0];
        acc.floor_epsilon(1e-8);
        assert_eq!(acc.theta, vec![5.0, 1e-8]);
        assert_eq!(acc.phi, vec![1e-8, 1e-8]);
        assert_eq!(acc.nu, vec![0.0, 0.0]);
    }

    #[test]
    fn ratio_examples() {
        let mut acc = GradAccumulators::new(2);
        acc.theta = vec![2.0, 1.0];
        acc.nu = vec![1.0, 4.0];
        assert_eq!(acc.gradient_ratio().unwrap(), vec![2.0, 0.25]);
        acc.nu = acc.theta.clone();
        assert_eq!(acc.gradient_ratio().unwrap(), vec![1.0, 1.0]);
        acc.nu[1] = 0.0;
        assert!(matches!(acc.gradient_ratio(), Err(Error::Degenerate(_))));
    }

    #[test]
    fn distribution_examples() {
        let mut acc = GradAccumulators::new(3);
        for k in 0..3 {
            for j in 0..3 {
                if j != k {
                    acc.cross.set(k, j, 0.5);
                }
            }
        }
        acc.phi = acc.cross.row_sums();
        assert_eq!(acc.produced_negative_distribution(false), vec![1.0; 3]);
        let n = acc.produced_negative_distribution(true);
        assert_abs_diff_eq!(n.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
    }
}
