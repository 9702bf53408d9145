//! Long-tailed datasets: count profiles, seeded Gaussian synthesis, and
//! head/medium/tail grouping.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::math::{l2_norm, Matrix};

/// Test samples per class produced by [`synthesize`].
pub const DEFAULT_TEST_PER_CLASS: usize = 100;

const MEANS_STREAM: u64 = 0;
const TRAIN_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;

/// Exponentially decaying class-count profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LongTailProfile {
    pub num_classes: usize,
    pub max_count: usize,
    /// Ratio of the largest to the smallest class count.
    pub imbalance_factor: f64,
}

impl LongTailProfile {
    pub fn new(num_classes: usize, max_count: usize, imbalance_factor: f64) -> Result<Self> {
        let p = Self { num_classes, max_count, imbalance_factor };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {}", self.num_classes)));
        }
        if !(self.imbalance_factor >= 1.0) || !self.imbalance_factor.is_finite() {
            return Err(Error::Config(format!(
                "imbalance factor must be a finite value >= 1, got {}",
                self.imbalance_factor
            )));
        }
        let min = libm::round(self.max_count as f64 / self.imbalance_factor);
        if min < 1.0 {
            return Err(Error::Config(format!(
                "smallest class rounds to zero samples (max_count {}, imbalance factor {})",
                self.max_count, self.imbalance_factor
            )));
        }
        Ok(())
    }
}

/// `counts[k] = round(n_max * IF^(-k / (K - 1)))`.
pub fn longtail_counts(profile: &LongTailProfile) -> Result<Vec<usize>> {
    profile.validate()?;
    let last = (profile.num_classes - 1) as f64;
    Ok((0..profile.num_classes)
        .map(|k| {
            let decay = libm::pow(profile.imbalance_factor, -(k as f64) / last);
            libm::round(profile.max_count as f64 * decay) as usize
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Train,
    Test,
}

/// Feature matrix with integer labels and per-class counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<usize>,
    class_counts: Vec<usize>,
    role: Role,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, num_classes: usize, role: Role) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::dim(features.rows(), labels.len()));
        }
        if !features.is_finite() {
            return Err(Error::Domain("non-finite feature value".into()));
        }
        let mut class_counts = vec![0usize; num_classes];
        for (i, &y) in labels.iter().enumerate() {
            if y >= num_classes {
                return Err(Error::Domain(format!("sample {i} has label {y}, expected < {num_classes}")));
            }
            class_counts[y] += 1;
        }
        Ok(Self { features, labels, class_counts, role })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_counts.len()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn sample(&self, i: usize) -> (&[f64], usize) {
        (self.features.row(i), self.labels[i])
    }

    /// Per-class mean feature (K x d). Fails if any class is empty.
    pub fn class_means(&self) -> Result<Matrix> {
        if let Some(c) = self.class_counts.iter().position(|&n| n == 0) {
            return Err(Error::Degenerate(format!("class {c} has no samples")));
        }
        Ok(self.class_means_or_nan())
    }

    /// Per-class mean feature with NaN rows for empty classes.
    pub fn class_means_or_nan(&self) -> Matrix {
        let k = self.num_classes();
        let mut means = Matrix::zeros(k, self.dim());
        for (x, &y) in self.features.iter_rows().zip(&self.labels) {
            for (m, v) in means.row_mut(y).iter_mut().zip(x) {
                *m += v;
            }
        }
        for (c, &n) in self.class_counts.iter().enumerate() {
            for m in means.row_mut(c) {
                *m = if n == 0 { f64::NAN } else { *m / n as f64 };
            }
        }
        means
    }
}

/// Seeded Gaussian mixture with a long-tailed train split and a balanced
/// test split.
///
/// Class means are standard-normal draws projected onto the sphere of radius
/// `separation`; samples add unit-variance isotropic noise. Means, train
/// noise and test noise each use their own ChaCha stream.
pub fn synthesize(
    profile: &LongTailProfile,
    dim: usize,
    separation: f64,
    test_per_class: usize,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if dim < 2 {
        return Err(Error::Config(format!("feature dimension must be >= 2, got {dim}")));
    }
    if !(separation > 0.0) || !separation.is_finite() {
        return Err(Error::Config(format!("separation must be positive, got {separation}")));
    }
    if test_per_class == 0 {
        return Err(Error::Config("test set needs at least one sample per class".into()));
    }
    let counts = longtail_counts(profile)?;
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Config(format!("class {k} rounds to zero samples")));
    }

    let k = profile.num_classes;
    let mut rng = stream(seed, MEANS_STREAM);
    let mut means = Matrix::zeros(k, dim);
    for c in 0..k {
        let row = means.row_mut(c);
        loop {
            for v in row.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            let n = l2_norm(row);
            if n > 1e-12 {
                for v in row.iter_mut() {
                    *v *= separation / n;
                }
                break;
            }
        }
    }

    let train = draw(&means, &counts, Role::Train, &mut stream(seed, TRAIN_STREAM))?;
    let test_counts = vec![test_per_class; k];
    let test = draw(&means, &test_counts, Role::Test, &mut stream(seed, TEST_STREAM))?;
    Ok((train, test))
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn draw(means: &Matrix, counts: &[usize], role: Role, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    let dim = means.cols();
    let n: usize = counts.iter().sum();
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for (c, &count) in counts.iter().enumerate() {
        let mu = means.row(c);
        for _ in 0..count {
            features.extend(mu.iter().map(|m| {
                let z: f64 = StandardNormal.sample(rng);
                m + z
            }));
            labels.push(c);
        }
    }
    Dataset::new(Matrix::from_vec(n, dim, features)?, labels, counts.len(), role)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Group {
    Head,
    Medium,
    Tail,
}

impl Group {
    pub fn as_str(&self) -> &'static str {
        match self {
            Group::Head => "head",
            Group::Medium => "medium",
            Group::Tail => "tail",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupAssignment(pub Vec<Group>);

impl GroupAssignment {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, class: usize) -> Group {
        self.0[class]
    }

    pub fn classes(&self, group: Group) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(move |(_, g)| **g == group).map(|(c, _)| c)
    }
}

/// `count > head_threshold` is head, `count < tail_threshold` is tail,
/// everything else is medium.
pub fn assign_groups(class_counts: &[usize], head_threshold: usize, tail_threshold: usize) -> Result<GroupAssignment> {
    if head_threshold <= tail_threshold {
        return Err(Error::Config(format!(
            "head threshold ({head_threshold}) must exceed tail threshold ({tail_threshold})"
        )));
    }
    Ok(GroupAssignment(
        class_counts
            .iter()
            .map(|&n| {
                if n > head_threshold {
                    Group::Head
                } else if n < tail_threshold {
                    Group::Tail
                } else {
                    Group::Medium
                }
            })
            .collect(),
    ))
}
