//! Dataset container, deterministic splits, and loaders.
//!
//! A [`Dataset`] owns flattened feature rows in `[0, 1]` plus labels in
//! `1..=num_classes`; label `0` never appears in data because it is the
//! reject decision. Loaders for the IDX image format and the CIFAR-10
//! binary format live in [`idx`] and [`cifar`]; [`blobs`] draws the 2-D
//! Gaussian toy problem used for visualisation and fast tests.

mod blobs;
mod cifar;
mod idx;
mod synth;

pub use blobs::make_toy_blobs;
pub use cifar::load_cifar10;
pub use idx::{load_mnist_idx, write_mnist_idx};
pub use synth::make_synthetic_digits;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Immutable labelled dataset with features normalised into `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    num_classes: usize,
    sample_shape: Vec<usize>,
}

impl Dataset {
    /// Builds a dataset after validating every stated invariant: feature
    /// values finite and inside `[0, 1]`, labels inside `1..=num_classes`,
    /// one label per row, and `sample_shape` consistent with the row width.
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        num_classes: usize,
        sample_shape: Vec<usize>,
    ) -> Result<Self> {
        if labels.len() != features.nrows() {
            return Err(Error::Data(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if num_classes < 1 {
            return Err(Error::InvalidParam {
                name: "num_classes",
                detail: "must be at least 1".into(),
            });
        }
        let dim: usize = sample_shape.iter().product();
        if sample_shape.is_empty() || dim != features.ncols() {
            return Err(Error::Shape {
                expected: vec![features.ncols()],
                actual: sample_shape.clone(),
            });
        }
        if let Some(v) = features.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::Data(format!(
                "feature value {v} outside [0, 1]"
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l < 1 || l > num_classes) {
            return Err(Error::Data(format!(
                "label {l} outside 1..={num_classes} (0 is reserved for reject)"
            )));
        }
        Ok(Dataset {
            features,
            labels,
            num_classes,
            sample_shape,
        })
    }

    /// Number of samples.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    /// True when the dataset holds no samples.
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Flattened feature dimensionality per sample.
    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Number of real classes; labels run `1..=num_classes`.
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Per-sample tensor shape (e.g. `[1, 28, 28]` for MNIST).
    pub fn sample_shape(&self) -> &[usize] {
        &self.sample_shape
    }

    /// All feature rows, one sample per row.
    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    /// All labels in sample order.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Feature row of sample `i`.
    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    /// Label of sample `i`.
    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Sample `i` as a tensor shaped like [`Self::sample_shape`].
    pub fn tensor(&self, i: usize) -> Tensor {
        Tensor::new(
            self.sample_shape.clone(),
            self.features.row(i).to_vec(),
        )
        .expect("sample shape validated at construction")
    }

    /// New dataset holding the listed samples, in the listed order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Array2::zeros((indices.len(), self.dim()));
        let mut labels = Vec::with_capacity(indices.len());
        for (r, &i) in indices.iter().enumerate() {
            if i >= self.len() {
                return Err(Error::Index {
                    what: "sample",
                    index: i,
                    len: self.len(),
                });
            }
            features.row_mut(r).assign(&self.features.row(i));
            labels.push(self.labels[i]);
        }
        Ok(Dataset {
            features,
            labels,
            num_classes: self.num_classes,
            sample_shape: self.sample_shape.clone(),
        })
    }

    /// Sample count per class, indexed by `label - 1`.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for &l in &self.labels {
            counts[l - 1] += 1;
        }
        counts
    }
}

/// Sizes and seed for one train/test draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    /// Samples in the training split.
    pub train: usize,
    /// Samples in the test split.
    pub test: usize,
    /// Base seed; combined with `run_index` so each run draws fresh splits.
    pub seed: u64,
}

/// Draws disjoint train/test splits for run `run_index`.
///
/// The permutation is seeded by `spec.seed` on stream `run_index`, so the
/// same `(seed, run_index)` pair always yields byte-identical splits while
/// different runs draw different ones.
pub fn split(data: &Dataset, spec: &SplitSpec, run_index: usize) -> Result<(Dataset, Dataset)> {
    if spec.train + spec.test > data.len() {
        return Err(Error::Data(format!(
            "split wants {} + {} samples but pool holds {}",
            spec.train,
            spec.test,
            data.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(run_index as u64);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let train = data.subset(&order[..spec.train])?;
    let test = data.subset(&order[spec.train..spec.train + spec.test])?;
    Ok((train, test))
}

/// Assigns each sample to one of `k` folds, stratified by label: within
/// every class the (seeded, shuffled) members are dealt round-robin, so
/// fold class proportions match the data as closely as integer counts
/// allow. Returns `fold[i] in 0..k` per sample.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidParam {
            name: "folds",
            detail: format!("need at least 2 folds, got {k}"),
        });
    }
    let mut by_class: Vec<Vec<usize>> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        if l == 0 {
            return Err(Error::Data("label 0 (reject) in training data".into()));
        }
        if l > by_class.len() {
            by_class.resize(l, Vec::new());
        }
        by_class[l - 1].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0usize; labels.len()];
    for members in by_class.iter_mut() {
        if !members.is_empty() && members.len() < k {
            return Err(Error::Data(format!(
                "a class has {} samples, fewer than {} folds",
                members.len(),
                k
            )));
        }
        members.shuffle(&mut rng);
        for (j, &i) in members.iter().enumerate() {
            fold[i] = j % k;
        }
    }
    Ok(fold)
}

/// Picks about `target` sample indices, stratified by label and seeded.
/// Returns all indices (in original order) when `target >= labels.len()`.
pub fn stratified_subsample(labels: &[usize], target: usize, seed: u64) -> Vec<usize> {
    if target >= labels.len() {
        return (0..labels.len()).collect();
    }
    let mut by_class: Vec<Vec<usize>> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        let slot = l.max(1) - 1;
        if slot >= by_class.len() {
            by_class.resize(slot + 1, Vec::new());
        }
        by_class[slot].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::with_capacity(target);
    for members in by_class.iter_mut() {
        let share = ((members.len() * target) as f64 / labels.len() as f64).round() as usize;
        let share = share.max(1).min(members.len());
        members.shuffle(&mut rng);
        picked.extend_from_slice(&members[..share]);
    }
    picked.sort_unstable();
    picked
}
