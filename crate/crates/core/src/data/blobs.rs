//! Three-class 2-D Gaussian blobs for visualisation and fast tests.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::Dataset;
use crate::error::Result;

/// Blob centres before rescaling; spaced so classes overlap slightly.
const CENTERS: [[f64; 2]; 3] = [[0.0, 0.0], [2.2, 0.3], [1.0, 2.0]];
const SIGMA: f64 = 0.45;

/// Draws `n_per_class` points around each of three Gaussian centres and
/// min-max rescales both coordinates into `[0, 1]`. Deterministic in
/// `seed`; an RBF SVM separates the classes well but not perfectly.
pub fn make_toy_blobs(n_per_class: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, SIGMA).expect("constant sigma is valid");
    let n = 3 * n_per_class;
    let mut raw = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for (class, center) in CENTERS.iter().enumerate() {
        for _ in 0..n_per_class {
            raw.push(center[0] + noise.sample(&mut rng));
            raw.push(center[1] + noise.sample(&mut rng));
            labels.push(class + 1);
        }
    }

    for dim in 0..2 {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..n {
            lo = lo.min(raw[2 * i + dim]);
            hi = hi.max(raw[2 * i + dim]);
        }
        let span = hi - lo;
        for i in 0..n {
            raw[2 * i + dim] = (raw[2 * i + dim] - lo) / span;
        }
    }

    let features = Array2::from_shape_vec((n, 2), raw).expect("length is 2n by construction");
    Dataset::new(features, labels, 3, vec![2])
}
