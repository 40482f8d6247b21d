//! Deterministic synthetic 28x28 "digit" images.
//!
//! Ten classes of smooth grayscale glyphs over a shared background, with
//! per-sample translation, amplitude, and pixel-noise jitter. The class
//! structure is strong enough for a small CNN to learn in a few epochs,
//! while inter-class distances sit in the low single digits of l2 norm,
//! so perturbation budgets in the same range as real 28x28 digit attacks
//! behave comparably. Useful wherever a digit-sized dataset is needed
//! without shipping one.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};

const SIDE: usize = 28;
const CLASSES: usize = 10;
const GRID: usize = 7;
/// Shared background weight vs class-pattern weight; their sum stays
/// below 1 so amplitude jitter plus noise cannot leave [0, 1].
const BASE_WEIGHT: f64 = 0.45;
const CLASS_WEIGHT: f64 = 0.40;
const MAX_SHIFT: i64 = 2;
const NOISE: f64 = 0.05;

/// Generates `n` samples (labels `1..=10`, round-robin, shape
/// `[1, 28, 28]`), fully determined by `seed`.
pub fn make_synthetic_digits(n: usize, seed: u64) -> Result<Dataset> {
    if n < CLASSES {
        return Err(Error::InvalidParam {
            name: "n",
            detail: format!("need at least {CLASSES} samples, one per class"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let base = smooth_field(&mut rng);
    let prototypes: Vec<Vec<f64>> = (0..CLASSES)
        .map(|_| {
            let field = smooth_field(&mut rng);
            base.iter()
                .zip(&field)
                .map(|(b, f)| BASE_WEIGHT * b + CLASS_WEIGHT * f)
                .collect()
        })
        .collect();

    let mut features = Array2::zeros((n, SIDE * SIDE));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % CLASSES;
        labels.push(class + 1);
        let dy = rng.random_range(-MAX_SHIFT..=MAX_SHIFT);
        let dx = rng.random_range(-MAX_SHIFT..=MAX_SHIFT);
        let amplitude = rng.random_range(0.8..=1.0);
        let proto = &prototypes[class];
        let mut row = features.row_mut(i);
        for y in 0..SIDE {
            for x in 0..SIDE {
                let sy = y as i64 - dy;
                let sx = x as i64 - dx;
                let value = if (0..SIDE as i64).contains(&sy) && (0..SIDE as i64).contains(&sx) {
                    proto[sy as usize * SIDE + sx as usize]
                } else {
                    0.0
                };
                let noise = rng.random_range(-NOISE..=NOISE);
                row[y * SIDE + x] = (amplitude * value + noise).clamp(0.0, 1.0);
            }
        }
    }
    Dataset::new(features, labels, CLASSES, vec![1, SIDE, SIDE])
}

/// A smooth random field: uniform values on a coarse grid, bilinearly
/// upsampled to the full resolution.
fn smooth_field(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut coarse = [0.0; GRID * GRID];
    for v in coarse.iter_mut() {
        *v = rng.random_range(0.0..1.0);
    }
    let scale = GRID as f64 / SIDE as f64;
    let mut out = vec![0.0; SIDE * SIDE];
    for y in 0..SIDE {
        for x in 0..SIDE {
            let fy = ((y as f64 + 0.5) * scale - 0.5).clamp(0.0, (GRID - 1) as f64);
            let fx = ((x as f64 + 0.5) * scale - 0.5).clamp(0.0, (GRID - 1) as f64);
            let y0 = fy.floor() as usize;
            let x0 = fx.floor() as usize;
            let y1 = (y0 + 1).min(GRID - 1);
            let x1 = (x0 + 1).min(GRID - 1);
            let ty = fy - y0 as f64;
            let tx = fx - x0 as f64;
            let top = coarse[y0 * GRID + x0] * (1.0 - tx) + coarse[y0 * GRID + x1] * tx;
            let bottom = coarse[y1 * GRID + x0] * (1.0 - tx) + coarse[y1 * GRID + x1] * tx;
            out[y * SIDE + x] = top * (1.0 - ty) + bottom * ty;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_well_formed() {
        let a = make_synthetic_digits(40, 7).unwrap();
        let b = make_synthetic_digits(40, 7).unwrap();
        assert_eq!(a.features(), b.features());
        assert_eq!(a.labels(), b.labels());
        assert_eq!(a.sample_shape(), &[1, 28, 28]);
        assert_eq!(a.num_classes(), 10);
        assert_eq!(a.class_counts(), vec![4; 10]);
        let c = make_synthetic_digits(40, 8).unwrap();
        assert_ne!(a.features(), c.features());
    }

    #[test]
    fn classes_are_separated_but_not_trivially_far() {
        let data = make_synthetic_digits(200, 3).unwrap();
        // Mean per-class images.
        let mut means = vec![vec![0.0; 784]; 10];
        let mut counts = [0usize; 10];
        for i in 0..data.len() {
            let k = data.label(i) - 1;
            counts[k] += 1;
            for (m, v) in means[k].iter_mut().zip(data.row(i)) {
                *m += v;
            }
        }
        for (m, &c) in means.iter_mut().zip(&counts) {
            for v in m.iter_mut() {
                *v /= c as f64;
            }
        }
        let mut min_dist = f64::INFINITY;
        let mut max_dist: f64 = 0.0;
        for a in 0..10 {
            for b in (a + 1)..10 {
                let d = means[a]
                    .iter()
                    .zip(&means[b])
                    .map(|(p, q)| (p - q) * (p - q))
                    .sum::<f64>()
                    .sqrt();
                min_dist = min_dist.min(d);
                max_dist = max_dist.max(d);
            }
        }
        // Close enough to attack within small l2 budgets, far enough to
        // classify cleanly.
        assert!(min_dist > 1.0, "classes collapsed: {min_dist}");
        assert!(max_dist < 8.0, "classes too far apart: {max_dist}");
    }

    #[test]
    fn rejects_fewer_samples_than_classes() {
        assert!(make_synthetic_digits(9, 1).is_err());
    }
}
