//! RBF kernel, Gram construction, and the kernel row cache.

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Default memory budget for kernel caches: comfortably holds a full
/// 10,000-point Gram matrix (800 MB) on the target machine.
pub const DEFAULT_CACHE_BUDGET: usize = 1_600_000_000;

/// `exp(-gamma * ||a - b||^2)`; errors on dimension mismatch.
pub fn rbf_kernel(a: &[f64], b: &[f64], gamma: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            expected: vec![a.len()],
            actual: vec![b.len()],
        });
    }
    Ok((-gamma * squared_distance(a, b)).exp())
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

pub(crate) fn row_sq_norms(x: &ArrayView2<'_, f64>) -> Vec<f64> {
    x.rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v * v).sum())
        .collect()
}

/// Full RBF Gram matrix `K[i, j] = k(x_i, x_j)`, built blockwise from
/// `||x_i||^2 + ||x_j||^2 - 2 x_i . x_j` with one GEMM per row block.
pub fn rbf_gram(x: &ArrayView2<'_, f64>, gamma: f64) -> Array2<f64> {
    let n = x.nrows();
    let sq = row_sq_norms(x);
    let mut gram = Array2::zeros((n, n));
    general_mat_mul(-2.0, x, &x.t(), 0.0, &mut gram);
    let chunk = 256.max(1);
    let rows: Vec<_> = gram
        .axis_chunks_iter_mut(ndarray::Axis(0), chunk)
        .into_iter()
        .collect();
    rows.into_par_iter().enumerate().for_each(|(b, mut block)| {
        for (r, mut row) in block.rows_mut().into_iter().enumerate() {
            let i = b * chunk + r;
            let si = sq[i];
            for (j, v) in row.iter_mut().enumerate() {
                *v = (-gamma * (si + sq[j] + *v).max(0.0)).exp();
            }
        }
    });
    gram
}

/// Kernel rows for the SMO solver: a fully materialised Gram when it fits
/// the byte budget, otherwise rows computed on demand behind a bounded
/// cache.
pub enum KernelCache {
    Dense { n: usize, gram: Arc<Array2<f64>> },
    Lazy {
        x: Array2<f64>,
        gamma: f64,
        sq: Vec<f64>,
        rows: HashMap<usize, Vec<f64>>,
        order: Vec<usize>,
        capacity: usize,
    },
}

impl KernelCache {
    /// Chooses dense vs lazy from the byte budget (`n * n * 8` for dense).
    pub fn build(x: ArrayView2<'_, f64>, gamma: f64, budget_bytes: usize) -> KernelCache {
        let n = x.nrows();
        if n.saturating_mul(n).saturating_mul(8) <= budget_bytes {
            KernelCache::Dense {
                n,
                gram: Arc::new(rbf_gram(&x, gamma)),
            }
        } else {
            let row_bytes = (n * 8).max(1);
            KernelCache::Lazy {
                sq: row_sq_norms(&x),
                x: x.to_owned(),
                gamma,
                rows: HashMap::new(),
                order: Vec::new(),
                capacity: (budget_bytes / row_bytes).max(2),
            }
        }
    }

    /// Wraps an already-built Gram matrix.
    pub fn from_gram(gram: Arc<Array2<f64>>) -> KernelCache {
        KernelCache::Dense { n: gram.nrows(), gram }
    }

    pub fn n(&self) -> usize {
        match self {
            KernelCache::Dense { n, .. } => *n,
            KernelCache::Lazy { sq, .. } => sq.len(),
        }
    }

    /// Kernel row `i` (length `n`).
    pub fn row(&mut self, i: usize) -> &[f64] {
        match self {
            KernelCache::Dense { gram, .. } => gram
                .row(i)
                .to_slice()
                .expect("gram is standard layout"),
            KernelCache::Lazy { x, gamma, sq, rows, order, capacity } => {
                if !rows.contains_key(&i) {
                    if order.len() == *capacity {
                        let evict = order.remove(0);
                        rows.remove(&evict);
                    }
                    let xi = x.row(i);
                    let xi = xi.as_slice().expect("x is standard layout");
                    let si = sq[i];
                    let g = *gamma;
                    let row: Vec<f64> = x
                        .rows()
                        .into_iter()
                        .zip(sq.iter())
                        .map(|(xj, &sj)| {
                            let dot: f64 = xi
                                .iter()
                                .zip(xj.as_slice().expect("standard layout"))
                                .map(|(a, b)| a * b)
                                .sum();
                            (-g * (si + sj - 2.0 * dot).max(0.0)).exp()
                        })
                        .collect();
                    rows.insert(i, row);
                    order.push(i);
                }
                rows.get(&i).expect("just inserted")
            }
        }
    }
}
