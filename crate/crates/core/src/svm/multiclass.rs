//! One-vs-all multiclass RBF SVM with a shared evaluation plan.
//!
//! The per-class machines usually share many support vectors (they train
//! on the same rows), so scoring first computes squared distances from
//! the query to the union of all distinct support vectors once, then
//! lets each machine gather its own kernel terms. Per-machine term order
//! is preserved, keeping scores identical to naive evaluation up to
//! floating-point associativity of the distance computation.

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::linalg::{general_mat_mul, general_mat_vec_mul};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::svm::kernel::{row_sq_norms, KernelCache};
use crate::svm::smo::{smo_train_cached, BinaryRbfSvm, SvmHyperparams, MAX_PAIR_UPDATES};

/// Shared support-vector geometry for fast multi-machine scoring.
#[derive(Debug, Clone, PartialEq)]
struct EvalPlan {
    /// Distinct support vectors across machines, first occurrence order.
    union: Array2<f64>,
    union_sq: Vec<f64>,
    /// Per machine: indices into `union`, aligned with its coefficients.
    sv_index: Vec<Vec<u32>>,
}

fn row_key(row: ArrayView1<'_, f64>) -> Vec<u64> {
    row.iter().map(|v| v.to_bits()).collect()
}

impl EvalPlan {
    fn build(machines: &[BinaryRbfSvm], dim: usize) -> EvalPlan {
        let mut seen: HashMap<Vec<u64>, u32> = HashMap::new();
        let mut rows: Vec<f64> = Vec::new();
        let mut sv_index = Vec::with_capacity(machines.len());
        for m in machines {
            let mut idx = Vec::with_capacity(m.coefs.len());
            for sv in m.support_vectors.rows() {
                let key = row_key(sv);
                let next = seen.len() as u32;
                let id = *seen.entry(key).or_insert(next);
                if id == next {
                    rows.extend(sv.iter());
                }
                idx.push(id);
            }
            sv_index.push(idx);
        }
        let union = Array2::from_shape_vec((seen.len(), dim), rows)
            .expect("rows pushed dim elements at a time");
        EvalPlan {
            union_sq: row_sq_norms(&union.view()),
            union,
            sv_index,
        }
    }

    /// Squared distances from `x` to every union support vector.
    fn sq_dists(&self, x: &[f64]) -> Vec<f64> {
        let xv = ArrayView1::from(x);
        let x_sq: f64 = x.iter().map(|v| v * v).sum();
        let mut dots = Array1::zeros(self.union.nrows());
        general_mat_vec_mul(1.0, &self.union, &xv, 0.0, &mut dots);
        self.union_sq
            .iter()
            .zip(dots.iter())
            .map(|(&s, &d)| (x_sq + s - 2.0 * d).max(0.0))
            .collect()
    }
}

/// One-vs-all multiclass SVM; machine `k` separates class `k + 1` from
/// the rest and its decision value is the class score.
#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassSvm {
    machines: Vec<BinaryRbfSvm>,
    dim: usize,
    plan: EvalPlan,
}

impl MulticlassSvm {
    /// Wraps per-class machines (index `k` scores class `k + 1`).
    pub fn from_machines(machines: Vec<BinaryRbfSvm>, dim: usize) -> Result<Self> {
        if machines.len() < 2 {
            return Err(Error::Data(format!(
                "one-vs-all needs at least 2 machines, got {}",
                machines.len()
            )));
        }
        if let Some(m) = machines.iter().find(|m| m.support_vectors.ncols() != dim) {
            return Err(Error::Shape {
                expected: vec![dim],
                actual: vec![m.support_vectors.ncols()],
            });
        }
        let plan = EvalPlan::build(&machines, dim);
        Ok(MulticlassSvm { machines, dim, plan })
    }

    pub fn num_classes(&self) -> usize {
        self.machines.len()
    }

    /// Input feature dimensionality.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn machines(&self) -> &[BinaryRbfSvm] {
        &self.machines
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Shape {
                expected: vec![self.dim],
                actual: vec![x.len()],
            });
        }
        Ok(())
    }

    /// Per-class decision values; index `k` scores class `k + 1`.
    pub fn decision_scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let d2 = self.plan.sq_dists(x);
        Ok(self
            .machines
            .iter()
            .zip(&self.plan.sv_index)
            .map(|(m, idx)| {
                let mut acc = m.bias;
                for (coef, &u) in m.coefs.iter().zip(idx) {
                    acc += coef * (-m.gamma * d2[u as usize]).exp();
                }
                acc
            })
            .collect())
    }

    /// Decision values for many rows at once (row `i` of the result
    /// scores `x.row(i)`); distances go through one GEMM per row block.
    pub fn decision_matrix(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim {
            return Err(Error::Shape {
                expected: vec![self.dim],
                actual: vec![x.ncols()],
            });
        }
        let n = x.nrows();
        let u = self.plan.union.nrows();
        let x_sq = row_sq_norms(&x);
        let mut out = Array2::zeros((n, self.machines.len()));
        let chunk = 512usize;
        let blocks: Vec<_> = out
            .axis_chunks_iter_mut(Axis(0), chunk)
            .into_iter()
            .zip(x.axis_chunks_iter(Axis(0), chunk))
            .enumerate()
            .collect();
        blocks.into_par_iter().for_each(|(b, (mut out_block, x_block))| {
            let rows = x_block.nrows();
            let mut dots = Array2::zeros((rows, u));
            general_mat_mul(1.0, &x_block, &self.plan.union.t(), 0.0, &mut dots);
            let mut d2 = vec![0.0; u];
            for r in 0..rows {
                let xs = x_sq[b * chunk + r];
                for (t, v) in d2.iter_mut().enumerate() {
                    *v = (xs + self.plan.union_sq[t] - 2.0 * dots[[r, t]]).max(0.0);
                }
                for (k, (m, idx)) in self.machines.iter().zip(&self.plan.sv_index).enumerate() {
                    let mut acc = m.bias;
                    for (coef, &ui) in m.coefs.iter().zip(idx) {
                        acc += coef * (-m.gamma * d2[ui as usize]).exp();
                    }
                    out_block[[r, k]] = acc;
                }
            }
        });
        Ok(out)
    }

    /// Predicted label in `1..=c`: argmax score, smallest class on ties.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let scores = self.decision_scores(x)?;
        let mut best = 0;
        for (k, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = k;
            }
        }
        Ok(best + 1)
    }

    /// Gradient of the class-`k` score at `x` (`k` in `1..=c`):
    /// `sum_i coef_i * (-2 gamma) * k(sv_i, x) * (x - sv_i)`.
    pub fn score_gradient(&self, x: &[f64], k: usize) -> Result<Vec<f64>> {
        if k < 1 || k > self.machines.len() {
            return Err(Error::Index {
                what: "class",
                index: k,
                len: self.machines.len(),
            });
        }
        let mut w = vec![0.0; self.machines.len()];
        w[k - 1] = 1.0;
        self.weighted_score_gradient(x, &w)
    }

    /// Gradient of `sum_k weights_k * score_k` at `x` in one pass: all
    /// machines' kernel weights accumulate on the shared union before a
    /// single matrix-vector product forms the support-vector moment.
    pub fn weighted_score_gradient(&self, x: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        if weights.len() != self.machines.len() {
            return Err(Error::Shape {
                expected: vec![self.machines.len()],
                actual: vec![weights.len()],
            });
        }
        let d2 = self.plan.sq_dists(x);
        let mut union_w = vec![0.0; self.plan.union.nrows()];
        for ((m, idx), &wk) in self.machines.iter().zip(&self.plan.sv_index).zip(weights) {
            if wk == 0.0 {
                continue;
            }
            for (coef, &u) in m.coefs.iter().zip(idx) {
                let u = u as usize;
                union_w[u] += wk * coef * (-2.0 * m.gamma) * (-m.gamma * d2[u]).exp();
            }
        }
        let wv = ArrayView1::from(&union_w);
        let total: f64 = union_w.iter().sum();
        let mut moment = Array1::zeros(self.dim);
        general_mat_vec_mul(1.0, &self.plan.union.t(), &wv, 0.0, &mut moment);
        Ok(x.iter()
            .zip(moment.iter())
            .map(|(&xi, &mi)| total * xi - mi)
            .collect())
    }
}

/// Trains one-vs-all machines for labels `1..=num_classes` over the rows
/// of `x`, sharing kernel caches between machines with equal `gamma`.
/// `hps[k]` configures the machine for class `k + 1`.
pub fn ova_train(
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    num_classes: usize,
    hps: &[SvmHyperparams],
    tol: f64,
    cache_budget: usize,
) -> Result<MulticlassSvm> {
    if labels.len() != x.nrows() {
        return Err(Error::Data(format!(
            "{} rows but {} labels",
            x.nrows(),
            labels.len()
        )));
    }
    if num_classes < 2 {
        return Err(Error::Data("need at least 2 classes".into()));
    }
    if hps.len() != num_classes {
        return Err(Error::Data(format!(
            "{} hyperparameter sets for {num_classes} classes",
            hps.len()
        )));
    }
    for hp in hps {
        hp.validate()?;
    }
    let mut present = vec![false; num_classes];
    for &l in labels {
        if l < 1 || l > num_classes {
            return Err(Error::Data(format!(
                "label {l} outside 1..={num_classes}"
            )));
        }
        present[l - 1] = true;
    }
    if let Some(k) = present.iter().position(|p| !p) {
        return Err(Error::Data(format!(
            "class {} absent from training labels",
            k + 1
        )));
    }

    let mut caches: HashMap<u64, Arc<std::sync::Mutex<KernelCache>>> = HashMap::new();
    for hp in hps {
        caches
            .entry(hp.gamma.to_bits())
            .or_insert_with(|| Arc::new(std::sync::Mutex::new(KernelCache::build(x, hp.gamma, cache_budget))));
    }

    let machines = (0..num_classes)
        .map(|k| {
            let y: Vec<i8> = labels
                .iter()
                .map(|&l| if l == k + 1 { 1 } else { -1 })
                .collect();
            let cache = caches
                .get(&hps[k].gamma.to_bits())
                .expect("cache built above");
            let mut cache = cache.lock().expect("no poisoned locks");
            smo_train_cached(x, &y, &hps[k], tol, &mut cache, MAX_PAIR_UPDATES)
        })
        .collect::<Result<Vec<_>>>()?;
    MulticlassSvm::from_machines(machines, x.ncols())
}
