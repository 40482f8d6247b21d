//! Cross-validated hyperparameter search for the one-vs-all machines.

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2};

use crate::data::stratified_folds;
use crate::error::{Error, Result};
use crate::svm::kernel::rbf_gram;
use crate::svm::multiclass::MulticlassSvm;
use crate::svm::smo::{smo_train_cached, SvmHyperparams, MAX_PAIR_UPDATES};
use crate::svm::KernelCache;

/// Default soft-margin grid.
pub const DEFAULT_C_GRID: [f64; 4] = [0.1, 1.0, 10.0, 100.0];
/// Default kernel-width multipliers, applied to `1 / dim`. Widest gamma
/// last: cleanly separable data ties every grid point at full accuracy,
/// and under the earliest-point tie-break the search must then prefer
/// the sharpest kernel — score decay away from the support vectors is
/// what gives the combiner a reject region worth the name.
pub const DEFAULT_GAMMA_SCALE_GRID: [f64; 3] = [10.0, 1.0, 0.1];

/// Cartesian `C` x `gamma` grid in C-major order; `gamma = scale / dim`.
pub fn default_grid(dim: usize) -> Vec<SvmHyperparams> {
    build_grid(&DEFAULT_C_GRID, &DEFAULT_GAMMA_SCALE_GRID, dim)
}

/// Grid from explicit `C` values and `gamma = scale / dim` multipliers,
/// in C-major order with the scales in the order given (ties in accuracy
/// resolve to the earliest point).
pub fn build_grid(c_grid: &[f64], gamma_scales: &[f64], dim: usize) -> Vec<SvmHyperparams> {
    let mut grid = Vec::with_capacity(c_grid.len() * gamma_scales.len());
    for &c in c_grid {
        for &s in gamma_scales {
            grid.push(SvmHyperparams { c, gamma: s / dim.max(1) as f64 });
        }
    }
    grid
}

/// Result of a grid search: chosen point plus the evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchOutcome {
    pub best: SvmHyperparams,
    /// The evaluated grid, in evaluation order.
    pub grid: Vec<SvmHyperparams>,
    /// Mean cross-validated accuracy per grid point; `-inf` marks points
    /// whose solver failed to converge on some fold.
    pub mean_accuracy: Vec<f64>,
}

/// Picks the grid point with the best mean `folds`-fold stratified
/// cross-validated accuracy of the full one-vs-all classifier. Ties
/// resolve to the earliest grid point; fold assignment is seeded and the
/// whole search is deterministic. Non-converging points score `-inf` and
/// only fail the search when every point fails.
pub fn grid_search_cv(
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    num_classes: usize,
    grid: &[SvmHyperparams],
    folds: usize,
    tol: f64,
    seed: u64,
) -> Result<GridSearchOutcome> {
    if grid.is_empty() {
        return Err(Error::InvalidParam {
            name: "grid",
            detail: "empty hyperparameter grid".into(),
        });
    }
    if x.nrows() != labels.len() {
        return Err(Error::Data(format!(
            "{} rows but {} labels",
            x.nrows(),
            labels.len()
        )));
    }
    let fold_of = stratified_folds(labels, folds, seed)?;

    // Precompute per-fold training indices and, per gamma, the Gram over
    // those rows, shared across all C values at that width.
    let fold_train: Vec<Vec<usize>> = (0..folds)
        .map(|f| (0..labels.len()).filter(|&i| fold_of[i] != f).collect())
        .collect();
    let fold_eval: Vec<Vec<usize>> = (0..folds)
        .map(|f| (0..labels.len()).filter(|&i| fold_of[i] == f).collect())
        .collect();

    let mut mean_accuracy = Vec::with_capacity(grid.len());
    let mut grams: HashMap<(usize, u64), Arc<Array2<f64>>> = HashMap::new();
    for hp in grid {
        hp.validate()?;
        let mut total_correct = 0usize;
        let mut failed = false;
        for f in 0..folds {
            let train_idx = &fold_train[f];
            let tr_x = select_rows(&x, train_idx);
            let tr_labels: Vec<usize> = train_idx.iter().map(|&i| labels[i]).collect();
            let gram = grams
                .entry((f, hp.gamma.to_bits()))
                .or_insert_with(|| Arc::new(rbf_gram(&tr_x.view(), hp.gamma)))
                .clone();

            let machines: Result<Vec<_>> = (0..num_classes)
                .map(|k| {
                    let y: Vec<i8> = tr_labels
                        .iter()
                        .map(|&l| if l == k + 1 { 1 } else { -1 })
                        .collect();
                    let mut cache = KernelCache::from_gram(gram.clone());
                    smo_train_cached(tr_x.view(), &y, hp, tol, &mut cache, MAX_PAIR_UPDATES)
                })
                .collect();
            let machines = match machines {
                Ok(m) => m,
                Err(Error::Convergence { .. }) => {
                    failed = true;
                    break;
                }
                Err(e) => return Err(e),
            };
            let svm = MulticlassSvm::from_machines(machines, x.ncols())?;
            let ev_x = select_rows(&x, &fold_eval[f]);
            let scores = svm.decision_matrix(ev_x.view())?;
            for (r, &i) in fold_eval[f].iter().enumerate() {
                let row = scores.row(r);
                let mut best = 0;
                for (k, &s) in row.iter().enumerate() {
                    if s > row[best] {
                        best = k;
                    }
                }
                if best + 1 == labels[i] {
                    total_correct += 1;
                }
            }
        }
        mean_accuracy.push(if failed {
            f64::NEG_INFINITY
        } else {
            total_correct as f64 / labels.len() as f64
        });
    }

    let mut best = 0;
    for (i, &acc) in mean_accuracy.iter().enumerate() {
        if acc > mean_accuracy[best] {
            best = i;
        }
    }
    if mean_accuracy[best] == f64::NEG_INFINITY {
        return Err(Error::Convergence {
            stage: "grid-search",
            iterations: MAX_PAIR_UPDATES,
            residual: f64::INFINITY,
            tolerance: tol,
        });
    }
    Ok(GridSearchOutcome {
        best: grid[best],
        grid: grid.to_vec(),
        mean_accuracy,
    })
}

fn select_rows(x: &ArrayView2<'_, f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((idx.len(), x.ncols()));
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).assign(&x.row(i));
    }
    out
}
