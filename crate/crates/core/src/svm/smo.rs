//! Two-variable SMO solver for the C-SVC dual with an RBF kernel.
//!
//! Solves `min 0.5 a'Qa - e'a` over `0 <= a_i <= C`, `y'a = 0`, with
//! `Q_ij = y_i y_j K_ij`, by repeatedly updating the maximal violating
//! pair (first-order working-set selection). Iterates in strict index
//! order everywhere, so runs are bit-reproducible.

use std::sync::Arc;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::svm::kernel::{rbf_kernel, KernelCache, DEFAULT_CACHE_BUDGET};

/// Hard cap on pair updates before the solver reports non-convergence.
pub const MAX_PAIR_UPDATES: usize = 1_000_000;

/// Guard for vanishing curvature along a working pair.
const TAU: f64 = 1e-12;

/// Soft-margin and kernel-width parameters of one RBF SVM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmHyperparams {
    pub c: f64,
    pub gamma: f64,
}

impl SvmHyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidParam {
                name: "C",
                detail: format!("{} must be positive and finite", self.c),
            });
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParam {
                name: "gamma",
                detail: format!("{} must be positive and finite", self.gamma),
            });
        }
        Ok(())
    }
}

/// Solver-quality facts recorded with every trained machine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoDiagnostics {
    /// Final maximal KKT violation `m(a) - M(a)`.
    pub kkt_residual: f64,
    /// Pair updates performed.
    pub pair_updates: usize,
    /// Dual objective at the solution.
    pub objective: f64,
}

/// A trained binary RBF SVM: support vectors with dual coefficients
/// `y_i * alpha_i`, a bias, and the kernel width.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryRbfSvm {
    pub support_vectors: Array2<f64>,
    pub coefs: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub diagnostics: SmoDiagnostics,
}

impl BinaryRbfSvm {
    /// Decision value `sum_i coef_i k(sv_i, x) + bias`.
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        let mut acc = self.bias;
        for (sv, coef) in self.support_vectors.rows().into_iter().zip(&self.coefs) {
            acc += coef * rbf_kernel(sv.as_slice().expect("standard layout"), x, self.gamma)?;
        }
        Ok(acc)
    }

    /// `sum_i |coef_i|`; with the kernel's far-field decay this bounds
    /// `|decision - bias|` by `coef_abs_sum * exp(-gamma * D^2)` for any
    /// point at distance at least `D` from every support vector.
    pub fn coef_abs_sum(&self) -> f64 {
        self.coefs.iter().map(|c| c.abs()).sum()
    }
}

/// Access to kernel rows `i` and `j` of one iteration.
trait RowPair {
    fn rows(&mut self, i: usize, j: usize) -> (&[f64], &[f64]);
}

struct DenseRows(Arc<Array2<f64>>);

impl RowPair for DenseRows {
    fn rows(&mut self, i: usize, j: usize) -> (&[f64], &[f64]) {
        let n = self.0.ncols();
        let flat = self.0.as_slice().expect("gram is standard layout");
        (&flat[i * n..(i + 1) * n], &flat[j * n..(j + 1) * n])
    }
}

struct LazyRows<'a> {
    cache: &'a mut KernelCache,
    buf_i: Vec<f64>,
    buf_j: Vec<f64>,
}

impl RowPair for LazyRows<'_> {
    fn rows(&mut self, i: usize, j: usize) -> (&[f64], &[f64]) {
        self.buf_i.clear();
        self.buf_i.extend_from_slice(self.cache.row(i));
        self.buf_j.clear();
        self.buf_j.extend_from_slice(self.cache.row(j));
        (&self.buf_i, &self.buf_j)
    }
}

/// Raw SMO solution on the dual variables, before support extraction.
#[derive(Debug)]
pub(crate) struct SmoSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub diagnostics: SmoDiagnostics,
}

/// Runs SMO on a labelled problem, pulling kernel rows from `cache`.
/// `y` holds `+1` / `-1`. Errors if a class is missing or the update cap
/// is reached before the violation drops to `tol`.
pub(crate) fn smo_solve(
    y: &[i8],
    hp: &SvmHyperparams,
    tol: f64,
    cache: &mut KernelCache,
    max_updates: usize,
) -> Result<SmoSolution> {
    hp.validate()?;
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::InvalidParam {
            name: "tolerance",
            detail: format!("{tol} must be positive and finite"),
        });
    }
    let n = y.len();
    if cache.n() != n {
        return Err(Error::Data(format!(
            "{n} labels for a {}-point kernel",
            cache.n()
        )));
    }
    if !y.iter().any(|&v| v > 0) || !y.iter().any(|&v| v < 0) {
        return Err(Error::Data("binary problem needs both classes".into()));
    }
    match cache {
        KernelCache::Dense { gram, .. } => {
            let mut rows = DenseRows(gram.clone());
            smo_loop(y, hp, tol, &mut rows, max_updates)
        }
        lazy => {
            let mut rows = LazyRows {
                cache: lazy,
                buf_i: Vec::new(),
                buf_j: Vec::new(),
            };
            smo_loop(y, hp, tol, &mut rows, max_updates)
        }
    }
}

fn smo_loop(
    y: &[i8],
    hp: &SvmHyperparams,
    tol: f64,
    rows: &mut impl RowPair,
    max_updates: usize,
) -> Result<SmoSolution> {
    let n = y.len();
    let c = hp.c;
    let mut alpha = vec![0.0f64; n];
    // Gradient of the dual objective; at alpha = 0 it is -e.
    let mut grad = vec![-1.0f64; n];
    let mut updates = 0usize;
    let mut residual;

    loop {
        // Maximal violating pair: i maximises -y_t g_t over I_up,
        // j minimises it over I_low; first index wins ties.
        let mut i = usize::MAX;
        let mut m_up = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut m_low = f64::INFINITY;
        for t in 0..n {
            let v = -f64::from(y[t]) * grad[t];
            if ((y[t] > 0 && alpha[t] < c) || (y[t] < 0 && alpha[t] > 0.0)) && v > m_up {
                m_up = v;
                i = t;
            }
            if ((y[t] > 0 && alpha[t] > 0.0) || (y[t] < 0 && alpha[t] < c)) && v < m_low {
                m_low = v;
                j = t;
            }
        }
        residual = m_up - m_low;
        if residual <= tol {
            break;
        }
        if updates >= max_updates {
            return Err(Error::Convergence {
                stage: "smo",
                iterations: updates,
                residual,
                tolerance: tol,
            });
        }

        let (ki, kj) = rows.rows(i, j);
        // Curvature along the pair direction; identical for equal and
        // opposite labels once Q_ij = y_i y_j K_ij is expanded.
        let quad = (ki[i] + kj[j] - 2.0 * ki[j]).max(TAU);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else {
                if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = -diff;
                }
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = c + diff;
                }
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
        }

        // Incremental gradient update from the two changed variables.
        let ci = f64::from(y[i]) * (alpha[i] - old_i);
        let cj = f64::from(y[j]) * (alpha[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += f64::from(y[t]) * (ci * ki[t] + cj * kj[t]);
        }
        updates += 1;
    }

    // Bias from free support vectors, or the midpoint of the KKT bounds
    // when none are free.
    let mut sum_free = 0.0;
    let mut n_free = 0usize;
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    for t in 0..n {
        let yg = f64::from(y[t]) * grad[t];
        if alpha[t] >= c {
            if y[t] < 0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    };

    let objective = 0.5
        * alpha
            .iter()
            .zip(&grad)
            .map(|(a, g)| a * (g - 1.0))
            .sum::<f64>();
    Ok(SmoSolution {
        alpha,
        bias: -rho,
        diagnostics: SmoDiagnostics {
            kkt_residual: residual,
            pair_updates: updates,
            objective,
        },
    })
}

/// Trains a binary RBF SVM. `y` holds `+1` / `-1` labels; rows of `x`
/// are the samples.
pub fn smo_train(
    x: ArrayView2<'_, f64>,
    y: &[i8],
    hp: &SvmHyperparams,
    tol: f64,
) -> Result<BinaryRbfSvm> {
    hp.validate()?;
    let mut cache = KernelCache::build(x, hp.gamma, DEFAULT_CACHE_BUDGET);
    smo_train_cached(x, y, hp, tol, &mut cache, MAX_PAIR_UPDATES)
}

/// As [`smo_train`] but reusing a prebuilt kernel cache over `x`.
pub(crate) fn smo_train_cached(
    x: ArrayView2<'_, f64>,
    y: &[i8],
    hp: &SvmHyperparams,
    tol: f64,
    cache: &mut KernelCache,
    max_updates: usize,
) -> Result<BinaryRbfSvm> {
    if x.nrows() != y.len() {
        return Err(Error::Data(format!(
            "{} rows but {} labels",
            x.nrows(),
            y.len()
        )));
    }
    let sol = smo_solve(y, hp, tol, cache, max_updates)?;
    let sv_idx: Vec<usize> = (0..y.len()).filter(|&i| sol.alpha[i] > 0.0).collect();
    let mut support_vectors = Array2::zeros((sv_idx.len(), x.ncols()));
    let mut coefs = Vec::with_capacity(sv_idx.len());
    for (r, &i) in sv_idx.iter().enumerate() {
        support_vectors.row_mut(r).assign(&x.row(i));
        coefs.push(f64::from(y[i]) * sol.alpha[i]);
    }
    Ok(BinaryRbfSvm {
        support_vectors,
        coefs,
        bias: sol.bias,
        gamma: hp.gamma,
        diagnostics: sol.diagnostics,
    })
}
