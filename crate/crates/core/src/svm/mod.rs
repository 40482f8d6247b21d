//! RBF support vector machines: kernel, SMO solver, one-vs-all wrapper,
//! and cross-validated hyperparameter search.

mod grid;
mod kernel;
mod multiclass;
mod smo;

pub use grid::{
    build_grid, default_grid, grid_search_cv, GridSearchOutcome, DEFAULT_C_GRID,
    DEFAULT_GAMMA_SCALE_GRID,
};
pub use kernel::{rbf_gram, rbf_kernel, KernelCache, DEFAULT_CACHE_BUDGET};
pub use multiclass::{ova_train, MulticlassSvm};
pub use smo::{smo_train, BinaryRbfSvm, SmoDiagnostics, SvmHyperparams, MAX_PAIR_UPDATES};
