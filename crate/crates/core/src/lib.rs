//! Deep neural rejection (DNR) workbench.
//!
//! A rejecting classifier is stacked on top of a trained feed-forward
//! network: RBF SVMs score the representations at a few chosen layers,
//! a combiner RBF SVM fuses those scores, and inputs whose best combined
//! score falls at or below a calibrated threshold are rejected instead of
//! classified. The crate also ships the matching defense-aware evasion
//! attack (projected gradient descent on the rejection-aware margin) and a
//! security-evaluation harness that sweeps perturbation budgets and emits
//! curves.
//!
//! Modules mirror the pipeline stages:
//!
//! * [`data`] — dataset container, deterministic splits, IDX/CIFAR loaders,
//!   synthetic Gaussian blobs.
//! * [`nn`] — small dense/conv network with exact input VJPs and SGD
//!   training.
//! * [`svm`] — binary SMO solver, one-vs-all multiclass wrapper, RBF kernel
//!   and score gradients, cross-validated grid search.
//! * [`dnr`] — layer taps, stacked fitting, threshold calibration, the
//!   rejecting decision rule, and its input gradient.
//! * [`attack`] — norm-ball projections and the PGD attack, defended and
//!   undefended.
//! * [`eval`] — accuracy-vs-budget protocol, threshold sweeps, CSV/SVG/
//!   manifest emitters.
//! * [`archive`] — versioned binary serialization for trained artifacts.
//!
//! Labels are `1..=c` everywhere; `0` is reserved for the reject decision.

pub mod archive;
pub mod attack;
pub mod data;
pub mod dnr;
pub mod error;
pub mod eval;
pub mod nn;
pub mod svm;

pub use error::{Error, Result};
