//! Defense-aware evasion: the rejection-aware margin objective and its
//! projected-gradient minimiser.

mod objective;
mod pgd;
mod project;

pub use objective::{competitor, omega, omega_gradient, AttackSurface, UndefendedNetwork};
pub use pgd::{attack_undefended, pgd_attack, AttackResult};
pub use project::project;

use crate::error::{Error, Result};

/// Perturbation-ball norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackNorm {
    L1,
    L2,
    LInf,
}

impl AttackNorm {
    /// The p-norm of a flat vector.
    pub fn norm(&self, v: &[f64]) -> f64 {
        match self {
            AttackNorm::L1 => v.iter().map(|x| x.abs()).sum(),
            AttackNorm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            AttackNorm::LInf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }
}

/// Projected-gradient attack settings.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    /// Perturbation budget (ball radius around the clean point).
    pub epsilon: f64,
    pub norm: AttackNorm,
    /// Base step; each iteration tries the gradient step at this size
    /// doubled `step_doublings` times and keeps the best candidate.
    pub step_size: f64,
    pub step_doublings: usize,
    /// Stop once the objective changes by at most this between iterates.
    pub tolerance: f64,
    pub max_iters: usize,
    /// Extra alternating ball/box projection rounds after the first pass
    /// (0 keeps the single ball-then-box pass, which is always feasible).
    pub extra_projection_rounds: usize,
}

impl AttackConfig {
    /// Defaults at a given budget and norm: step 0.05, ten doublings,
    /// tolerance 1e-6, 200 iterations.
    pub fn new(epsilon: f64, norm: AttackNorm) -> Self {
        AttackConfig {
            epsilon,
            norm,
            step_size: 0.05,
            step_doublings: 10,
            tolerance: 1e-6,
            max_iters: 200,
            extra_projection_rounds: 0,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParam {
                name: "epsilon",
                detail: format!("{} must be finite and non-negative", self.epsilon),
            });
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidParam {
                name: "step_size",
                detail: format!("{} must be positive and finite", self.step_size),
            });
        }
        if self.step_doublings == 0 || self.max_iters == 0 {
            return Err(Error::InvalidParam {
                name: "step_doublings/max_iters",
                detail: "must be positive".into(),
            });
        }
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return Err(Error::InvalidParam {
                name: "tolerance",
                detail: format!("{} must be finite and non-negative", self.tolerance),
            });
        }
        Ok(())
    }
}
