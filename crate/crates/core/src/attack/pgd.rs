//! Projected gradient descent on the rejection-aware margin.

use crate::attack::{project, AttackConfig, AttackSurface, UndefendedNetwork};
use crate::error::{Error, Result};
use crate::nn::{Network, Tensor};

/// Outcome of one attack run.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    /// Best iterate found (lowest objective ever evaluated, including
    /// the clean point and any warm start).
    pub adversarial: Tensor,
    /// Objective of the accepted iterate per iteration; entry 0 is the
    /// starting point's objective.
    pub omega_trace: Vec<f64>,
    /// Gradient iterations performed.
    pub iterations: usize,
    /// Objective at the clean point.
    pub initial_omega: f64,
    /// Objective at the returned iterate.
    pub final_omega: f64,
    /// The surface's decision at the returned iterate (0 = reject).
    pub prediction: usize,
}

/// Runs the minimising PGD attack from `x0` (true label `y`, in
/// `1..=c`) within the configured ball, optionally warm starting from a
/// previous adversarial point (it is projected into the current ball and
/// competes for best iterate, so growing budgets never lose ground).
///
/// Each iteration computes one gradient and steps along its unit-norm
/// direction, evaluating the projected candidate at displacement
/// `step_size * 2^k` for `k` in `0..step_doublings` and moving to the
/// candidate with the lowest objective; it stops when the objective
/// changes by at most `tolerance`, when the gradient vanishes, or at
/// `max_iters`. Normalising the direction keeps the candidate spacing a
/// geometric property of the ball rather than of the local gradient
/// scale: RBF score surfaces saturate exponentially away from the
/// support vectors, and stepping by the raw gradient strands the iterate
/// on those plateaus (where the defense would otherwise look far more
/// robust than it is). The returned point is the best iterate ever
/// evaluated, so its objective never exceeds the clean point's.
pub fn pgd_attack(
    surface: &impl AttackSurface,
    x0: &Tensor,
    y: usize,
    cfg: &AttackConfig,
    warm_start: Option<&Tensor>,
) -> Result<AttackResult> {
    cfg.validate()?;
    if y < 1 || y > surface.num_classes() {
        return Err(Error::Index {
            what: "class",
            index: y,
            len: surface.num_classes(),
        });
    }
    if x0.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Data("clean point leaves the [0,1] box".into()));
    }

    let initial_omega = crate::attack::omega(&surface.scores(x0)?, y)?;
    let mut best_omega = initial_omega;
    let mut best_x = x0.clone();

    let mut x = match warm_start {
        Some(w) => {
            let w = project(w, x0, cfg)?;
            let w_omega = crate::attack::omega(&surface.scores(&w)?, y)?;
            if w_omega < best_omega {
                best_omega = w_omega;
                best_x = w.clone();
            }
            w
        }
        None => x0.clone(),
    };

    let mut omega_trace = vec![best_omega];
    let mut iterations = 0;

    for _ in 0..cfg.max_iters {
        let (omega_x, grad) = surface.omega_with_gradient(&x, y)?;
        if !omega_x.is_finite() {
            return Err(Error::Numeric(format!(
                "objective became non-finite at iteration {iterations}"
            )));
        }
        let gnorm = grad.data().iter().map(|g| g * g).sum::<f64>().sqrt();
        if !gnorm.is_finite() {
            return Err(Error::Numeric(format!(
                "gradient became non-finite at iteration {iterations}"
            )));
        }
        if gnorm == 0.0 {
            break;
        }

        // Try the unit descent direction at geometrically growing
        // displacements and keep the best projected candidate.
        let mut cand_best: Option<(f64, Tensor)> = None;
        let mut step = cfg.step_size / gnorm;
        for _ in 0..cfg.step_doublings {
            let mut trial = x.clone();
            trial.axpy(-step, &grad)?;
            let trial = project(&trial, x0, cfg)?;
            let trial_omega = crate::attack::omega(&surface.scores(&trial)?, y)?;
            match &cand_best {
                Some((best, _)) if trial_omega >= *best => {}
                _ => cand_best = Some((trial_omega, trial)),
            }
            step *= 2.0;
        }
        let (omega_new, x_new) = cand_best.expect("at least one doubling");
        if !omega_new.is_finite() {
            return Err(Error::Numeric(format!(
                "objective became non-finite at iteration {iterations}"
            )));
        }

        iterations += 1;
        omega_trace.push(omega_new);
        if omega_new < best_omega {
            best_omega = omega_new;
            best_x = x_new.clone();
        }
        let converged = (omega_new - omega_x).abs() <= cfg.tolerance;
        x = x_new;
        if converged {
            break;
        }
    }

    debug_assert!(best_omega <= initial_omega);
    let prediction = surface.decide(&best_x)?;
    Ok(AttackResult {
        adversarial: best_x,
        omega_trace,
        iterations,
        initial_omega,
        final_omega: best_omega,
        prediction,
    })
}

/// Attacks a plain network through its logits (no reject option).
pub fn attack_undefended(
    net: &Network,
    x0: &Tensor,
    y: usize,
    cfg: &AttackConfig,
    warm_start: Option<&Tensor>,
) -> Result<AttackResult> {
    pgd_attack(&UndefendedNetwork(net), x0, y, cfg, warm_start)
}
