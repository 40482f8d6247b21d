//! The rejection-aware evasion objective.
//!
//! For a point with true label `y`, the attack minimises
//! `omega(x) = s_y(x) - max_{j != y} s_j(x)` over the class scores
//! `s_1..s_c`. The reject score never enters the max: the attacker must
//! make some other *class* outscore the true one, not merely push the
//! point into the rejected region. Driving `omega` negative therefore
//! means a competing class wins; whether the final point is accepted is
//! decided afterwards by the model's threshold.

use crate::dnr::DnrModel;
use crate::error::{Error, Result};
use crate::nn::{Network, Tensor};

/// Score surface a PGD attack can run against.
pub trait AttackSurface {
    fn num_classes(&self) -> usize;

    /// Class scores `s_1..s_c` at `x` (index `k` is class `k + 1`).
    fn scores(&self, x: &Tensor) -> Result<Vec<f64>>;

    /// The objective and its input gradient at `x` for true label `y`.
    fn omega_with_gradient(&self, x: &Tensor, y: usize) -> Result<(f64, Tensor)>;

    /// The surface's own final decision at `x` (may be 0 for reject).
    fn decide(&self, x: &Tensor) -> Result<usize>;
}

/// `s_y - max_{j != y} s_j` over a score vector; `y` in `1..=c`.
pub fn omega(scores: &[f64], y: usize) -> Result<f64> {
    let j = competitor(scores, y)?;
    Ok(scores[y - 1] - scores[j - 1])
}

/// The competing class: argmax of the scores excluding `y` (smallest
/// class index on ties). Requires at least two classes.
pub fn competitor(scores: &[f64], y: usize) -> Result<usize> {
    if scores.len() < 2 {
        return Err(Error::Data(format!(
            "need at least 2 class scores, got {}",
            scores.len()
        )));
    }
    if y < 1 || y > scores.len() {
        return Err(Error::Index {
            what: "class",
            index: y,
            len: scores.len(),
        });
    }
    let mut best = None;
    for (k, &s) in scores.iter().enumerate() {
        if k + 1 == y {
            continue;
        }
        match best {
            None => best = Some(k),
            Some(b) if s > scores[b] => best = Some(k),
            _ => {}
        }
    }
    Ok(best.expect("at least one non-y class") + 1)
}

/// Convenience wrapper: objective value and gradient on any surface.
pub fn omega_gradient(
    surface: &impl AttackSurface,
    x: &Tensor,
    y: usize,
) -> Result<(f64, Tensor)> {
    surface.omega_with_gradient(x, y)
}

impl AttackSurface for DnrModel {
    fn num_classes(&self) -> usize {
        self.num_classes()
    }

    fn scores(&self, x: &Tensor) -> Result<Vec<f64>> {
        Ok(self.forward_detail(x)?.scores)
    }

    fn omega_with_gradient(&self, x: &Tensor, y: usize) -> Result<(f64, Tensor)> {
        let detail = self.forward_detail(x)?;
        let value = omega(&detail.scores, y)?;
        let j = competitor(&detail.scores, y)?;
        // One fused backward pass for grad(s_y) - grad(s_j).
        let mut w = vec![0.0; self.num_classes()];
        w[y - 1] = 1.0;
        w[j - 1] = -1.0;
        let grad = self.weighted_input_gradient(x, &detail, &w)?;
        Ok((value, grad))
    }

    fn decide(&self, x: &Tensor) -> Result<usize> {
        crate::dnr::predict_with_reject(self, x)
    }
}

/// Attack surface of a plain network: pre-softmax logits as the class
/// scores, never rejecting.
pub struct UndefendedNetwork<'a>(pub &'a Network);

impl AttackSurface for UndefendedNetwork<'_> {
    fn num_classes(&self) -> usize {
        self.0
            .layer_shape(self.0.logits_index())
            .expect("logits index is valid")[0]
    }

    fn scores(&self, x: &Tensor) -> Result<Vec<f64>> {
        Ok(self.0.logits(x)?.into_data())
    }

    fn omega_with_gradient(&self, x: &Tensor, y: usize) -> Result<(f64, Tensor)> {
        let acts = self.0.forward_all(x)?;
        let logits_idx = self.0.logits_index();
        let scores = acts[logits_idx].data();
        let value = omega(scores, y)?;
        let j = competitor(scores, y)?;
        let mut cot = Tensor::zeros(vec![scores.len()]);
        cot.data_mut()[y - 1] = 1.0;
        cot.data_mut()[j - 1] = -1.0;
        let grad = self
            .0
            .vjp_multi_with_acts(x, &acts, &[(logits_idx, cot)])?;
        Ok((value, grad))
    }

    fn decide(&self, x: &Tensor) -> Result<usize> {
        self.0.predict(x)
    }
}
