//! Accuracy accounting in the presence of a reject option.

use crate::error::{Error, Result};

/// One point of a security curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalPoint {
    pub epsilon: f64,
    pub accuracy: f64,
    pub rejection_rate: f64,
    /// Samples behind this point.
    pub n: usize,
}

/// Accuracy and rejection rate of predictions (`0` = reject) against
/// labels (`1..=c`) at budget `epsilon`.
///
/// At `epsilon = 0` a rejected sample counts as an error (it was a clean
/// point the classifier refused); at `epsilon > 0` a rejected sample
/// counts as correct (the attack failed to slip past the defense).
/// The rejection rate is the rejected fraction in both regimes.
pub fn accuracy_with_rejection(
    predictions: &[usize],
    labels: &[usize],
    epsilon: f64,
) -> Result<(f64, f64)> {
    if predictions.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Data("no predictions to score".into()));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidParam {
            name: "epsilon",
            detail: format!("{epsilon} must be non-negative"),
        });
    }
    if let Some(&l) = labels.iter().find(|&&l| l == 0) {
        return Err(Error::Data(format!("label {l} cannot be the reject class")));
    }
    let n = predictions.len();
    let rejected = predictions.iter().filter(|&&p| p == 0).count();
    let matched = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    let correct = if epsilon > 0.0 { matched + rejected } else { matched };
    Ok((correct as f64 / n as f64, rejected as f64 / n as f64))
}
