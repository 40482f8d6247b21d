//! Deep neural rejection: RBF SVMs over tapped network representations,
//! a combiner SVM over their concatenated class scores, and a reject
//! threshold on the combined winner.
//!
//! The decision rule treats reject as class 0 with fixed score `theta`:
//! an input is assigned `argmax` over classes `1..=c` of the combined
//! scores unless that winning score is not higher than `theta`, in which
//! case the input is rejected. All gradients flow analytically from the
//! combiner through the per-layer machines into the network taps and
//! back to the input in one backward sweep.

pub(crate) mod fit;
mod nr;

pub use fit::{calibrate_threshold, fit_dnr, DnrFitConfig, DnrFitReport};
pub use nr::{fit_nr, NrFitReport, NrModel};

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::{Network, Tensor};
use crate::svm::MulticlassSvm;

/// Strictly increasing indices of the layers whose activations feed the
/// per-layer machines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerTap {
    indices: Vec<usize>,
}

impl LayerTap {
    /// Validates indices against a network: non-empty, strictly
    /// increasing, all within the layer range.
    pub fn new(indices: Vec<usize>, net: &Network) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidParam {
                name: "taps",
                detail: "need at least one tapped layer".into(),
            });
        }
        if !indices.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidParam {
                name: "taps",
                detail: format!("indices {indices:?} not strictly increasing"),
            });
        }
        let last = *indices.last().expect("non-empty");
        if last >= net.num_layers() {
            return Err(Error::Index {
                what: "layer",
                index: last,
                len: net.num_layers(),
            });
        }
        Ok(LayerTap { indices })
    }

    /// The standard choice: the last three representation stages of the
    /// network (skipping softmax/dropout and pre-activation duplicates).
    pub fn suggested(net: &Network) -> Result<Self> {
        let taps = net.suggested_taps(3);
        Self::new(taps, net)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Combined per-class scores of one input, plus the reject threshold the
/// model carried when scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    /// Index `k` holds the combined score of class `k + 1`.
    pub scores: Vec<f64>,
    /// Reject threshold; `None` means rejection is disabled.
    pub theta: Option<f64>,
}

impl ScoreVector {
    /// Highest class score.
    pub fn max_score(&self) -> f64 {
        self.scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Winning class in `1..=c` (smallest index on ties), ignoring the
    /// reject option.
    pub fn argmax_class(&self) -> usize {
        let mut best = 0;
        for (k, &s) in self.scores.iter().enumerate() {
            if s > self.scores[best] {
                best = k;
            }
        }
        best + 1
    }

    /// Decision in `0..=c`: the winning class, or 0 when its score is
    /// not higher than the threshold (rejects on equality).
    pub fn decision(&self) -> usize {
        let winner = self.argmax_class();
        match self.theta {
            Some(theta) if self.scores[winner - 1] <= theta => 0,
            _ => winner,
        }
    }
}

/// Everything computed in one defended forward pass; reused by the
/// gradient so the network runs exactly once per direction.
#[derive(Debug, Clone)]
pub struct DnrForward {
    activations: Vec<Tensor>,
    tap_features: Vec<Vec<f64>>,
    /// Concatenated per-tap class scores, the combiner's input.
    pub base_scores: Vec<f64>,
    /// Combined class scores (index `k` is class `k + 1`).
    pub scores: Vec<f64>,
}

/// The trained rejecting classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct DnrModel {
    network: Network,
    taps: LayerTap,
    base_svms: Vec<MulticlassSvm>,
    combiner: MulticlassSvm,
    theta: Option<f64>,
    num_classes: usize,
}

impl DnrModel {
    /// Assembles a model from parts, checking that every machine's
    /// dimensionality matches its tap and the combiner consumes exactly
    /// `taps * classes` scores.
    pub fn assemble(
        network: Network,
        taps: LayerTap,
        base_svms: Vec<MulticlassSvm>,
        combiner: MulticlassSvm,
        theta: Option<f64>,
        num_classes: usize,
    ) -> Result<Self> {
        if base_svms.len() != taps.len() {
            return Err(Error::Data(format!(
                "{} base machines for {} taps",
                base_svms.len(),
                taps.len()
            )));
        }
        for (svm, &tap) in base_svms.iter().zip(taps.indices()) {
            let dim: usize = network.layer_shape(tap)?.iter().product();
            if svm.dim() != dim {
                return Err(Error::Shape {
                    expected: vec![dim],
                    actual: vec![svm.dim()],
                });
            }
            if svm.num_classes() != num_classes {
                return Err(Error::Data(format!(
                    "base machine emits {} scores for {num_classes} classes",
                    svm.num_classes()
                )));
            }
        }
        if combiner.dim() != taps.len() * num_classes {
            return Err(Error::Shape {
                expected: vec![taps.len() * num_classes],
                actual: vec![combiner.dim()],
            });
        }
        if combiner.num_classes() != num_classes {
            return Err(Error::Data(format!(
                "combiner emits {} scores for {num_classes} classes",
                combiner.num_classes()
            )));
        }
        if let Some(t) = theta {
            if !t.is_finite() {
                return Err(Error::InvalidParam {
                    name: "theta",
                    detail: format!("{t} is not finite"),
                });
            }
        }
        Ok(DnrModel {
            network,
            taps,
            base_svms,
            combiner,
            theta,
            num_classes,
        })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn taps(&self) -> &LayerTap {
        &self.taps
    }

    pub fn base_svms(&self) -> &[MulticlassSvm] {
        &self.base_svms
    }

    pub fn combiner(&self) -> &MulticlassSvm {
        &self.combiner
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn theta(&self) -> Option<f64> {
        self.theta
    }

    /// Sets (or clears) the reject threshold; must be finite.
    pub fn set_theta(&mut self, theta: Option<f64>) -> Result<()> {
        if let Some(t) = theta {
            if !t.is_finite() {
                return Err(Error::InvalidParam {
                    name: "theta",
                    detail: format!("{t} is not finite"),
                });
            }
        }
        self.theta = theta;
        Ok(())
    }

    /// One full defended forward pass: network, taps, per-tap machines,
    /// combiner.
    pub fn forward_detail(&self, x: &Tensor) -> Result<DnrForward> {
        let activations = self.network.forward_all(x)?;
        let tap_features: Vec<Vec<f64>> = self
            .taps
            .indices()
            .iter()
            .map(|&t| activations[t].data().to_vec())
            .collect();
        let mut base_scores = Vec::with_capacity(self.taps.len() * self.num_classes);
        for (svm, feats) in self.base_svms.iter().zip(&tap_features) {
            base_scores.extend(svm.decision_scores(feats)?);
        }
        let scores = self.combiner.decision_scores(&base_scores)?;
        Ok(DnrForward {
            activations,
            tap_features,
            base_scores,
            scores,
        })
    }

    /// Gradient of `sum_k class_weights[k] * combined_score_k` with
    /// respect to the input, reusing a finished forward pass. The chain
    /// runs combiner -> per-tap machines -> one multi-tap network VJP.
    pub fn weighted_input_gradient(
        &self,
        x: &Tensor,
        detail: &DnrForward,
        class_weights: &[f64],
    ) -> Result<Tensor> {
        let combiner_grad = self
            .combiner
            .weighted_score_gradient(&detail.base_scores, class_weights)?;
        let c = self.num_classes;
        let mut taps = Vec::with_capacity(self.taps.len());
        for (t, (svm, feats)) in self.base_svms.iter().zip(&detail.tap_features).enumerate() {
            let weights = &combiner_grad[t * c..(t + 1) * c];
            let grad = svm.weighted_score_gradient(feats, weights)?;
            let tap_layer = self.taps.indices()[t];
            let shape = self.network.layer_shape(tap_layer)?.to_vec();
            taps.push((tap_layer, Tensor::new(shape, grad)?));
        }
        self.network
            .vjp_multi_with_acts(x, &detail.activations, &taps)
    }
}

/// Flattened activations at each tapped layer for one input.
pub fn extract_representations(net: &Network, taps: &LayerTap, x: &Tensor) -> Result<Vec<Vec<f64>>> {
    let acts = net.forward_all(x)?;
    Ok(taps
        .indices()
        .iter()
        .map(|&t| acts[t].data().to_vec())
        .collect())
}

/// Per-tap representation matrices for a whole feature matrix: entry `t`
/// holds one row per input row, in order.
pub fn extract_representation_matrices(
    net: &Network,
    taps: &LayerTap,
    features: ArrayView2<'_, f64>,
    sample_shape: &[usize],
) -> Result<Vec<Array2<f64>>> {
    let n = features.nrows();
    let rows: Result<Vec<Vec<Vec<f64>>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = Tensor::new(sample_shape.to_vec(), features.row(i).to_vec())?;
            extract_representations(net, taps, &x)
        })
        .collect();
    let rows = rows?;
    let mut out = Vec::with_capacity(taps.len());
    for (t, &tap) in taps.indices().iter().enumerate() {
        let dim: usize = net.layer_shape(tap)?.iter().product();
        let mut m = Array2::zeros((n, dim));
        for (i, sample) in rows.iter().enumerate() {
            m.row_mut(i)
                .assign(&ndarray::ArrayView1::from(&sample[t][..]));
        }
        out.push(m);
    }
    Ok(out)
}

/// Combined class scores for one input.
pub fn combined_scores(model: &DnrModel, x: &Tensor) -> Result<ScoreVector> {
    let detail = model.forward_detail(x)?;
    Ok(ScoreVector {
        scores: detail.scores,
        theta: model.theta(),
    })
}

/// Combined class scores for every row of a feature matrix (row `i` of
/// the result scores row `i` of the input), using the batched machines.
pub fn combined_score_matrix(
    model: &DnrModel,
    features: ArrayView2<'_, f64>,
    sample_shape: &[usize],
) -> Result<Array2<f64>> {
    let reps = extract_representation_matrices(model.network(), model.taps(), features, sample_shape)?;
    let c = model.num_classes();
    let n = features.nrows();
    let mut base = Array2::zeros((n, model.taps().len() * c));
    for (t, (svm, rep)) in model.base_svms().iter().zip(&reps).enumerate() {
        let scores = svm.decision_matrix(rep.view())?;
        base.slice_mut(ndarray::s![.., t * c..(t + 1) * c])
            .assign(&scores);
    }
    model.combiner().decision_matrix(base.view())
}

/// Full decision in `0..=c` for one input: 0 rejects, otherwise the
/// combined argmax class.
pub fn predict_with_reject(model: &DnrModel, x: &Tensor) -> Result<usize> {
    Ok(combined_scores(model, x)?.decision())
}

/// Decisions for every row of a feature matrix under the model's theta.
pub fn predict_with_reject_batch(
    model: &DnrModel,
    features: ArrayView2<'_, f64>,
    sample_shape: &[usize],
) -> Result<Vec<usize>> {
    let scores = combined_score_matrix(model, features, sample_shape)?;
    Ok(decisions_from_scores(&scores, model.theta()))
}

/// Applies the reject rule to precomputed combined scores.
pub fn decisions_from_scores(scores: &Array2<f64>, theta: Option<f64>) -> Vec<usize> {
    scores
        .axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for (k, &s) in row.iter().enumerate() {
                if s > row[best] {
                    best = k;
                }
            }
            match theta {
                Some(t) if row[best] <= t => 0,
                _ => best + 1,
            }
        })
        .collect()
}

/// Gradient of combined score `k` (class in `1..=c`) at `x`.
pub fn dnr_score_gradient(model: &DnrModel, x: &Tensor, k: usize) -> Result<Tensor> {
    if k < 1 || k > model.num_classes() {
        return Err(Error::Index {
            what: "class",
            index: k,
            len: model.num_classes(),
        });
    }
    let detail = model.forward_detail(x)?;
    let mut w = vec![0.0; model.num_classes()];
    w[k - 1] = 1.0;
    model.weighted_input_gradient(x, &detail, &w)
}
