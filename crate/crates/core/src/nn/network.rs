//! Feed-forward network: layer chain, forward activations, and exact
//! input VJPs from any set of tapped layers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{Layer, LayerSpec, Tensor};

/// A validated chain of layers over a fixed input shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    /// Output shape of each layer, same length as `layers`.
    shapes: Vec<Vec<usize>>,
}

impl Network {
    /// Builds and initialises a network from an architecture description.
    /// Weights draw from the seeded generator in layer order, so equal
    /// `(specs, seed)` always produce identical parameters.
    pub fn new(input_shape: Vec<usize>, specs: &[LayerSpec], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input_shape.clone();
        for spec in specs {
            let layer = Layer::build(spec, &shape, &mut rng)?;
            shape = layer.out_shape(&shape)?;
            layers.push(layer);
        }
        Self::from_layers(input_shape, layers)
    }

    /// Wraps pre-built layers (loaded from an archive, or hand-assembled
    /// in tests), validating that shapes compose.
    pub fn from_layers(input_shape: Vec<usize>, layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParam {
                name: "layers",
                detail: "network needs at least one layer".into(),
            });
        }
        let mut shapes = Vec::with_capacity(layers.len());
        let mut shape = input_shape.clone();
        for layer in &layers {
            shape = layer.out_shape(&shape)?;
            shapes.push(shape.clone());
        }
        Ok(Network {
            input_shape,
            layers,
            shapes,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Output shape of layer `i`.
    pub fn layer_shape(&self, i: usize) -> Result<&[usize]> {
        self.shapes.get(i).map(Vec::as_slice).ok_or(Error::Index {
            what: "layer",
            index: i,
            len: self.layers.len(),
        })
    }

    /// Index of the layer producing class scores before any softmax: the
    /// last layer itself, or the one below a trailing softmax.
    pub fn logits_index(&self) -> usize {
        match self.layers.last() {
            Some(Layer::Softmax) if self.layers.len() > 1 => self.layers.len() - 2,
            _ => self.layers.len() - 1,
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape() != self.input_shape {
            return Err(Error::Shape {
                expected: self.input_shape.clone(),
                actual: x.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Evaluation-mode forward pass returning every layer's activation,
    /// in layer order. Errors if any activation goes non-finite.
    pub fn forward_all(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        self.check_input(x)?;
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut cur = x;
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer.forward(cur)?;
            if !next.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite activation after layer {i} ({})",
                    layer.kind()
                )));
            }
            acts.push(next);
            cur = acts.last().expect("just pushed");
        }
        Ok(acts)
    }

    /// Final activation only.
    pub fn output(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self
            .forward_all(x)?
            .pop()
            .expect("network has at least one layer"))
    }

    /// Pre-softmax class scores (the activation at [`Self::logits_index`]).
    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        let idx = self.logits_index();
        let mut acts = self.forward_all(x)?;
        Ok(acts.swap_remove(idx))
    }

    /// Predicted label in `1..=c` from the logits (argmax, first index on
    /// ties).
    pub fn predict(&self, x: &Tensor) -> Result<usize> {
        let logits = self.logits(x)?;
        let mut best = 0;
        for (i, &v) in logits.data().iter().enumerate() {
            if v > logits.data()[best] {
                best = i;
            }
        }
        Ok(best + 1)
    }

    /// Training-mode forward pass; returns activations plus any dropout
    /// masks (indexed like layers).
    pub(crate) fn forward_train(
        &self,
        x: &Tensor,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<Tensor>, Vec<Option<Vec<f64>>>)> {
        self.check_input(x)?;
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::with_capacity(self.layers.len());
        let mut cur = x;
        for layer in &self.layers {
            let (next, mask) = layer.forward_train(cur, rng)?;
            acts.push(next);
            masks.push(mask);
            cur = acts.last().expect("just pushed");
        }
        Ok((acts, masks))
    }

    /// Pulls one cotangent at one tapped layer back to the input.
    pub fn vjp_to_input(&self, x: &Tensor, tap: usize, cotangent: &Tensor) -> Result<Tensor> {
        self.vjp_multi(x, &[(tap, cotangent.clone())])
    }

    /// Pulls cotangents sitting on several tapped activations back to the
    /// input in a single backward sweep. `taps` pairs a layer index with a
    /// cotangent shaped like that layer's output; indices may repeat.
    pub fn vjp_multi(&self, x: &Tensor, taps: &[(usize, Tensor)]) -> Result<Tensor> {
        let acts = self.forward_all(x)?;
        self.vjp_multi_with_acts(x, &acts, taps)
    }

    /// As [`Self::vjp_multi`] but reusing activations from an earlier
    /// [`Self::forward_all`] on the same `x`.
    pub fn vjp_multi_with_acts(
        &self,
        x: &Tensor,
        acts: &[Tensor],
        taps: &[(usize, Tensor)],
    ) -> Result<Tensor> {
        if taps.is_empty() {
            return Err(Error::InvalidParam {
                name: "taps",
                detail: "need at least one cotangent".into(),
            });
        }
        if acts.len() != self.layers.len() {
            return Err(Error::Data(format!(
                "{} activations for {} layers",
                acts.len(),
                self.layers.len()
            )));
        }
        for (tap, cot) in taps {
            let shape = self.layer_shape(*tap)?;
            if cot.shape() != shape {
                return Err(Error::Shape {
                    expected: shape.to_vec(),
                    actual: cot.shape().to_vec(),
                });
            }
        }
        let top = taps.iter().map(|(t, _)| *t).max().expect("non-empty");

        // Walk from the highest tap down to the input, folding in each
        // tap's cotangent as its layer is reached.
        let mut grad = Tensor::zeros(self.shapes[top].clone());
        for (tap, cot) in taps {
            if *tap == top {
                grad.axpy(1.0, cot)?;
            }
        }
        for i in (0..=top).rev() {
            let input = if i == 0 { x } else { &acts[i - 1] };
            grad = self.layers[i].vjp_input(input, &grad)?;
            if i > 0 {
                for (tap, cot) in taps {
                    if *tap == i - 1 {
                        grad.axpy(1.0, cot)?;
                    }
                }
            }
        }
        Ok(grad)
    }

    /// Suggests up to `count` tap indices from the top of the network:
    /// walking backwards, softmax, dropout, and flatten are skipped (none
    /// changes the representation), and a layer immediately followed by
    /// its ReLU is skipped in favour of the ReLU. Returned indices are
    /// ascending.
    pub fn suggested_taps(&self, count: usize) -> Vec<usize> {
        let mut taps = Vec::new();
        for i in (0..self.layers.len()).rev() {
            if taps.len() == count {
                break;
            }
            match self.layers[i] {
                Layer::Softmax | Layer::Dropout { .. } | Layer::Flatten => continue,
                _ => {}
            }
            if matches!(self.layers.get(i + 1), Some(Layer::Relu)) {
                continue;
            }
            taps.push(i);
        }
        taps.reverse();
        taps
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net() -> Network {
        Network::new(
            vec![1, 8, 8],
            &[
                LayerSpec::Conv2d { filters: 2, kernel: 3 },
                LayerSpec::Relu,
                LayerSpec::MaxPool2x2,
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 5 },
                LayerSpec::Relu,
                LayerSpec::Dropout { p: 0.3 },
                LayerSpec::Dense { units: 3 },
                LayerSpec::Softmax,
            ],
            42,
        )
        .unwrap()
    }

    #[test]
    fn shapes_compose() {
        let n = net();
        assert_eq!(n.layer_shape(0).unwrap(), &[2, 6, 6]);
        assert_eq!(n.layer_shape(2).unwrap(), &[2, 3, 3]);
        assert_eq!(n.layer_shape(3).unwrap(), &[18]);
        assert_eq!(n.layer_shape(8).unwrap(), &[3]);
        assert_eq!(n.logits_index(), 7);
    }

    #[test]
    fn construction_is_deterministic_in_seed() {
        let a = net();
        let b = net();
        assert_eq!(a, b);
        let c = Network::new(
            vec![1, 8, 8],
            &[LayerSpec::Flatten, LayerSpec::Dense { units: 3 }],
            1,
        )
        .unwrap();
        let d = Network::new(
            vec![1, 8, 8],
            &[LayerSpec::Flatten, LayerSpec::Dense { units: 3 }],
            2,
        )
        .unwrap();
        assert_ne!(c, d);
    }

    #[test]
    fn incompatible_chain_is_rejected() {
        // Dense straight on an image shape (no flatten).
        assert!(Network::new(vec![1, 8, 8], &[LayerSpec::Dense { units: 3 }], 0).is_err());
    }

    #[test]
    fn forward_all_returns_one_activation_per_layer() {
        let n = net();
        let x = Tensor::new(vec![1, 8, 8], (0..64).map(|i| f64::from(i) / 64.0).collect()).unwrap();
        let acts = n.forward_all(&x).unwrap();
        assert_eq!(acts.len(), 9);
        let probs: f64 = acts[8].data().iter().sum();
        assert!((probs - 1.0).abs() < 1e-12);
        // Dropout is identity outside training.
        assert_eq!(acts[6], acts[5]);
    }

    #[test]
    fn suggested_taps_skip_softmax_dropout_and_pre_relu_layers() {
        let n = net();
        assert_eq!(n.suggested_taps(3), vec![2, 5, 7]);
        assert_eq!(n.suggested_taps(2), vec![5, 7]);
    }

    #[test]
    fn bad_input_shape_is_rejected() {
        let n = net();
        let x = Tensor::zeros(vec![1, 7, 8]);
        assert!(n.forward_all(&x).is_err());
    }
}
