//! Minibatch SGD with momentum over softmax cross-entropy.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{Layer, LayerGrads, Network, Tensor};

/// Optimiser and schedule settings.
///
/// `dropout` is the probability the standard architecture builders give
/// their dropout layers; training itself uses whatever the layers carry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// The published MNIST recipe: lr 0.1, momentum 0.9, dropout 0.5,
    /// batch 128, 50 epochs.
    pub fn mnist_paper() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            momentum: 0.9,
            dropout: 0.5,
            batch_size: 128,
            epochs: 50,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParam {
                name: "learning_rate",
                detail: format!("{} must be positive and finite", self.learning_rate),
            });
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParam {
                name: "momentum",
                detail: format!("{} outside [0, 1)", self.momentum),
            });
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidParam {
                name: "batch_size/epochs",
                detail: "must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Per-epoch mean training loss, in epoch order.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
}

struct Velocity {
    weight: Tensor,
    bias: Vec<f64>,
}

/// Trains a copy of `net` on `data` and returns it with the loss trace.
///
/// The network must end in softmax; the gradient at the logits is the
/// fused softmax-cross-entropy form `p - onehot(y)`. Batch gradients
/// accumulate over samples in ascending index order, so results are
/// bit-reproducible for a fixed `(net, data, cfg)`. Momentum update:
/// `v <- momentum * v + g`, `w <- w - learning_rate * v`.
pub fn train_sgd(net: &Network, data: &Dataset, cfg: &TrainConfig) -> Result<(Network, TrainReport)> {
    cfg.validate()?;
    if !matches!(net.layers().last(), Some(Layer::Softmax)) {
        return Err(Error::InvalidParam {
            name: "network",
            detail: "training expects a softmax head".into(),
        });
    }
    if data.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    let classes = net
        .layer_shape(net.logits_index())
        .expect("logits index is valid")[0];
    if classes < data.num_classes() {
        return Err(Error::Data(format!(
            "network emits {classes} scores but data has {} classes",
            data.num_classes()
        )));
    }

    let mut net = net.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut velocity: Vec<Option<Velocity>> = net
        .layers()
        .iter()
        .map(|l| match l {
            Layer::Dense { weight, bias } | Layer::Conv2d { weight, bias } => Some(Velocity {
                weight: Tensor::zeros(weight.shape().to_vec()),
                bias: vec![0.0; bias.len()],
            }),
            _ => None,
        })
        .collect();

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let logits_idx = net.logits_index();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (batch_no, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads: Vec<Option<LayerGrads>> = vec![None; net.num_layers()];
            let mut batch_loss = 0.0;
            for &i in batch {
                let x = data.tensor(i);
                let (acts, masks) = net.forward_train(&x, &mut rng)?;
                let probs = acts.last().expect("non-empty network");
                let y = data.label(i) - 1;
                batch_loss -= probs.data()[y].ln();

                // Fused softmax + cross-entropy gradient at the logits.
                let mut cot = probs.clone();
                cot.data_mut()[y] -= 1.0;
                let mut cot = cot;
                for li in (0..=logits_idx).rev() {
                    let input = if li == 0 { &x } else { &acts[li - 1] };
                    let (dx, dparams) =
                        net.layers()[li].backward_train(input, masks[li].as_ref(), &cot)?;
                    if let Some(d) = dparams {
                        match &mut grads[li] {
                            Some(acc) => {
                                acc.weight.axpy(1.0, &d.weight)?;
                                for (a, b) in acc.bias.iter_mut().zip(&d.bias) {
                                    *a += b;
                                }
                            }
                            slot => *slot = Some(d),
                        }
                    }
                    cot = dx;
                }
            }
            let mean_loss = batch_loss / batch.len() as f64;
            if !mean_loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "training loss diverged at epoch {epoch}, batch {batch_no}: {mean_loss}"
                )));
            }
            loss_sum += batch_loss;

            let scale = 1.0 / batch.len() as f64;
            for (li, layer) in net.layers_mut().iter_mut().enumerate() {
                let (Some(g), Some(v), Some((w, b))) =
                    (&grads[li], &mut velocity[li], layer.params_mut())
                else {
                    continue;
                };
                for (vi, gi) in v.weight.data_mut().iter_mut().zip(g.weight.data()) {
                    *vi = cfg.momentum * *vi + gi * scale;
                }
                for (wi, vi) in w.data_mut().iter_mut().zip(v.weight.data()) {
                    *wi -= cfg.learning_rate * vi;
                }
                for (vi, gi) in v.bias.iter_mut().zip(&g.bias) {
                    *vi = cfg.momentum * *vi + gi * scale;
                }
                for (bi, vi) in b.iter_mut().zip(&v.bias) {
                    *bi -= cfg.learning_rate * vi;
                }
            }
        }
        epoch_losses.push(loss_sum / data.len() as f64);
    }
    Ok((net, TrainReport { epoch_losses }))
}
