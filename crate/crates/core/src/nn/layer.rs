//! Network layers: forward evaluation, training-mode forward, and exact
//! vector-Jacobian products for both parameters and inputs.
//!
//! Conventions: activations are single-sample [`Tensor`]s, image tensors
//! are `[channels, height, width]`, dense weights are `[out, in]`, conv
//! weights `[filters, channels, k, k]` applied as valid cross-correlation
//! with stride 1. Max-pool is 2x2/stride 2 with first-in-scan-order tie
//! breaking, so its subgradient is uniquely defined and reproducible.

use ndarray::linalg::{general_mat_mul, general_mat_vec_mul};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Architecture description consumed by [`crate::nn::Network::new`].
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Dense { units: usize },
    Relu,
    Conv2d { filters: usize, kernel: usize },
    MaxPool2x2,
    Flatten,
    Dropout { p: f64 },
    Softmax,
}

/// Gradients of one layer's parameters, shaped like the parameters.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub weight: Tensor,
    pub bias: Vec<f64>,
}

/// A concrete layer with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// Affine map, weight `[out, in]`.
    Dense { weight: Tensor, bias: Vec<f64> },
    /// Elementwise `max(0, x)`.
    Relu,
    /// Valid cross-correlation, stride 1, weight `[filters, in_ch, k, k]`.
    Conv2d { weight: Tensor, bias: Vec<f64> },
    /// 2x2 max pooling with stride 2 (floor on odd extents).
    MaxPool2x2,
    /// Reshape to a flat vector.
    Flatten,
    /// Inverted dropout; identity outside training.
    Dropout { p: f64 },
    /// Stable softmax over a flat vector.
    Softmax,
}

// He-uniform: Var(w) = 2/fan_in, which keeps activation scale roughly
// constant through ReLU stacks. The gentler 1/sqrt(fan_in) bound stalls
// the deeper conv architectures for several epochs before the logits
// grow out of the near-uniform-softmax plateau.
fn uniform_fan_in(rng: &mut ChaCha8Rng, fan_in: usize, n: usize) -> Vec<f64> {
    let bound = (6.0 / fan_in as f64).sqrt();
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

impl Layer {
    /// Instantiates `spec` for the given input shape, drawing weights
    /// He-uniform from `[-sqrt(6/fan_in), sqrt(6/fan_in)]`.
    pub fn build(spec: &LayerSpec, in_shape: &[usize], rng: &mut ChaCha8Rng) -> Result<Layer> {
        Ok(match *spec {
            LayerSpec::Dense { units } => {
                if in_shape.len() != 1 {
                    return Err(Error::Shape {
                        expected: vec![in_shape.iter().product()],
                        actual: in_shape.to_vec(),
                    });
                }
                if units == 0 {
                    return Err(Error::InvalidParam {
                        name: "units",
                        detail: "dense layer needs at least 1 unit".into(),
                    });
                }
                let n_in = in_shape[0];
                Layer::Dense {
                    weight: Tensor::new(vec![units, n_in], uniform_fan_in(rng, n_in, units * n_in))?,
                    bias: vec![0.0; units],
                }
            }
            LayerSpec::Conv2d { filters, kernel } => {
                if in_shape.len() != 3 {
                    return Err(Error::Shape {
                        expected: vec![0, 0, 0],
                        actual: in_shape.to_vec(),
                    });
                }
                if filters == 0 || kernel == 0 {
                    return Err(Error::InvalidParam {
                        name: "conv2d",
                        detail: "filters and kernel must be positive".into(),
                    });
                }
                let c = in_shape[0];
                let fan_in = c * kernel * kernel;
                Layer::Conv2d {
                    weight: Tensor::new(
                        vec![filters, c, kernel, kernel],
                        uniform_fan_in(rng, fan_in, filters * fan_in),
                    )?,
                    bias: vec![0.0; filters],
                }
            }
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::MaxPool2x2 => Layer::MaxPool2x2,
            LayerSpec::Flatten => Layer::Flatten,
            LayerSpec::Dropout { p } => {
                if !(0.0..1.0).contains(&p) {
                    return Err(Error::InvalidParam {
                        name: "dropout",
                        detail: format!("p = {p} outside [0, 1)"),
                    });
                }
                Layer::Dropout { p }
            }
            LayerSpec::Softmax => Layer::Softmax,
        })
    }

    /// Output shape for an input of shape `in_shape`; errors when the
    /// layer cannot consume that shape.
    pub fn out_shape(&self, in_shape: &[usize]) -> Result<Vec<usize>> {
        let bad = || Error::Shape {
            expected: vec![],
            actual: in_shape.to_vec(),
        };
        match self {
            Layer::Dense { weight, .. } => {
                let (units, n_in) = (weight.shape()[0], weight.shape()[1]);
                if in_shape != [n_in] {
                    return Err(Error::Shape {
                        expected: vec![n_in],
                        actual: in_shape.to_vec(),
                    });
                }
                Ok(vec![units])
            }
            Layer::Conv2d { weight, .. } => {
                let (f, c, k) = (weight.shape()[0], weight.shape()[1], weight.shape()[2]);
                if in_shape.len() != 3 || in_shape[0] != c || in_shape[1] < k || in_shape[2] < k {
                    return Err(bad());
                }
                Ok(vec![f, in_shape[1] - k + 1, in_shape[2] - k + 1])
            }
            Layer::MaxPool2x2 => {
                if in_shape.len() != 3 || in_shape[1] < 2 || in_shape[2] < 2 {
                    return Err(bad());
                }
                Ok(vec![in_shape[0], in_shape[1] / 2, in_shape[2] / 2])
            }
            Layer::Flatten => Ok(vec![in_shape.iter().product()]),
            Layer::Softmax => {
                if in_shape.len() != 1 {
                    return Err(bad());
                }
                Ok(in_shape.to_vec())
            }
            Layer::Relu | Layer::Dropout { .. } => Ok(in_shape.to_vec()),
        }
    }

    /// Evaluation-mode forward pass (dropout is the identity).
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Dense { weight, bias } => dense_forward(weight, bias, x),
            Layer::Conv2d { weight, bias } => conv_forward(weight, bias, x),
            Layer::Relu => Ok(Tensor::new(
                x.shape().to_vec(),
                x.data().iter().map(|&v| v.max(0.0)).collect(),
            )?),
            Layer::MaxPool2x2 => maxpool_forward(x),
            Layer::Flatten => x.clone().reshaped(vec![x.len()]),
            Layer::Dropout { .. } => Ok(x.clone()),
            Layer::Softmax => softmax_forward(x),
        }
    }

    /// Training-mode forward pass. Dropout samples an inverted-scaling
    /// mask (`0` or `1/(1-p)`) and returns it for the backward pass; all
    /// other layers behave like [`Layer::forward`].
    pub fn forward_train(
        &self,
        x: &Tensor,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Tensor, Option<Vec<f64>>)> {
        if let Layer::Dropout { p } = self {
            let keep = 1.0 - p;
            let mask: Vec<f64> = x
                .data()
                .iter()
                .map(|_| {
                    if rng.random_range(0.0..1.0) < *p {
                        0.0
                    } else {
                        1.0 / keep
                    }
                })
                .collect();
            let out = Tensor::new(
                x.shape().to_vec(),
                x.data().iter().zip(&mask).map(|(v, m)| v * m).collect(),
            )?;
            Ok((out, Some(mask)))
        } else {
            Ok((self.forward(x)?, None))
        }
    }

    /// Evaluation-mode vector-Jacobian product with respect to the input:
    /// given the layer input `x` and a cotangent on the output, returns
    /// the cotangent on `x`.
    pub fn vjp_input(&self, x: &Tensor, cot: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Dense { weight, .. } => dense_vjp_input(weight, cot, x),
            Layer::Conv2d { weight, .. } => conv_vjp_input(weight, x, cot),
            Layer::Relu => {
                let data = x
                    .data()
                    .iter()
                    .zip(cot.data())
                    .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
                    .collect();
                Tensor::new(x.shape().to_vec(), data)
            }
            Layer::MaxPool2x2 => maxpool_vjp(x, cot),
            Layer::Flatten => cot.clone().reshaped(x.shape().to_vec()),
            Layer::Dropout { .. } => Ok(cot.clone()),
            Layer::Softmax => softmax_vjp(x, cot),
        }
    }

    /// Training-mode backward pass: input cotangent plus parameter
    /// gradients for layers that have parameters. `mask` must be the mask
    /// returned by [`Layer::forward_train`] for dropout layers.
    pub fn backward_train(
        &self,
        x: &Tensor,
        mask: Option<&Vec<f64>>,
        cot: &Tensor,
    ) -> Result<(Tensor, Option<LayerGrads>)> {
        match self {
            Layer::Dense { weight, .. } => {
                let dx = dense_vjp_input(weight, cot, x)?;
                let n_in = x.len();
                let n_out = cot.len();
                let mut dw = vec![0.0; n_out * n_in];
                for o in 0..n_out {
                    let g = cot.data()[o];
                    let row = &mut dw[o * n_in..(o + 1) * n_in];
                    for (wi, xi) in row.iter_mut().zip(x.data()) {
                        *wi = g * xi;
                    }
                }
                Ok((
                    dx,
                    Some(LayerGrads {
                        weight: Tensor::new(vec![n_out, n_in], dw)?,
                        bias: cot.data().to_vec(),
                    }),
                ))
            }
            Layer::Conv2d { weight, .. } => conv_backward(weight, x, cot),
            Layer::Dropout { .. } => {
                let mask = mask.ok_or_else(|| {
                    Error::Numeric("dropout backward called without its forward mask".into())
                })?;
                let data = cot.data().iter().zip(mask).map(|(g, m)| g * m).collect();
                Ok((Tensor::new(x.shape().to_vec(), data)?, None))
            }
            _ => Ok((self.vjp_input(x, cot)?, None)),
        }
    }

    /// Mutable parameter access for the optimiser; `None` for layers
    /// without parameters.
    pub(crate) fn params_mut(&mut self) -> Option<(&mut Tensor, &mut Vec<f64>)> {
        match self {
            Layer::Dense { weight, bias } | Layer::Conv2d { weight, bias } => Some((weight, bias)),
            _ => None,
        }
    }

    /// Short lowercase tag used in messages and archives.
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense { .. } => "dense",
            Layer::Relu => "relu",
            Layer::Conv2d { .. } => "conv2d",
            Layer::MaxPool2x2 => "maxpool2x2",
            Layer::Flatten => "flatten",
            Layer::Dropout { .. } => "dropout",
            Layer::Softmax => "softmax",
        }
    }
}

fn dense_forward(weight: &Tensor, bias: &[f64], x: &Tensor) -> Result<Tensor> {
    let (n_out, n_in) = (weight.shape()[0], weight.shape()[1]);
    if x.shape() != [n_in] {
        return Err(Error::Shape {
            expected: vec![n_in],
            actual: x.shape().to_vec(),
        });
    }
    let w = ArrayView2::from_shape((n_out, n_in), weight.data()).expect("weight is contiguous");
    let xv = ArrayView1::from(x.data());
    let mut out = Array1::from_vec(bias.to_vec());
    general_mat_vec_mul(1.0, &w, &xv, 1.0, &mut out);
    Tensor::new(vec![n_out], out.into_raw_vec_and_offset().0)
}

fn dense_vjp_input(weight: &Tensor, cot: &Tensor, x: &Tensor) -> Result<Tensor> {
    let (n_out, n_in) = (weight.shape()[0], weight.shape()[1]);
    if cot.shape() != [n_out] {
        return Err(Error::Shape {
            expected: vec![n_out],
            actual: cot.shape().to_vec(),
        });
    }
    let w = ArrayView2::from_shape((n_out, n_in), weight.data()).expect("weight is contiguous");
    let g = ArrayView1::from(cot.data());
    let mut dx = Array1::zeros(n_in);
    general_mat_vec_mul(1.0, &w.t(), &g, 0.0, &mut dx);
    Tensor::new(x.shape().to_vec(), dx.into_raw_vec_and_offset().0)
}

/// Lowers the receptive fields of `x` into a `[c*k*k, oh*ow]` matrix so
/// convolution becomes one GEMM.
fn im2col(x: &Tensor, k: usize, oh: usize, ow: usize) -> Array2<f64> {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    debug_assert_eq!((h - k + 1, w - k + 1), (oh, ow));
    let mut cols = Array2::zeros((c * k * k, oh * ow));
    let xd = x.data();
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let mut dst = cols.row_mut(row);
                let dst = dst.as_slice_mut().expect("row of standard-layout array");
                for oy in 0..oh {
                    let src = (ci * h + oy + ky) * w + kx;
                    dst[oy * ow..(oy + 1) * ow].copy_from_slice(&xd[src..src + ow]);
                }
            }
        }
    }
    cols
}

/// Scatter-adds a `[c*k*k, oh*ow]` cotangent back onto the input image.
fn col2im(dcols: &Array2<f64>, c: usize, h: usize, w: usize, k: usize, oh: usize, ow: usize) -> Vec<f64> {
    let mut dx = vec![0.0; c * h * w];
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = dcols.row((ci * k + ky) * k + kx);
                let row = row.as_slice().expect("row of standard-layout array");
                for oy in 0..oh {
                    let dst = (ci * h + oy + ky) * w + kx;
                    let src = &row[oy * ow..(oy + 1) * ow];
                    for (d, s) in dx[dst..dst + ow].iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
        }
    }
    dx
}

fn conv_dims(weight: &Tensor, x: &Tensor) -> Result<(usize, usize, usize, usize, usize, usize)> {
    let (f, c, k) = (weight.shape()[0], weight.shape()[1], weight.shape()[2]);
    if x.shape().len() != 3 || x.shape()[0] != c || x.shape()[1] < k || x.shape()[2] < k {
        return Err(Error::Shape {
            expected: vec![c, k, k],
            actual: x.shape().to_vec(),
        });
    }
    let (h, w) = (x.shape()[1], x.shape()[2]);
    Ok((f, c, k, h, w, 0))
}

fn conv_forward(weight: &Tensor, bias: &[f64], x: &Tensor) -> Result<Tensor> {
    let (f, c, k, h, w, _) = conv_dims(weight, x)?;
    let (oh, ow) = (h - k + 1, w - k + 1);
    let cols = im2col(x, k, oh, ow);
    let wmat =
        ArrayView2::from_shape((f, c * k * k), weight.data()).expect("weight is contiguous");
    let mut out = Array2::zeros((f, oh * ow));
    general_mat_mul(1.0, &wmat, &cols.view(), 0.0, &mut out);
    let mut data = out.into_raw_vec_and_offset().0;
    for fi in 0..f {
        let b = bias[fi];
        for v in &mut data[fi * oh * ow..(fi + 1) * oh * ow] {
            *v += b;
        }
    }
    Tensor::new(vec![f, oh, ow], data)
}

fn conv_vjp_input(weight: &Tensor, x: &Tensor, cot: &Tensor) -> Result<Tensor> {
    let (f, c, k, h, w, _) = conv_dims(weight, x)?;
    let (oh, ow) = (h - k + 1, w - k + 1);
    if cot.shape() != [f, oh, ow] {
        return Err(Error::Shape {
            expected: vec![f, oh, ow],
            actual: cot.shape().to_vec(),
        });
    }
    let wmat =
        ArrayView2::from_shape((f, c * k * k), weight.data()).expect("weight is contiguous");
    let gmat = ArrayView2::from_shape((f, oh * ow), cot.data()).expect("cot is contiguous");
    let mut dcols = Array2::zeros((c * k * k, oh * ow));
    general_mat_mul(1.0, &wmat.t(), &gmat, 0.0, &mut dcols);
    Tensor::new(vec![c, h, w], col2im(&dcols, c, h, w, k, oh, ow))
}

fn conv_backward(weight: &Tensor, x: &Tensor, cot: &Tensor) -> Result<(Tensor, Option<LayerGrads>)> {
    let dx = conv_vjp_input(weight, x, cot)?;
    let (f, c, k, h, w, _) = conv_dims(weight, x)?;
    let (oh, ow) = (h - k + 1, w - k + 1);
    let cols = im2col(x, k, oh, ow);
    let gmat = ArrayView2::from_shape((f, oh * ow), cot.data()).expect("cot is contiguous");
    let mut dw = Array2::zeros((f, c * k * k));
    general_mat_mul(1.0, &gmat, &cols.t(), 0.0, &mut dw);
    let mut bias = vec![0.0; f];
    for (fi, b) in bias.iter_mut().enumerate() {
        *b = gmat.row(fi).sum();
    }
    Ok((
        dx,
        Some(LayerGrads {
            weight: Tensor::new(vec![f, c, k, k], dw.into_raw_vec_and_offset().0)?,
            bias,
        }),
    ))
}

fn maxpool_forward(x: &Tensor) -> Result<Tensor> {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (oh, ow) = (h / 2, w / 2);
    let xd = x.data();
    let mut out = vec![0.0; c * oh * ow];
    for ci in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let base = (ci * h + 2 * oy) * w + 2 * ox;
                let mut best = xd[base];
                for &off in &[1, w, w + 1] {
                    if xd[base + off] > best {
                        best = xd[base + off];
                    }
                }
                out[(ci * oh + oy) * ow + ox] = best;
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out)
}

fn maxpool_vjp(x: &Tensor, cot: &Tensor) -> Result<Tensor> {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (oh, ow) = (h / 2, w / 2);
    if cot.shape() != [c, oh, ow] {
        return Err(Error::Shape {
            expected: vec![c, oh, ow],
            actual: cot.shape().to_vec(),
        });
    }
    let xd = x.data();
    let mut dx = vec![0.0; xd.len()];
    for ci in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let base = (ci * h + 2 * oy) * w + 2 * ox;
                // First maximum in scan order (0,0),(0,1),(1,0),(1,1).
                let mut arg = base;
                let mut best = xd[base];
                for &off in &[1, w, w + 1] {
                    if xd[base + off] > best {
                        best = xd[base + off];
                        arg = base + off;
                    }
                }
                dx[arg] += cot.data()[(ci * oh + oy) * ow + ox];
            }
        }
    }
    Tensor::new(vec![c, h, w], dx)
}

fn softmax_forward(x: &Tensor) -> Result<Tensor> {
    let m = x.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.data().iter().map(|&v| (v - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Tensor::new(x.shape().to_vec(), exps.iter().map(|e| e / sum).collect())
}

fn softmax_vjp(x: &Tensor, cot: &Tensor) -> Result<Tensor> {
    let y = softmax_forward(x)?;
    let dot: f64 = y.data().iter().zip(cot.data()).map(|(a, b)| a * b).sum();
    let data = y
        .data()
        .iter()
        .zip(cot.data())
        .map(|(&yi, &gi)| yi * (gi - dot))
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn dense_matches_manual_affine() {
        let layer = Layer::Dense {
            weight: Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap(),
            bias: vec![0.5, -0.5],
        };
        let x = Tensor::from_vec(vec![1.0, 0.0, -1.0]);
        let y = layer.forward(&x).unwrap();
        assert_eq!(y.data(), &[1.0 - 3.0 + 0.5, 4.0 - 6.0 - 0.5]);
    }

    #[test]
    fn conv_matches_naive_cross_correlation() {
        let mut r = rng();
        let layer = Layer::build(
            &LayerSpec::Conv2d { filters: 2, kernel: 3 },
            &[2, 5, 4],
            &mut r,
        )
        .unwrap();
        let x = Tensor::new(
            vec![2, 5, 4],
            (0..40).map(|i| (i as f64 * 0.11).sin()).collect(),
        )
        .unwrap();
        let y = layer.forward(&x).unwrap();
        assert_eq!(y.shape(), &[2, 3, 2]);

        let (weight, bias) = match &layer {
            Layer::Conv2d { weight, bias } => (weight, bias),
            _ => unreachable!(),
        };
        for f in 0..2 {
            for oy in 0..3 {
                for ox in 0..2 {
                    let mut acc = bias[f];
                    for c in 0..2 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let wv = weight.data()[((f * 2 + c) * 3 + ky) * 3 + kx];
                                let xv = x.data()[(c * 5 + oy + ky) * 4 + ox + kx];
                                acc += wv * xv;
                            }
                        }
                    }
                    let got = y.data()[(f * 3 + oy) * 2 + ox];
                    assert!((got - acc).abs() < 1e-12, "({f},{oy},{ox}): {got} vs {acc}");
                }
            }
        }
    }

    #[test]
    fn maxpool_takes_first_max_on_ties() {
        let x = Tensor::new(vec![1, 2, 2], vec![7.0, 7.0, 7.0, 7.0]).unwrap();
        let cot = Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap();
        let dx = Layer::MaxPool2x2.vjp_input(&x, &cot).unwrap();
        assert_eq!(dx.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn maxpool_floors_odd_extents() {
        let x = Tensor::new(vec![1, 3, 5], (0..15).map(f64::from).collect()).unwrap();
        let y = Layer::MaxPool2x2.forward(&x).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2]);
        assert_eq!(y.data(), &[6.0, 8.0]);
    }

    #[test]
    fn softmax_is_shift_invariant_and_normalised() {
        let x = Tensor::from_vec(vec![800.0, 801.0, 799.0]);
        let y = Layer::Softmax.forward(&x).unwrap();
        let sum: f64 = y.data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(y.is_finite());
        let shifted = Tensor::from_vec(vec![0.0, 1.0, -1.0]);
        let y2 = Layer::Softmax.forward(&shifted).unwrap();
        for (a, b) in y.data().iter().zip(y2.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dropout_scales_surviving_units() {
        let layer = Layer::Dropout { p: 0.5 };
        let x = Tensor::from_vec(vec![1.0; 1000]);
        let mut r = rng();
        let (y, mask) = layer.forward_train(&x, &mut r).unwrap();
        let mask = mask.unwrap();
        let kept = mask.iter().filter(|&&m| m > 0.0).count();
        assert!(kept > 400 && kept < 600, "kept {kept} of 1000 at p=0.5");
        for (v, m) in y.data().iter().zip(&mask) {
            assert!(*v == 0.0 && *m == 0.0 || (*v - 2.0).abs() < 1e-12 && (*m - 2.0).abs() < 1e-12);
        }
        // Evaluation mode is the identity.
        let eval = layer.forward(&x).unwrap();
        assert_eq!(eval.data(), x.data());
    }
}
