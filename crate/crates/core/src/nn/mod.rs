//! Small feed-forward networks in `f64`: dense/conv layers, exact input
//! VJPs for the attack, and SGD-with-momentum training.

mod layer;
mod network;
mod tensor;
mod train;

pub use layer::{Layer, LayerGrads, LayerSpec};
pub use network::Network;
pub use tensor::Tensor;
pub use train::{train_sgd, TrainConfig, TrainReport};

use crate::error::Result;

/// Published MNIST architecture: two 32-filter and two 64-filter conv
/// blocks with 2x2 pooling, then two 200-unit dense layers and a softmax
/// head over 10 classes.
pub fn mnist_paper_specs(dropout: f64) -> Vec<LayerSpec> {
    conv_dense_specs(&[32, 32], &[64, 64], &[200, 200], 10, dropout)
}

/// Scaled-down MNIST-shaped architecture for desk-size experiments:
/// 16/16 and 32/32 conv blocks with 100-unit dense layers.
pub fn mnist_desk_specs(dropout: f64) -> Vec<LayerSpec> {
    conv_dense_specs(&[16, 16], &[32, 32], &[100, 100], 10, dropout)
}

/// Published CIFAR-10 architecture: 64/64 and 128/128 conv blocks with
/// 256-unit dense layers.
pub fn cifar_paper_specs(dropout: f64) -> Vec<LayerSpec> {
    conv_dense_specs(&[64, 64], &[128, 128], &[256, 256], 10, dropout)
}

/// Two conv blocks (3x3 kernels, ReLU, 2x2 max-pool after each block),
/// flatten, ReLU dense layers with optional dropout, softmax head.
pub fn conv_dense_specs(
    block1: &[usize],
    block2: &[usize],
    dense: &[usize],
    classes: usize,
    dropout: f64,
) -> Vec<LayerSpec> {
    let mut specs = Vec::new();
    for &f in block1 {
        specs.push(LayerSpec::Conv2d { filters: f, kernel: 3 });
        specs.push(LayerSpec::Relu);
    }
    specs.push(LayerSpec::MaxPool2x2);
    for &f in block2 {
        specs.push(LayerSpec::Conv2d { filters: f, kernel: 3 });
        specs.push(LayerSpec::Relu);
    }
    specs.push(LayerSpec::MaxPool2x2);
    specs.push(LayerSpec::Flatten);
    for &u in dense {
        specs.push(LayerSpec::Dense { units: u });
        specs.push(LayerSpec::Relu);
        if dropout > 0.0 {
            specs.push(LayerSpec::Dropout { p: dropout });
        }
    }
    specs.push(LayerSpec::Dense { units: classes });
    specs.push(LayerSpec::Softmax);
    specs
}

/// Builds the desk-scale MNIST-shaped network for 28x28 single-channel
/// inputs with the given weight seed.
pub fn mnist_desk_network(dropout: f64, seed: u64) -> Result<Network> {
    Network::new(vec![1, 28, 28], &mnist_desk_specs(dropout), seed)
}
