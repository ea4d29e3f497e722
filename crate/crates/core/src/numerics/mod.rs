//! Dense tensors and reverse-mode differentiation over a fixed primitive set.
//!
//! Networks are expressed as a [`NetworkGraph`]: an ordered list of primitive
//! applications over named parameters and input placeholders. The
//! free-standing functions here evaluate single primitives outside a graph.

mod gradcheck;
mod graph;
mod init;
pub(crate) mod kernels;
mod tensor;

pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use graph::{GradientMap, Gradients, KinkSignature, Mode, NetworkGraph, NodeId, NormState, Op};
pub use init::glorot_uniform;
pub use kernels::{PoolMode, BATCHNORM_EPS, BATCHNORM_MOMENTUM};
pub use tensor::Tensor;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

fn unbatch(shape: Vec<usize>, was_batched: bool) -> Vec<usize> {
    if was_batched {
        shape
    } else {
        shape[1..].to_vec()
    }
}

/// Valid (stride 1, unpadded) convolution. `input` is `[c,h,w]` or
/// `[n,c,h,w]`, `kernel` is `[out,c,kh,kw]`, `bias` has one entry per output
/// channel.
pub fn conv2d(input: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<Tensor> {
    if input.rank() != 3 && input.rank() != 4 {
        return Err(Error::shape("conv2d", format!("input must be [c,h,w] or [n,c,h,w], got {:?}", input.shape())));
    }
    let xs = kernels::batched4(input);
    let d = kernels::conv_dims("conv2d", &xs, kernel.shape(), bias.shape())?;
    let y = kernels::conv2d_forward(d, input.data(), kernel.data(), bias.data());
    let shape = unbatch(vec![d.n, d.o, d.out_h(), d.out_w()], input.rank() == 4);
    Tensor::new(shape, y)
}

/// `k × k` max pooling with stride `k`; extents must be divisible by `k`.
pub fn maxpool2d(input: &Tensor, k: usize) -> Result<Tensor> {
    if input.rank() != 3 && input.rank() != 4 {
        return Err(Error::shape("maxpool2d", format!("input must be [c,h,w] or [n,c,h,w], got {:?}", input.shape())));
    }
    let xs = kernels::batched4(input);
    let d = kernels::pool_dims("maxpool2d", &xs, k, PoolMode::Exact)?;
    let (y, _, _) = kernels::maxpool_forward(d, input.data());
    let shape = unbatch(vec![xs[0], xs[1], d.out_h(), d.out_w()], input.rank() == 4);
    Tensor::new(shape, y)
}

/// Training-mode batch normalization of `[batch, features, ...]` with
/// per-feature affine `gamma`, `beta`.
pub fn batchnorm(input: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<Tensor> {
    let d = kernels::norm_dims("batchnorm", input.shape(), gamma.shape(), beta.shape())?;
    if d.n < 2 {
        return Err(Error::shape("batchnorm", "training-mode batchnorm needs a batch of at least 2"));
    }
    let (y, ..) = kernels::batchnorm_train_forward(d, input.data(), gamma.data(), beta.data());
    Tensor::new(input.shape().to_vec(), y)
}

pub fn activation(input: &Tensor, kind: Activation) -> Tensor {
    let f = match kind {
        Activation::Relu => kernels::relu,
        Activation::Sigmoid => kernels::sigmoid,
    };
    Tensor::new(input.shape().to_vec(), input.data().iter().map(|&v| f(v)).collect())
        .expect("relu and sigmoid map finite values to finite values")
}

pub fn sigmoid(v: f64) -> f64 {
    kernels::sigmoid(v)
}

pub fn relu(v: f64) -> f64 {
    kernels::relu(v)
}
