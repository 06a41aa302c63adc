//! Fully connected layer: `y = x W^T + b`, with an optional fused ReLU.

use super::LayerError;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    None,
    Relu,
}

#[derive(Debug, Clone)]
pub struct DenseParams<F: Scalar> {
    /// `[out, in]`
    pub weight: Tensor<F>,
    /// `[out]`
    pub bias: Tensor<F>,
}

impl<F: Scalar> DenseParams<F> {
    pub fn new(weight: Tensor<F>, bias: Tensor<F>) -> Result<Self, LayerError> {
        if weight.rank() != 2 || bias.rank() != 1 || bias.shape()[0] != weight.shape()[0] {
            return Err(LayerError::ShapeMismatch(format!(
                "dense weight {:?} / bias {:?}",
                weight.shape(),
                bias.shape()
            )));
        }
        Ok(Self { weight, bias })
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

fn check_input<F: Scalar>(x: &Tensor<F>, p: &DenseParams<F>) -> Result<(usize, usize, usize), LayerError> {
    if x.rank() != 2 {
        return Err(LayerError::ShapeMismatch(format!(
            "dense input must be rank 2, got {:?}",
            x.shape()
        )));
    }
    let (n, d_in) = (x.shape()[0], x.shape()[1]);
    if d_in != p.in_features() {
        return Err(LayerError::ShapeMismatch(format!(
            "dense input features {} do not match weight {}",
            d_in,
            p.in_features()
        )));
    }
    Ok((n, d_in, p.out_features()))
}

pub fn dense_forward<F: Scalar>(
    x: &Tensor<F>,
    p: &DenseParams<F>,
    activation: Activation,
) -> Result<Tensor<F>, LayerError> {
    let (n, d_in, d_out) = check_input(x, p)?;
    let xs = x.data();
    let ws = p.weight.data();
    let bs = p.bias.data();
    let mut out = Tensor::zeros(&[n, d_out]);
    let od = out.data_mut();
    for i in 0..n {
        for o in 0..d_out {
            let mut acc = bs[o];
            let wrow = &ws[o * d_in..(o + 1) * d_in];
            let xrow = &xs[i * d_in..(i + 1) * d_in];
            for (wv, xv) in wrow.iter().zip(xrow) {
                acc = acc + *wv * *xv;
            }
            od[i * d_out + o] = if activation == Activation::Relu && acc < F::zero() {
                F::zero()
            } else {
                acc
            };
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct DenseGrads<F: Scalar> {
    pub input: Tensor<F>,
    pub weight: Tensor<F>,
    pub bias: Tensor<F>,
}

/// Backward pass. `out` must be the forward output (its sign carries the
/// ReLU mask; the gradient at exactly zero is zero).
pub fn dense_backward<F: Scalar>(
    x: &Tensor<F>,
    p: &DenseParams<F>,
    activation: Activation,
    out: &Tensor<F>,
    grad_out: &Tensor<F>,
) -> Result<DenseGrads<F>, LayerError> {
    let (n, d_in, d_out) = check_input(x, p)?;
    if grad_out.shape() != [n, d_out] || out.shape() != [n, d_out] {
        return Err(LayerError::ShapeMismatch(format!(
            "dense backward expects [{}, {}] grads, got {:?}",
            n,
            d_out,
            grad_out.shape()
        )));
    }
    // Fold the ReLU mask into the upstream gradient once.
    let mut dz = grad_out.clone();
    if activation == Activation::Relu {
        let ov = out.data();
        for (g, &o) in dz.data_mut().iter_mut().zip(ov) {
            if o <= F::zero() {
                *g = F::zero();
            }
        }
    }
    let dzs = dz.data();
    let xs = x.data();
    let ws = p.weight.data();

    let mut grad_bias = Tensor::zeros(&[d_out]);
    let gb = grad_bias.data_mut();
    for i in 0..n {
        for o in 0..d_out {
            gb[o] = gb[o] + dzs[i * d_out + o];
        }
    }

    let mut grad_weight = Tensor::zeros(&[d_out, d_in]);
    let gw = grad_weight.data_mut();
    for i in 0..n {
        for o in 0..d_out {
            let g = dzs[i * d_out + o];
            if g == F::zero() {
                continue;
            }
            let xrow = &xs[i * d_in..(i + 1) * d_in];
            let wrow = &mut gw[o * d_in..(o + 1) * d_in];
            for (w, &xv) in wrow.iter_mut().zip(xrow) {
                *w = *w + g * xv;
            }
        }
    }

    let mut grad_input = Tensor::zeros(&[n, d_in]);
    let gx = grad_input.data_mut();
    for i in 0..n {
        for o in 0..d_out {
            let g = dzs[i * d_out + o];
            if g == F::zero() {
                continue;
            }
            let wrow = &ws[o * d_in..(o + 1) * d_in];
            let xrow = &mut gx[i * d_in..(i + 1) * d_in];
            for (xg, &wv) in xrow.iter_mut().zip(wrow) {
                *xg = *xg + g * wv;
            }
        }
    }

    Ok(DenseGrads {
        input: grad_input,
        weight: grad_weight,
        bias: grad_bias,
    })
}
