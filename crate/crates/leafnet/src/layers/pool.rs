//! Max pooling (2x2, stride 2) and global average pooling.

use super::LayerError;
use crate::tensor::{Scalar, Tensor};

/// Flat input indices of each window's maximum, needed to route gradients.
#[derive(Debug, Clone)]
pub struct MaxPoolCache {
    pub argmax: Vec<usize>,
    pub input_shape: Vec<usize>,
}

/// 2x2 max pooling with stride 2. Requires even spatial dimensions; ties
/// within a window resolve to the lowest flat index.
pub fn max_pool2x2_forward<F: Scalar>(x: &Tensor<F>) -> Result<(Tensor<F>, MaxPoolCache), LayerError> {
    if x.rank() != 4 {
        return Err(LayerError::ShapeMismatch(format!(
            "pool input must be rank 4, got {:?}",
            x.shape()
        )));
    }
    let [n, c, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    if h % 2 != 0 || w % 2 != 0 {
        return Err(LayerError::ShapeMismatch(format!(
            "max2x2 needs even spatial dims, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let xs = x.data();
    let mut out = Tensor::zeros(&[n, c, oh, ow]);
    let mut argmax = vec![0usize; n * c * oh * ow];
    let od = out.data_mut();
    for plane in 0..n * c {
        let base = plane * h * w;
        let obase = plane * oh * ow;
        for y0 in 0..oh {
            for x0 in 0..ow {
                let i00 = base + (2 * y0) * w + 2 * x0;
                let candidates = [i00, i00 + 1, i00 + w, i00 + w + 1];
                let mut best = candidates[0];
                for &idx in &candidates[1..] {
                    if xs[idx] > xs[best] {
                        best = idx;
                    }
                }
                od[obase + y0 * ow + x0] = xs[best];
                argmax[obase + y0 * ow + x0] = best;
            }
        }
    }
    Ok((
        out,
        MaxPoolCache {
            argmax,
            input_shape: x.shape().to_vec(),
        },
    ))
}

/// Routes each upstream gradient to its window's argmax only.
pub fn max_pool2x2_backward<F: Scalar>(cache: &MaxPoolCache, grad_out: &Tensor<F>) -> Result<Tensor<F>, LayerError> {
    if grad_out.len() != cache.argmax.len() {
        return Err(LayerError::ShapeMismatch(format!(
            "grad_out has {} elements, pool cache expects {}",
            grad_out.len(),
            cache.argmax.len()
        )));
    }
    let mut grad_input = Tensor::zeros(&cache.input_shape);
    let gx = grad_input.data_mut();
    for (g, &idx) in grad_out.data().iter().zip(&cache.argmax) {
        gx[idx] = gx[idx] + *g;
    }
    Ok(grad_input)
}

/// Global average pooling: NCHW -> NC, mean over the spatial plane
/// accumulated in row-major order.
pub fn global_avg_forward<F: Scalar>(x: &Tensor<F>) -> Result<Tensor<F>, LayerError> {
    if x.rank() != 4 {
        return Err(LayerError::ShapeMismatch(format!(
            "pool input must be rank 4, got {:?}",
            x.shape()
        )));
    }
    let [n, c, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let plane = h * w;
    let inv = F::from_f64(1.0 / plane as f64);
    let xs = x.data();
    let mut out = Tensor::zeros(&[n, c]);
    let od = out.data_mut();
    for p in 0..n * c {
        let base = p * plane;
        od[p] = crate::kernels::sum(&xs[base..base + plane]) * inv;
    }
    Ok(out)
}

/// Distributes each upstream gradient uniformly over its spatial plane.
pub fn global_avg_backward<F: Scalar>(grad_out: &Tensor<F>, input_shape: &[usize]) -> Result<Tensor<F>, LayerError> {
    if input_shape.len() != 4 || grad_out.shape() != [input_shape[0], input_shape[1]] {
        return Err(LayerError::ShapeMismatch(format!(
            "grad_out {:?} does not match pooled {:?}",
            grad_out.shape(),
            input_shape
        )));
    }
    let plane = input_shape[2] * input_shape[3];
    let inv = F::from_f64(1.0 / plane as f64);
    let mut grad_input = Tensor::zeros(input_shape);
    let gx = grad_input.data_mut();
    for (p, &g) in grad_out.data().iter().enumerate() {
        let v = g * inv;
        for i in 0..plane {
            gx[p * plane + i] = v;
        }
    }
    Ok(grad_input)
}
