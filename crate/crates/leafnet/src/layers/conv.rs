//! 2-D convolution (cross-correlation convention, no kernel flip) with
//! zero padding, lowered to an im2col buffer so the hot loops run over
//! contiguous rows.
//!
//! Determinism: each forward output element accumulates bias first, then
//! contributions in ascending (channel, kernel-row, kernel-col) order.
//! Weight/bias gradient reductions run over (n, oh, ow) in ascending order
//! with the fixed-lane scheme from the kernels module. Parallelism only
//! partitions independent output elements, so results are bitwise identical
//! for any thread count.

use super::LayerError;
use crate::kernels::{dot, saxpy, sum};
use crate::tensor::{Scalar, Tensor};
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct Conv2dParams<F: Scalar> {
    /// `[c_out, c_in, k_h, k_w]`
    pub weight: Tensor<F>,
    /// `[c_out]`
    pub bias: Tensor<F>,
    pub stride: usize,
    pub padding: usize,
}

impl<F: Scalar> Conv2dParams<F> {
    pub fn new(weight: Tensor<F>, bias: Tensor<F>, stride: usize, padding: usize) -> Result<Self, LayerError> {
        if weight.rank() != 4 {
            return Err(LayerError::ShapeMismatch(format!(
                "conv weight must be rank 4, got {:?}",
                weight.shape()
            )));
        }
        if bias.rank() != 1 || bias.shape()[0] != weight.shape()[0] {
            return Err(LayerError::ShapeMismatch(format!(
                "conv bias {:?} must match c_out {}",
                bias.shape(),
                weight.shape()[0]
            )));
        }
        if stride == 0 {
            return Err(LayerError::ShapeMismatch("stride must be positive".into()));
        }
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Output spatial size: `floor((in + 2*padding - k) / stride) + 1`.
pub fn conv2d_output_size(input: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize, LayerError> {
    let padded = input + 2 * padding;
    if padded < kernel {
        return Err(LayerError::ShapeMismatch(format!(
            "padded input {padded} smaller than kernel {kernel}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

#[derive(Clone, Copy)]
struct ConvDims {
    n: usize,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    k_h: usize,
    k_w: usize,
    out_h: usize,
    out_w: usize,
    stride: usize,
    padding: usize,
}

impl ConvDims {
    fn kk(&self) -> usize {
        self.c_in * self.k_h * self.k_w
    }

    fn out_plane(&self) -> usize {
        self.out_h * self.out_w
    }

    fn in_plane(&self) -> usize {
        self.h * self.w
    }
}

fn check_dims<F: Scalar>(x: &Tensor<F>, p: &Conv2dParams<F>) -> Result<ConvDims, LayerError> {
    if x.rank() != 4 {
        return Err(LayerError::ShapeMismatch(format!(
            "conv input must be rank 4 (NCHW), got {:?}",
            x.shape()
        )));
    }
    let [n, c_in, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let ws = p.weight.shape();
    if ws[1] != c_in {
        return Err(LayerError::ShapeMismatch(format!(
            "input channels {} do not match weight channels {}",
            c_in, ws[1]
        )));
    }
    let out_h = conv2d_output_size(h, ws[2], p.stride, p.padding)?;
    let out_w = conv2d_output_size(w, ws[3], p.stride, p.padding)?;
    Ok(ConvDims {
        n,
        c_in,
        h,
        w,
        c_out: ws[0],
        k_h: ws[2],
        k_w: ws[3],
        out_h,
        out_w,
        stride: p.stride,
        padding: p.padding,
    })
}

/// Output positions whose input index `o*stride + k - padding` lands inside
/// `[0, limit)`: returns the half-open `[lo, hi)` window.
fn valid_window(k: usize, padding: usize, stride: usize, limit: usize, out_limit: usize) -> (usize, usize) {
    let lo = if k >= padding {
        0
    } else {
        (padding - k + stride - 1) / stride
    };
    let sum = limit + padding;
    let hi = if sum > k {
        ((sum - 1 - k) / stride + 1).min(out_limit)
    } else {
        0
    };
    (lo.min(out_limit), hi)
}

/// Unrolls one image into `col` (pre-zeroed, `kk x out_plane` row-major):
/// row `kk = (ci*k_h + kh)*k_w + kw` holds the input values each output
/// position reads through that kernel tap, zero where padding applies.
fn im2col<F: Scalar>(xs: &[F], d: &ConvDims, col: &mut [F]) {
    let p_len = d.out_plane();
    for ci in 0..d.c_in {
        let x_base = ci * d.in_plane();
        for kh in 0..d.k_h {
            let (oh_lo, oh_hi) = valid_window(kh, d.padding, d.stride, d.h, d.out_h);
            for kw in 0..d.k_w {
                let (ow_lo, ow_hi) = valid_window(kw, d.padding, d.stride, d.w, d.out_w);
                if ow_lo >= ow_hi {
                    continue;
                }
                let kk = (ci * d.k_h + kh) * d.k_w + kw;
                let count = ow_hi - ow_lo;
                let iw0 = ow_lo * d.stride + kw - d.padding;
                for oh in oh_lo..oh_hi {
                    let ih = oh * d.stride + kh - d.padding;
                    let x_row = x_base + ih * d.w + iw0;
                    let c_row = kk * p_len + oh * d.out_w + ow_lo;
                    if d.stride == 1 {
                        col[c_row..c_row + count].copy_from_slice(&xs[x_row..x_row + count]);
                    } else {
                        let span = (count - 1) * d.stride + 1;
                        for (c, xv) in col[c_row..c_row + count]
                            .iter_mut()
                            .zip(xs[x_row..x_row + span].iter().step_by(d.stride))
                        {
                            *c = *xv;
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-adds a column gradient back into one image's input gradient.
fn col2im_add<F: Scalar>(colg: &[F], d: &ConvDims, gx: &mut [F]) {
    let p_len = d.out_plane();
    for ci in 0..d.c_in {
        let x_base = ci * d.in_plane();
        for kh in 0..d.k_h {
            let (oh_lo, oh_hi) = valid_window(kh, d.padding, d.stride, d.h, d.out_h);
            for kw in 0..d.k_w {
                let (ow_lo, ow_hi) = valid_window(kw, d.padding, d.stride, d.w, d.out_w);
                if ow_lo >= ow_hi {
                    continue;
                }
                let kk = (ci * d.k_h + kh) * d.k_w + kw;
                let count = ow_hi - ow_lo;
                let iw0 = ow_lo * d.stride + kw - d.padding;
                for oh in oh_lo..oh_hi {
                    let ih = oh * d.stride + kh - d.padding;
                    let x_row = x_base + ih * d.w + iw0;
                    let c_row = kk * p_len + oh * d.out_w + ow_lo;
                    if d.stride == 1 {
                        for (g, c) in gx[x_row..x_row + count].iter_mut().zip(&colg[c_row..c_row + count]) {
                            *g = *g + *c;
                        }
                    } else {
                        let span = (count - 1) * d.stride + 1;
                        for (g, c) in gx[x_row..x_row + span]
                            .iter_mut()
                            .step_by(d.stride)
                            .zip(&colg[c_row..c_row + count])
                        {
                            *g = *g + *c;
                        }
                    }
                }
            }
        }
    }
}

fn batch_im2col<F: Scalar>(xs: &[F], d: &ConvDims) -> Vec<F> {
    let kk = d.kk();
    let p_len = d.out_plane();
    let item = d.c_in * d.in_plane();
    let mut col_all = vec![F::zero(); d.n * kk * p_len];
    col_all
        .par_chunks_mut(kk * p_len)
        .enumerate()
        .for_each(|(n, col)| im2col(&xs[n * item..(n + 1) * item], d, col));
    col_all
}

pub fn conv2d_forward<F: Scalar>(x: &Tensor<F>, p: &Conv2dParams<F>) -> Result<Tensor<F>, LayerError> {
    let d = check_dims(x, p)?;
    let ws = p.weight.data();
    let bs = p.bias.data();
    let kk_tot = d.kk();
    let p_len = d.out_plane();
    let col_all = batch_im2col(x.data(), &d);

    let mut out = Tensor::zeros(&[d.n, d.c_out, d.out_h, d.out_w]);
    out.data_mut()
        .par_chunks_mut(p_len)
        .enumerate()
        .for_each(|(idx, out_plane)| {
            let n = idx / d.c_out;
            let co = idx % d.c_out;
            for v in out_plane.iter_mut() {
                *v = bs[co];
            }
            let col = &col_all[n * kk_tot * p_len..(n + 1) * kk_tot * p_len];
            let wrow = &ws[co * kk_tot..(co + 1) * kk_tot];
            for (kk, &wv) in wrow.iter().enumerate() {
                saxpy(out_plane, &col[kk * p_len..(kk + 1) * p_len], wv);
            }
        });
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ConvGrads<F: Scalar> {
    pub input: Tensor<F>,
    pub weight: Tensor<F>,
    pub bias: Tensor<F>,
}

pub fn conv2d_backward<F: Scalar>(
    x: &Tensor<F>,
    p: &Conv2dParams<F>,
    grad_out: &Tensor<F>,
) -> Result<ConvGrads<F>, LayerError> {
    let d = check_dims(x, p)?;
    let expected = [d.n, d.c_out, d.out_h, d.out_w];
    if grad_out.shape() != expected {
        return Err(LayerError::ShapeMismatch(format!(
            "grad_out {:?} does not match conv output {:?}",
            grad_out.shape(),
            expected
        )));
    }
    let ws = p.weight.data();
    let gs = grad_out.data();
    let kk_tot = d.kk();
    let p_len = d.out_plane();
    let item = d.c_in * d.in_plane();
    let col_all = batch_im2col(x.data(), &d);

    let mut grad_bias = Tensor::zeros(&[d.c_out]);
    grad_bias
        .data_mut()
        .par_iter_mut()
        .enumerate()
        .for_each(|(co, gb)| {
            let mut acc = F::zero();
            for n in 0..d.n {
                let base = (n * d.c_out + co) * p_len;
                acc = acc + sum(&gs[base..base + p_len]);
            }
            *gb = acc;
        });

    let mut grad_weight = Tensor::zeros(p.weight.shape());
    grad_weight
        .data_mut()
        .par_chunks_mut(kk_tot)
        .enumerate()
        .for_each(|(co, slab)| {
            for (kk, gw) in slab.iter_mut().enumerate() {
                let mut acc = F::zero();
                for n in 0..d.n {
                    let g_plane = &gs[(n * d.c_out + co) * p_len..(n * d.c_out + co + 1) * p_len];
                    let c_row = &col_all[(n * kk_tot + kk) * p_len..(n * kk_tot + kk + 1) * p_len];
                    acc = acc + dot(g_plane, c_row);
                }
                *gw = acc;
            }
        });

    let mut grad_input = Tensor::zeros(x.shape());
    grad_input
        .data_mut()
        .par_chunks_mut(item)
        .enumerate()
        .for_each(|(n, gx)| {
            // Column gradient: colg[kk] = sum over co of w[co][kk] * g[co].
            let mut colg = vec![F::zero(); kk_tot * p_len];
            for co in 0..d.c_out {
                let g_plane = &gs[(n * d.c_out + co) * p_len..(n * d.c_out + co + 1) * p_len];
                let wrow = &ws[co * kk_tot..(co + 1) * kk_tot];
                for (kk, &wv) in wrow.iter().enumerate() {
                    saxpy(&mut colg[kk * p_len..(kk + 1) * p_len], g_plane, wv);
                }
            }
            col2im_add(&colg, &d, gx);
        });

    Ok(ConvGrads {
        input: grad_input,
        weight: grad_weight,
        bias: grad_bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones<F: Scalar>(shape: &[usize]) -> Tensor<F> {
        Tensor::filled(shape, F::one())
    }

    #[test]
    fn identity_kernel_passes_input_through() {
        // 1x1 kernel, weight 1, bias 0, stride 1.
        let x = Tensor::<f32>::from_f64_slice(&[1, 1, 2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let p = Conv2dParams::new(ones(&[1, 1, 1, 1]), Tensor::zeros(&[1]), 1, 0).unwrap();
        let y = conv2d_forward(&x, &p).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn all_ones_3x3_sums_to_nine() {
        let x = ones::<f32>(&[1, 1, 3, 3]);
        let p = Conv2dParams::new(ones(&[1, 1, 3, 3]), Tensor::from_f64_slice(&[1], &[0.5]).unwrap(), 1, 0).unwrap();
        let y = conv2d_forward(&x, &p).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data()[0], 9.5);
    }

    #[test]
    fn channel_mismatch_is_error() {
        let x = ones::<f32>(&[1, 2, 4, 4]);
        let p = Conv2dParams::new(ones(&[1, 3, 3, 3]), Tensor::zeros(&[1]), 1, 1).unwrap();
        assert!(matches!(conv2d_forward(&x, &p), Err(LayerError::ShapeMismatch(_))));
    }

    #[test]
    fn same_padding_preserves_spatial_dims() {
        let x = ones::<f32>(&[2, 3, 7, 9]);
        let p = Conv2dParams::new(ones(&[4, 3, 3, 3]), Tensor::zeros(&[4]), 1, 1).unwrap();
        let y = conv2d_forward(&x, &p).unwrap();
        assert_eq!(y.shape(), &[2, 4, 7, 9]);
    }

    #[test]
    fn strided_output_size() {
        assert_eq!(conv2d_output_size(8, 3, 2, 1).unwrap(), 4);
        assert_eq!(conv2d_output_size(64, 3, 1, 1).unwrap(), 64);
        assert!(conv2d_output_size(2, 5, 1, 0).is_err());
    }

    #[test]
    fn forward_matches_naive_reference() {
        // Independent fully-naive implementation with explicit padding.
        let mut rng = crate::rng::RngStream::new(99, 1);
        for &(s, pad) in &[(1usize, 0usize), (1, 1), (2, 1), (2, 0), (3, 2)] {
            let (n, ci, h, w, co, k) = (2, 3, 7, 6, 4, 3);
            let x = Tensor::<f64>::from_f64_slice(&[n, ci, h, w], &rng.uniform_vec(n * ci * h * w)).unwrap();
            let weight =
                Tensor::<f64>::from_f64_slice(&[co, ci, k, k], &rng.uniform_vec(co * ci * k * k)).unwrap();
            let bias = Tensor::<f64>::from_f64_slice(&[co], &rng.uniform_vec(co)).unwrap();
            let params = Conv2dParams::new(weight.clone(), bias.clone(), s, pad).unwrap();
            let y = conv2d_forward(&x, &params).unwrap();

            let oh = (h + 2 * pad - k) / s + 1;
            let ow = (w + 2 * pad - k) / s + 1;
            for nn in 0..n {
                for oc in 0..co {
                    for y0 in 0..oh {
                        for x0 in 0..ow {
                            let mut acc = bias.data()[oc];
                            for ic in 0..ci {
                                for kh in 0..k {
                                    for kw in 0..k {
                                        let ih = (y0 * s + kh) as isize - pad as isize;
                                        let iw = (x0 * s + kw) as isize - pad as isize;
                                        if ih >= 0 && iw >= 0 && (ih as usize) < h && (iw as usize) < w {
                                            let xv =
                                                x.data()[((nn * ci + ic) * h + ih as usize) * w + iw as usize];
                                            let wv = weight.data()[((oc * ci + ic) * k + kh) * k + kw];
                                            acc += wv * xv;
                                        }
                                    }
                                }
                            }
                            let got = y.data()[((nn * co + oc) * oh + y0) * ow + x0];
                            assert!(
                                (got - acc).abs() < 1e-12,
                                "mismatch at {nn},{oc},{y0},{x0} (stride {s}, pad {pad})"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn backward_shapes_and_determinism() {
        let mut rng = crate::rng::RngStream::new(100, 1);
        let x = Tensor::<f32>::from_f64_slice(&[2, 3, 8, 8], &rng.uniform_vec(2 * 3 * 8 * 8)).unwrap();
        let p = Conv2dParams::new(
            Tensor::from_f64_slice(&[4, 3, 3, 3], &rng.uniform_vec(4 * 3 * 9)).unwrap(),
            Tensor::from_f64_slice(&[4], &rng.uniform_vec(4)).unwrap(),
            2,
            1,
        )
        .unwrap();
        let y = conv2d_forward(&x, &p).unwrap();
        let g = Tensor::<f32>::filled(y.shape(), 0.25);
        let a = conv2d_backward(&x, &p, &g).unwrap();
        let b = conv2d_backward(&x, &p, &g).unwrap();
        assert_eq!(a.input.shape(), x.shape());
        assert_eq!(a.weight.shape(), p.weight.shape());
        assert_eq!(a.bias.shape(), p.bias.shape());
        assert_eq!(a.input.data(), b.input.data());
        assert_eq!(a.weight.data(), b.weight.data());
    }
}
