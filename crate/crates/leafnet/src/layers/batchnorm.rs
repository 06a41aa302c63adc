//! Per-channel batch normalization over NCHW maps.
//!
//! Train mode normalizes with biased batch statistics (divide by m) and
//! folds them into the running estimates as
//! `running <- (1 - momentum) * running + momentum * batch`. Eval mode uses
//! the running estimates only. Per-channel statistic sums are accumulated in
//! f64 regardless of the tensor element type, in a fixed (n, h, w) order.

use super::LayerError;
use crate::tensor::{Scalar, Tensor};
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct BatchNormParams<F: Scalar> {
    pub gamma: Tensor<F>,
    pub beta: Tensor<F>,
    pub running_mean: Tensor<F>,
    pub running_var: Tensor<F>,
    pub momentum: F,
    pub eps: F,
}

impl<F: Scalar> BatchNormParams<F> {
    /// Fresh parameters: gamma 1, beta 0, running mean 0, running var 1.
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::filled(&[channels], F::one()),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], F::one()),
            momentum: F::from_f64(0.1),
            eps: F::from_f64(1e-5),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn param_count(&self) -> usize {
        self.gamma.len() + self.beta.len()
    }
}

/// Values cached by the train-mode forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache<F: Scalar> {
    pub x_hat: Tensor<F>,
    pub inv_std: Vec<F>,
}

fn check_input<F: Scalar>(x: &Tensor<F>, p: &BatchNormParams<F>) -> Result<(usize, usize, usize), LayerError> {
    if x.rank() != 4 {
        return Err(LayerError::ShapeMismatch(format!(
            "batchnorm input must be rank 4 (NCHW), got {:?}",
            x.shape()
        )));
    }
    let c = x.shape()[1];
    if c != p.channels() {
        return Err(LayerError::ShapeMismatch(format!(
            "input channels {} do not match batchnorm channels {}",
            c,
            p.channels()
        )));
    }
    Ok((x.shape()[0], c, x.shape()[2] * x.shape()[3]))
}

/// Train-mode forward. Updates `running_mean` / `running_var` in place and
/// returns the normalized output plus the cache the backward pass needs.
pub fn batchnorm2d_train<F: Scalar>(
    x: &Tensor<F>,
    p: &mut BatchNormParams<F>,
) -> Result<(Tensor<F>, BnCache<F>), LayerError> {
    let (n, c, plane) = check_input(x, p)?;
    let m = n * plane;
    if m < 2 {
        return Err(LayerError::BatchTooSmall(m));
    }
    let xs = x.data();
    let mut mean = vec![0.0f64; c];
    let mut var = vec![0.0f64; c];
    for ch in 0..c {
        let mut acc = 0.0f64;
        for nn in 0..n {
            let base = (nn * c + ch) * plane;
            acc += crate::kernels::sum_as_f64(&xs[base..base + plane]);
        }
        let mu = acc / m as f64;
        let mut vacc = 0.0f64;
        for nn in 0..n {
            let base = (nn * c + ch) * plane;
            vacc += crate::kernels::sum_sq_dev_as_f64(&xs[base..base + plane], mu);
        }
        mean[ch] = mu;
        var[ch] = vacc / m as f64;
    }

    let momentum = p.momentum.as_f64();
    for ch in 0..c {
        let rm = p.running_mean.data()[ch].as_f64();
        let rv = p.running_var.data()[ch].as_f64();
        p.running_mean.data_mut()[ch] = F::from_f64((1.0 - momentum) * rm + momentum * mean[ch]);
        p.running_var.data_mut()[ch] = F::from_f64((1.0 - momentum) * rv + momentum * var[ch]);
    }

    let eps = p.eps.as_f64();
    let inv_std: Vec<F> = var.iter().map(|&v| F::from_f64(1.0 / (v + eps).sqrt())).collect();
    let mean_f: Vec<F> = mean.iter().map(|&v| F::from_f64(v)).collect();

    let mut x_hat = Tensor::zeros(x.shape());
    let mut out = Tensor::zeros(x.shape());
    let gamma = p.gamma.data();
    let beta = p.beta.data();
    let xh = x_hat.data_mut();
    out.data_mut()
        .par_chunks_mut(plane)
        .zip(xh.par_chunks_mut(plane))
        .enumerate()
        .for_each(|(idx, (o_plane, h_plane))| {
            let ch = idx % c;
            let base = idx * plane;
            for i in 0..plane {
                let hat = (xs[base + i] - mean_f[ch]) * inv_std[ch];
                h_plane[i] = hat;
                o_plane[i] = gamma[ch] * hat + beta[ch];
            }
        });

    Ok((out, BnCache { x_hat, inv_std }))
}

/// Eval-mode forward using running statistics only.
pub fn batchnorm2d_eval<F: Scalar>(x: &Tensor<F>, p: &BatchNormParams<F>) -> Result<Tensor<F>, LayerError> {
    let (_, c, plane) = check_input(x, p)?;
    let xs = x.data();
    let gamma = p.gamma.data();
    let beta = p.beta.data();
    let inv_std: Vec<F> = p
        .running_var
        .data()
        .iter()
        .map(|&v| F::one() / (v + p.eps).sqrt())
        .collect();
    let mean = p.running_mean.data();
    let mut out = Tensor::zeros(x.shape());
    out.data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(idx, o_plane)| {
            let ch = idx % c;
            let base = idx * plane;
            for i in 0..plane {
                o_plane[i] = gamma[ch] * ((xs[base + i] - mean[ch]) * inv_std[ch]) + beta[ch];
            }
        });
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct BnGrads<F: Scalar> {
    pub input: Tensor<F>,
    pub gamma: Tensor<F>,
    pub beta: Tensor<F>,
}

/// Backward through the train-mode normalization (batch statistics).
pub fn batchnorm2d_backward<F: Scalar>(
    p: &BatchNormParams<F>,
    cache: &BnCache<F>,
    grad_out: &Tensor<F>,
) -> Result<BnGrads<F>, LayerError> {
    if grad_out.shape() != cache.x_hat.shape() {
        return Err(LayerError::ShapeMismatch(format!(
            "grad_out {:?} does not match cached activation {:?}",
            grad_out.shape(),
            cache.x_hat.shape()
        )));
    }
    let shape = cache.x_hat.shape();
    let (n, c, plane) = (shape[0], shape[1], shape[2] * shape[3]);
    let m = (n * plane) as f64;
    let gs = grad_out.data();
    let xh = cache.x_hat.data();

    // Per-channel sums of dy and dy * x_hat, f64 accumulation in fixed order.
    let mut sum_dy = vec![0.0f64; c];
    let mut sum_dy_xhat = vec![0.0f64; c];
    for ch in 0..c {
        let mut a = 0.0f64;
        let mut b = 0.0f64;
        for nn in 0..n {
            let base = (nn * c + ch) * plane;
            a += crate::kernels::sum_as_f64(&gs[base..base + plane]);
            b += crate::kernels::dot_as_f64(&gs[base..base + plane], &xh[base..base + plane]);
        }
        sum_dy[ch] = a;
        sum_dy_xhat[ch] = b;
    }

    let grad_beta = Tensor::new(vec![c], sum_dy.iter().map(|&v| F::from_f64(v)).collect())?;
    let grad_gamma = Tensor::new(vec![c], sum_dy_xhat.iter().map(|&v| F::from_f64(v)).collect())?;

    let mean_dy: Vec<F> = sum_dy.iter().map(|&v| F::from_f64(v / m)).collect();
    let mean_dy_xhat: Vec<F> = sum_dy_xhat.iter().map(|&v| F::from_f64(v / m)).collect();
    let gamma = p.gamma.data();
    let inv_std = &cache.inv_std;

    let mut grad_input = Tensor::zeros(shape);
    grad_input
        .data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(idx, gx)| {
            let ch = idx % c;
            let scale = gamma[ch] * inv_std[ch];
            let base = idx * plane;
            for i in 0..plane {
                gx[i] = scale * (gs[base + i] - mean_dy[ch] - xh[base + i] * mean_dy_xhat[ch]);
            }
        });

    Ok(BnGrads {
        input: grad_input,
        gamma: grad_gamma,
        beta: grad_beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_input_yields_beta() {
        let x = Tensor::<f32>::filled(&[2, 3, 2, 2], 5.0);
        let mut p = BatchNormParams::new(3);
        p.beta = Tensor::from_f64_slice(&[3], &[0.5, -1.0, 2.0]).unwrap();
        let (y, _) = batchnorm2d_train(&x, &mut p).unwrap();
        for ch in 0..3 {
            for nn in 0..2 {
                for i in 0..4 {
                    let v = y.data()[(nn * 3 + ch) * 4 + i];
                    assert!((v - p.beta.data()[ch]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn eval_identity_statistics() {
        let x = Tensor::<f32>::from_f64_slice(&[1, 1, 2, 2], &[0.3, -0.7, 1.5, 0.0]).unwrap();
        let p = BatchNormParams::new(1);
        let y = batchnorm2d_eval(&x, &p).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn train_requires_two_values() {
        let x = Tensor::<f32>::filled(&[1, 2, 1, 1], 1.0);
        let mut p = BatchNormParams::new(2);
        assert!(matches!(batchnorm2d_train(&x, &mut p), Err(LayerError::BatchTooSmall(1))));
    }

    #[test]
    fn train_output_is_normalized() {
        let mut rng = crate::rng::RngStream::new(4, 4);
        let x = Tensor::<f64>::from_f64_slice(&[4, 2, 3, 3], &rng.normal_vec(4 * 2 * 9)).unwrap();
        let mut p = BatchNormParams::<f64>::new(2);
        let (y, _) = batchnorm2d_train(&x, &mut p).unwrap();
        // gamma=1, beta=0: per-channel batch mean ~0 and variance ~1.
        for ch in 0..2 {
            let mut mean = 0.0;
            let mut var = 0.0;
            let m = 4 * 9;
            for nn in 0..4 {
                for i in 0..9 {
                    mean += y.data()[(nn * 2 + ch) * 9 + i];
                }
            }
            mean /= m as f64;
            for nn in 0..4 {
                for i in 0..9 {
                    let d = y.data()[(nn * 2 + ch) * 9 + i] - mean;
                    var += d * d;
                }
            }
            var /= m as f64;
            assert!(mean.abs() < 1e-5, "mean {mean}");
            assert!((var - 1.0).abs() < 1e-4, "var {var}");
        }
    }

    #[test]
    fn running_stats_update_rule() {
        let x = Tensor::<f64>::from_f64_slice(&[1, 1, 1, 2], &[1.0, 3.0]).unwrap();
        let mut p = BatchNormParams::<f64>::new(1);
        p.momentum = 0.5;
        batchnorm2d_train(&x, &mut p).unwrap();
        // batch mean 2, biased var 1; running starts at (0, 1).
        assert!((p.running_mean.data()[0] - 1.0).abs() < 1e-12);
        assert!((p.running_var.data()[0] - 1.0).abs() < 1e-12);
    }
}
