//! Micro-timing for the layer kernels at the shapes the default network
//! actually runs.

use leafnet::layers::*;
use leafnet::{RngStream, Tensor};
use std::time::Instant;

fn t<F: FnMut()>(label: &str, iters: usize, mut f: F) {
    let start = Instant::now();
    for _ in 0..iters {
        f();
    }
    let total = start.elapsed().as_secs_f64();
    println!("{label}: {:.2} ms/iter", 1e3 * total / iters as f64);
}

fn main() {
    let mut rng = RngStream::new(1, 0);
    let n = 32;

    // Stem: 3 -> 16, 64x64, stride 1.
    let x0 = Tensor::<f32>::from_f64_slice(&[n, 3, 64, 64], &rng.uniform_vec(n * 3 * 64 * 64)).unwrap();
    let p0 = Conv2dParams::new(
        Tensor::from_f64_slice(&[16, 3, 3, 3], &rng.uniform_vec(16 * 3 * 9)).unwrap(),
        Tensor::zeros(&[16]),
        1,
        1,
    )
    .unwrap();
    let y0 = conv2d_forward(&x0, &p0).unwrap();
    let g0 = Tensor::<f32>::from_f64_slice(y0.shape(), &rng.uniform_vec(y0.len())).unwrap();
    t("stem fwd  (3->16 s1 64x64)", 5, || {
        conv2d_forward(&x0, &p0).unwrap();
    });
    t("stem bwd", 5, || {
        conv2d_backward(&x0, &p0, &g0).unwrap();
    });

    // Block 1 conv2: 16 -> 16, 32x32, stride 1.
    let x1 = Tensor::<f32>::from_f64_slice(&[n, 16, 32, 32], &rng.uniform_vec(n * 16 * 32 * 32)).unwrap();
    let p1 = Conv2dParams::new(
        Tensor::from_f64_slice(&[16, 16, 3, 3], &rng.uniform_vec(16 * 16 * 9)).unwrap(),
        Tensor::zeros(&[16]),
        1,
        1,
    )
    .unwrap();
    let y1 = conv2d_forward(&x1, &p1).unwrap();
    let g1 = Tensor::<f32>::from_f64_slice(y1.shape(), &rng.uniform_vec(y1.len())).unwrap();
    t("b1 fwd  (16->16 s1 32x32)", 5, || {
        conv2d_forward(&x1, &p1).unwrap();
    });
    t("b1 bwd", 5, || {
        conv2d_backward(&x1, &p1, &g1).unwrap();
    });

    // Block 3 conv2: 64 -> 64, 8x8, stride 1.
    let x3 = Tensor::<f32>::from_f64_slice(&[n, 64, 8, 8], &rng.uniform_vec(n * 64 * 64)).unwrap();
    let p3 = Conv2dParams::new(
        Tensor::from_f64_slice(&[64, 64, 3, 3], &rng.uniform_vec(64 * 64 * 9)).unwrap(),
        Tensor::zeros(&[64]),
        1,
        1,
    )
    .unwrap();
    let y3 = conv2d_forward(&x3, &p3).unwrap();
    let g3 = Tensor::<f32>::from_f64_slice(y3.shape(), &rng.uniform_vec(y3.len())).unwrap();
    t("b3 fwd  (64->64 s1 8x8)", 5, || {
        conv2d_forward(&x3, &p3).unwrap();
    });
    t("b3 bwd", 5, || {
        conv2d_backward(&x3, &p3, &g3).unwrap();
    });

    // Stride-2 conv: 16 -> 16, 64 -> 32.
    let p0s = Conv2dParams::new(
        Tensor::from_f64_slice(&[16, 16, 3, 3], &rng.uniform_vec(16 * 16 * 9)).unwrap(),
        Tensor::zeros(&[16]),
        2,
        1,
    )
    .unwrap();
    let xs2 = Tensor::<f32>::from_f64_slice(&[n, 16, 64, 64], &rng.uniform_vec(n * 16 * 64 * 64)).unwrap();
    let ys2 = conv2d_forward(&xs2, &p0s).unwrap();
    let gs2 = Tensor::<f32>::from_f64_slice(ys2.shape(), &rng.uniform_vec(ys2.len())).unwrap();
    t("b1 fwd  (16->16 s2 64x64)", 5, || {
        conv2d_forward(&xs2, &p0s).unwrap();
    });
    t("b1 bwd (s2)", 5, || {
        conv2d_backward(&xs2, &p0s, &gs2).unwrap();
    });

    // Batchnorm at the stem shape.
    let mut bn = BatchNormParams::<f32>::new(16);
    let xb = Tensor::<f32>::from_f64_slice(&[n, 16, 64, 64], &rng.uniform_vec(n * 16 * 64 * 64)).unwrap();
    t("bn fwd train (16ch 64x64)", 5, || {
        batchnorm2d_train(&xb, &mut bn).unwrap();
    });
    let (_, cache) = batchnorm2d_train(&xb, &mut bn).unwrap();
    let gb = Tensor::<f32>::from_f64_slice(xb.shape(), &rng.uniform_vec(xb.len())).unwrap();
    t("bn bwd", 5, || {
        batchnorm2d_backward(&bn, &cache, &gb).unwrap();
    });
}
