//! Hot-loop primitives shared by the layer kernels.
//!
//! Reductions use a fixed number of interleaved partial sums (lanes)
//! combined in ascending lane order, then the remainder tail in element
//! order. The order never depends on thread count or SIMD width, so results
//! stay bitwise reproducible while the lane loops autovectorize.

use crate::tensor::Scalar;

const LANES: usize = 8;
const LANES_F64: usize = 4;

/// `out[i] += wv * x[i]`.
#[inline]
pub(crate) fn saxpy<F: Scalar>(out: &mut [F], x: &[F], wv: F) {
    for (o, &xv) in out.iter_mut().zip(x) {
        *o = *o + wv * xv;
    }
}

/// Lane-accumulated dot product of equal-length slices.
#[inline]
pub(crate) fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let mut acc = [F::zero(); LANES];
    let mut i = 0;
    while i + LANES <= n {
        for l in 0..LANES {
            acc[l] = acc[l] + a[i + l] * b[i + l];
        }
        i += LANES;
    }
    let mut total = acc[0];
    for lane in acc.iter().skip(1) {
        total = total + *lane;
    }
    while i < n {
        total = total + a[i] * b[i];
        i += 1;
    }
    total
}

/// Lane-accumulated slice sum.
#[inline]
pub(crate) fn sum<F: Scalar>(xs: &[F]) -> F {
    let n = xs.len();
    let mut acc = [F::zero(); LANES];
    let mut i = 0;
    while i + LANES <= n {
        for l in 0..LANES {
            acc[l] = acc[l] + xs[i + l];
        }
        i += LANES;
    }
    let mut total = acc[0];
    for lane in acc.iter().skip(1) {
        total = total + *lane;
    }
    while i < n {
        total = total + xs[i];
        i += 1;
    }
    total
}

/// Slice sum widened to f64 per element before accumulation.
#[inline]
pub(crate) fn sum_as_f64<F: Scalar>(xs: &[F]) -> f64 {
    let n = xs.len();
    let mut acc = [0.0f64; LANES_F64];
    let mut i = 0;
    while i + LANES_F64 <= n {
        for l in 0..LANES_F64 {
            acc[l] += xs[i + l].as_f64();
        }
        i += LANES_F64;
    }
    let mut total = acc[0];
    for lane in acc.iter().skip(1) {
        total += *lane;
    }
    while i < n {
        total += xs[i].as_f64();
        i += 1;
    }
    total
}

/// Sum of squared deviations from `mean`, widened to f64.
#[inline]
pub(crate) fn sum_sq_dev_as_f64<F: Scalar>(xs: &[F], mean: f64) -> f64 {
    let n = xs.len();
    let mut acc = [0.0f64; LANES_F64];
    let mut i = 0;
    while i + LANES_F64 <= n {
        for l in 0..LANES_F64 {
            let d = xs[i + l].as_f64() - mean;
            acc[l] += d * d;
        }
        i += LANES_F64;
    }
    let mut total = acc[0];
    for lane in acc.iter().skip(1) {
        total += *lane;
    }
    while i < n {
        let d = xs[i].as_f64() - mean;
        total += d * d;
        i += 1;
    }
    total
}

/// Dot product widened to f64 per element.
#[inline]
pub(crate) fn dot_as_f64<F: Scalar>(a: &[F], b: &[F]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let mut acc = [0.0f64; LANES_F64];
    let mut i = 0;
    while i + LANES_F64 <= n {
        for l in 0..LANES_F64 {
            acc[l] += a[i + l].as_f64() * b[i + l].as_f64();
        }
        i += LANES_F64;
    }
    let mut total = acc[0];
    for lane in acc.iter().skip(1) {
        total += *lane;
    }
    while i < n {
        total += a[i].as_f64() * b[i].as_f64();
        i += 1;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive_and_replays() {
        let mut rng = crate::rng::RngStream::new(51, 0);
        for len in [0usize, 1, 7, 8, 9, 64, 100] {
            let a: Vec<f64> = rng.uniform_vec(len);
            let b: Vec<f64> = rng.uniform_vec(len);
            let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            let got = dot(&a, &b);
            assert!((got - naive).abs() < 1e-12 * (1.0 + naive.abs()));
            assert_eq!(got.to_bits(), dot(&a, &b).to_bits());
        }
    }

    #[test]
    fn sums_match_naive() {
        let mut rng = crate::rng::RngStream::new(52, 0);
        let xs: Vec<f32> = rng.uniform_vec(123).iter().map(|&v| v as f32).collect();
        let naive: f64 = xs.iter().map(|&v| v as f64).sum();
        assert!((sum_as_f64(&xs) - naive).abs() < 1e-9);
        let direct: f32 = xs.iter().sum();
        assert!((sum(&xs) - direct).abs() < 1e-4);
    }

    #[test]
    fn saxpy_accumulates() {
        let x = [1.0f32, 2.0, 3.0, 4.0];
        let mut out = [1.0f32; 4];
        saxpy(&mut out, &x, 0.5);
        assert_eq!(out, [1.5, 2.0, 2.5, 3.0]);
    }
}
