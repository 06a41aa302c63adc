//! Softmax cross-entropy over soft (row-stochastic) targets.
//!
//! Targets may be one-hot or convex mixtures of one-hots; the loss is linear
//! in the target, so mixing targets and mixing per-target losses are the same
//! number. Per-row log-softmax and the loss sum run in f64 with row-max
//! subtraction and a 1e-12 probability floor, then cast back to the element
//! type.

use super::LayerError;
use crate::tensor::{Scalar, Tensor};

const TARGET_ROW_SUM_TOL: f64 = 1e-6;
const PROB_FLOOR: f64 = 1e-12;

/// Row-wise softmax with max subtraction.
pub fn softmax<F: Scalar>(logits: &Tensor<F>) -> Result<Tensor<F>, LayerError> {
    if logits.rank() != 2 {
        return Err(LayerError::ShapeMismatch(format!(
            "softmax expects rank 2, got {:?}",
            logits.shape()
        )));
    }
    let (n, k) = (logits.shape()[0], logits.shape()[1]);
    let xs = logits.data();
    let mut out = Tensor::zeros(&[n, k]);
    let od = out.data_mut();
    for i in 0..n {
        let row = &xs[i * k..(i + 1) * k];
        let mut max = row[0];
        for &v in &row[1..] {
            if v > max {
                max = v;
            }
        }
        let mut sum = F::zero();
        for j in 0..k {
            let e = (row[j] - max).exp();
            od[i * k + j] = e;
            sum = sum + e;
        }
        for j in 0..k {
            od[i * k + j] = od[i * k + j] / sum;
        }
    }
    Ok(out)
}

/// Mean cross-entropy between row-stochastic targets and softmax(logits),
/// plus its gradient `(softmax - target) / N` with respect to the logits.
pub fn softmax_cross_entropy<F: Scalar>(
    logits: &Tensor<F>,
    targets: &Tensor<F>,
) -> Result<(F, Tensor<F>), LayerError> {
    if logits.rank() != 2 || targets.shape() != logits.shape() {
        return Err(LayerError::ShapeMismatch(format!(
            "logits {:?} vs targets {:?}",
            logits.shape(),
            targets.shape()
        )));
    }
    let (n, k) = (logits.shape()[0], logits.shape()[1]);
    let xs = logits.data();
    let ts = targets.data();

    for i in 0..n {
        let mut sum = 0.0f64;
        for j in 0..k {
            let t = ts[i * k + j].as_f64();
            if t < 0.0 {
                return Err(LayerError::InvalidTarget(format!(
                    "target row {i} has negative entry {t}"
                )));
            }
            sum += t;
        }
        if (sum - 1.0).abs() > TARGET_ROW_SUM_TOL {
            return Err(LayerError::InvalidTarget(format!(
                "target row {i} sums to {sum}, expected 1"
            )));
        }
    }

    let inv_n = 1.0 / n as f64;
    let mut grad = Tensor::zeros(&[n, k]);
    let gd = grad.data_mut();
    let mut loss = 0.0f64;
    let mut probs = vec![0.0f64; k];
    for i in 0..n {
        let row = &xs[i * k..(i + 1) * k];
        let mut max = row[0].as_f64();
        for &v in &row[1..] {
            let v = v.as_f64();
            if v > max {
                max = v;
            }
        }
        let mut denom = 0.0f64;
        for j in 0..k {
            let e = (row[j].as_f64() - max).exp();
            probs[j] = e;
            denom += e;
        }
        for j in 0..k {
            probs[j] /= denom;
        }
        for j in 0..k {
            let t = ts[i * k + j].as_f64();
            if t != 0.0 {
                loss -= t * probs[j].max(PROB_FLOOR).ln();
            }
            gd[i * k + j] = F::from_f64((probs[j] - t) * inv_n);
        }
    }
    Ok((F::from_f64(loss * inv_n), grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(n: usize, k: usize, hits: &[usize]) -> Tensor<f32> {
        let mut t = Tensor::zeros(&[n, k]);
        for (i, &h) in hits.iter().enumerate() {
            t.data_mut()[i * k + h] = 1.0;
        }
        t
    }

    #[test]
    fn uniform_logits_give_ln_k() {
        let logits = Tensor::<f32>::filled(&[3, 5], 0.2);
        let targets = one_hot(3, 5, &[0, 2, 4]);
        let (loss, _) = softmax_cross_entropy(&logits, &targets).unwrap();
        assert!((loss - (5.0f32).ln()).abs() < 1e-6, "loss {loss}");
    }

    #[test]
    fn saturated_logit_gives_near_zero_loss() {
        let mut logits = Tensor::<f32>::zeros(&[1, 5]);
        logits.data_mut()[2] = 30.0;
        let targets = one_hot(1, 5, &[2]);
        let (loss, _) = softmax_cross_entropy(&logits, &targets).unwrap();
        assert!(loss < 1e-9, "loss {loss}");
    }

    #[test]
    fn loss_is_linear_in_target() {
        let mut rng = crate::rng::RngStream::new(8, 0);
        let logits =
            Tensor::<f32>::from_f64_slice(&[4, 5], &rng.normal_vec(20).iter().map(|v| v * 2.0).collect::<Vec<_>>())
                .unwrap();
        let ti = one_hot(4, 5, &[1, 1, 1, 1]);
        let tj = one_hot(4, 5, &[3, 3, 3, 3]);
        let lambda = 0.3f32;
        let mixed_data: Vec<f64> = ti
            .data()
            .iter()
            .zip(tj.data())
            .map(|(&a, &b)| (lambda * a + (1.0 - lambda) * b) as f64)
            .collect();
        let mixed = Tensor::<f32>::from_f64_slice(&[4, 5], &mixed_data).unwrap();
        let (li, _) = softmax_cross_entropy(&logits, &ti).unwrap();
        let (lj, _) = softmax_cross_entropy(&logits, &tj).unwrap();
        let (lm, _) = softmax_cross_entropy(&logits, &mixed).unwrap();
        assert!((lm - (lambda * li + (1.0 - lambda) * lj)).abs() < 1e-6);
    }

    #[test]
    fn invalid_target_row_rejected() {
        let logits = Tensor::<f32>::zeros(&[1, 3]);
        let bad = Tensor::<f32>::from_f64_slice(&[1, 3], &[0.5, 0.2, 0.1]).unwrap();
        assert!(matches!(
            softmax_cross_entropy(&logits, &bad),
            Err(LayerError::InvalidTarget(_))
        ));
        let neg = Tensor::<f32>::from_f64_slice(&[1, 3], &[1.5, -0.5, 0.0]).unwrap();
        assert!(matches!(
            softmax_cross_entropy(&logits, &neg),
            Err(LayerError::InvalidTarget(_))
        ));
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = crate::rng::RngStream::new(12, 0);
        let logits = Tensor::<f32>::from_f64_slice(&[8, 5], &rng.normal_vec(40)).unwrap();
        let s = softmax(&logits).unwrap();
        for i in 0..8 {
            let sum: f32 = s.data()[i * 5..(i + 1) * 5].iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn loss_nonnegative() {
        let mut rng = crate::rng::RngStream::new(13, 0);
        for _ in 0..20 {
            let logits = Tensor::<f32>::from_f64_slice(&[3, 5], &rng.normal_vec(15)).unwrap();
            let hits: Vec<usize> = (0..3).map(|_| rng.below(5) as usize).collect();
            let targets = one_hot(3, 5, &hits);
            let (loss, _) = softmax_cross_entropy(&logits, &targets).unwrap();
            assert!(loss >= 0.0);
        }
    }
}
