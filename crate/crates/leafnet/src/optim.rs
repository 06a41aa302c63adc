//! SGD with momentum and decoupled-mask weight decay, plus the stepped
//! learning-rate schedule.

use crate::tensor::{Scalar, Tensor};
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum OptimError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("epoch {epoch} out of range for {epochs}-epoch schedule")]
    OutOfRange { epoch: usize, epochs: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// Training hyper-parameters. Defaults: lr 0.01, momentum 0.9, weight decay
/// 0.0005, 100 epochs, batch size 32.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            lr0: 0.01,
            momentum: 0.9,
            weight_decay: 0.0005,
            epochs: 100,
            batch_size: 32,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        if !(self.lr0 > 0.0) || self.momentum < 0.0 || self.weight_decay < 0.0 {
            return Err(OptimError::InvalidConfig(format!(
                "lr0 {}, momentum {}, weight_decay {} must be non-negative with lr0 > 0",
                self.lr0, self.momentum, self.weight_decay
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(OptimError::InvalidConfig("epochs and batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Which of the two step factors applies first. Halving first gives a clean
/// 100x total decay over five 20-epoch plateaus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FirstFactor {
    Half,
    Fifth,
}

/// Piecewise-constant schedule: every `period` epochs the rate is multiplied
/// by 1/2 or 1/5, alternately.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub period: usize,
    pub first_factor: FirstFactor,
    pub epochs: usize,
}

impl LrSchedule {
    pub fn new(base_lr: f64, epochs: usize) -> Self {
        Self {
            base_lr,
            period: 20,
            first_factor: FirstFactor::Half,
            epochs,
        }
    }

    pub fn lr_at_epoch(&self, epoch: usize) -> Result<f64, OptimError> {
        if epoch >= self.epochs {
            return Err(OptimError::OutOfRange {
                epoch,
                epochs: self.epochs,
            });
        }
        let steps = epoch / self.period;
        let factors = match self.first_factor {
            FirstFactor::Half => [0.5, 0.2],
            FirstFactor::Fifth => [0.2, 0.5],
        };
        let mut lr = self.base_lr;
        for i in 0..steps {
            lr *= factors[i % 2];
        }
        Ok(lr)
    }
}

/// One parameter tensor paired with its momentum buffer and a flag saying
/// whether weight decay applies (it is skipped for biases and batchnorm
/// affine parameters).
#[derive(Debug)]
pub struct ParamUpdate<'a, F: Scalar> {
    pub param: &'a mut Tensor<F>,
    pub grad: &'a Tensor<F>,
    pub velocity: &'a mut Tensor<F>,
    pub decay: bool,
}

/// `v <- momentum * v + (g + weight_decay * w); w <- w - lr * v`, applied
/// per tensor.
pub fn sgd_step<F: Scalar>(updates: &mut [ParamUpdate<'_, F>], cfg: &SgdConfig, lr: f64) -> Result<(), OptimError> {
    let momentum = F::from_f64(cfg.momentum);
    let lr = F::from_f64(lr);
    for u in updates.iter_mut() {
        if u.param.shape() != u.grad.shape() || u.param.shape() != u.velocity.shape() {
            return Err(OptimError::ShapeMismatch(format!(
                "param {:?}, grad {:?}, velocity {:?}",
                u.param.shape(),
                u.grad.shape(),
                u.velocity.shape()
            )));
        }
        let wd = if u.decay { F::from_f64(cfg.weight_decay) } else { F::zero() };
        let pd = u.param.data_mut();
        let gd = u.grad.data();
        let vd = u.velocity.data_mut();
        for i in 0..pd.len() {
            let g = gd[i] + wd * pd[i];
            vd[i] = momentum * vd[i] + g;
            pd[i] = pd[i] - lr * vd[i];
        }
    }
    Ok(())
}
