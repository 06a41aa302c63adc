//! Shared-trunk residual network with parallel classification heads.
//!
//! The trunk (stem conv-bn-relu followed by residual stages with stride-2
//! first convolutions and a global average pool) is one object set shared by
//! every head, so multi-task training fits both tasks with a single model.
//! Spatial size is only constrained to be divisible by 2^stages; the pool
//! makes the trunk otherwise size-agnostic.

use crate::layers::{
    batchnorm2d_backward, batchnorm2d_eval, batchnorm2d_train, conv2d_backward, conv2d_forward,
    dense_backward, dense_forward, global_avg_backward, global_avg_forward, Activation,
    BatchNormParams, BnCache, Conv2dParams, DenseParams, LayerError,
};
use crate::rng::RngStream;
use crate::tensor::{Scalar, Tensor};
use thiserror::Error;

pub const NUM_CLASSES: usize = 5;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Layer(#[from] LayerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskMode {
    SingleTaskStress,
    SingleTaskSeverity,
    MultiTask,
}

impl TaskMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskMode::SingleTaskStress => "single_task_stress",
            TaskMode::SingleTaskSeverity => "single_task_severity",
            TaskMode::MultiTask => "multi_task",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "single_task_stress" => Some(TaskMode::SingleTaskStress),
            "single_task_severity" => Some(TaskMode::SingleTaskSeverity),
            "multi_task" => Some(TaskMode::MultiTask),
            _ => None,
        }
    }

    pub fn wants_stress(&self) -> bool {
        matches!(self, TaskMode::SingleTaskStress | TaskMode::MultiTask)
    }

    pub fn wants_severity(&self) -> bool {
        matches!(self, TaskMode::SingleTaskSeverity | TaskMode::MultiTask)
    }
}

/// Architecture description. The default is the small residual network used
/// throughout the crate: stem 3->16, stage widths (16, 32, 64) with one
/// block each, feature dimension 64.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchConfig {
    pub mode: TaskMode,
    pub input_size: usize,
    pub stage_widths: Vec<usize>,
    pub blocks_per_stage: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            mode: TaskMode::MultiTask,
            input_size: 224,
            stage_widths: vec![16, 32, 64],
            blocks_per_stage: 1,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.stage_widths.is_empty() || self.stage_widths.iter().any(|&w| w == 0) {
            return Err(ModelError::InvalidConfig(format!(
                "stage widths must be positive, got {:?}",
                self.stage_widths
            )));
        }
        if self.blocks_per_stage == 0 {
            return Err(ModelError::InvalidConfig("blocks_per_stage must be positive".into()));
        }
        if self.input_size == 0 || self.input_size % (1 << self.stage_widths.len()) != 0 {
            return Err(ModelError::InvalidConfig(format!(
                "input size {} must be divisible by {}",
                self.input_size,
                1 << self.stage_widths.len()
            )));
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        *self.stage_widths.last().expect("validated non-empty")
    }

    /// FNV-1a hash of the canonical architecture string, stored in
    /// checkpoints so evaluation can reject a mismatched config.
    pub fn fingerprint(&self) -> u64 {
        let text = format!(
            "mode={};widths={:?};blocks={};input={};classes={}",
            self.mode.as_str(),
            self.stage_widths,
            self.blocks_per_stage,
            self.input_size,
            NUM_CLASSES
        );
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in text.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}

#[derive(Debug, Clone)]
pub struct ConvBn<F: Scalar> {
    pub conv: Conv2dParams<F>,
    pub bn: BatchNormParams<F>,
}

#[derive(Debug, Clone)]
pub struct ResidualBlock<F: Scalar> {
    pub conv1: Conv2dParams<F>,
    pub bn1: BatchNormParams<F>,
    pub conv2: Conv2dParams<F>,
    pub bn2: BatchNormParams<F>,
    /// 1x1 projection on the skip path when shape changes; identity otherwise.
    pub proj: Option<Conv2dParams<F>>,
}

#[derive(Debug, Clone)]
pub struct MultiTaskNet<F: Scalar> {
    pub mode: TaskMode,
    pub config: ArchConfig,
    pub stem: ConvBn<F>,
    pub blocks: Vec<ResidualBlock<F>>,
    pub head_stress: Option<DenseParams<F>>,
    pub head_severity: Option<DenseParams<F>>,
    pub feature_dim: usize,
}

fn he_conv<F: Scalar>(c_out: usize, c_in: usize, k: usize, stride: usize, padding: usize, rng: &mut RngStream) -> Conv2dParams<F> {
    let fan_in = (c_in * k * k) as f64;
    let std = (2.0 / fan_in).sqrt();
    let data: Vec<F> = (0..c_out * c_in * k * k)
        .map(|_| F::from_f64(rng.normal() * std))
        .collect();
    Conv2dParams::new(
        Tensor::new(vec![c_out, c_in, k, k], data).expect("shape"),
        Tensor::zeros(&[c_out]),
        stride,
        padding,
    )
    .expect("valid conv params")
}

fn he_dense<F: Scalar>(out: usize, input: usize, rng: &mut RngStream) -> DenseParams<F> {
    let std = (2.0 / input as f64).sqrt();
    let data: Vec<F> = (0..out * input).map(|_| F::from_f64(rng.normal() * std)).collect();
    DenseParams::new(Tensor::new(vec![out, input], data).expect("shape"), Tensor::zeros(&[out])).expect("valid dense")
}

/// Builds the network with He-normal conv/dense weights, zero biases, and
/// batchnorm gamma 1 / beta 0. Weight draws consume the stream in a fixed
/// order (stem, then each block's conv1/conv2/proj, then heads).
pub fn build_model<F: Scalar>(config: &ArchConfig, rng: &mut RngStream) -> Result<MultiTaskNet<F>, ModelError> {
    config.validate()?;
    let w0 = config.stage_widths[0];
    let stem = ConvBn {
        conv: he_conv(w0, 3, 3, 1, 1, rng),
        bn: BatchNormParams::new(w0),
    };
    let mut blocks = Vec::new();
    let mut in_ch = w0;
    for &width in &config.stage_widths {
        for b in 0..config.blocks_per_stage {
            let stride = if b == 0 { 2 } else { 1 };
            let needs_proj = stride != 1 || in_ch != width;
            blocks.push(ResidualBlock {
                conv1: he_conv(width, in_ch, 3, stride, 1, rng),
                bn1: BatchNormParams::new(width),
                conv2: he_conv(width, width, 3, 1, 1, rng),
                bn2: BatchNormParams::new(width),
                proj: needs_proj.then(|| he_conv(width, in_ch, 1, stride, 0, rng)),
            });
            in_ch = width;
        }
    }
    let feature_dim = config.feature_dim();
    let head_stress = config
        .mode
        .wants_stress()
        .then(|| he_dense(NUM_CLASSES, feature_dim, rng));
    let head_severity = config
        .mode
        .wants_severity()
        .then(|| he_dense(NUM_CLASSES, feature_dim, rng));
    Ok(MultiTaskNet {
        mode: config.mode,
        config: config.clone(),
        stem,
        blocks,
        head_stress,
        head_severity,
        feature_dim,
    })
}

/// Head logits and pooled features from one forward pass.
#[derive(Debug, Clone)]
pub struct NetOutputs<F: Scalar> {
    pub logits_stress: Option<Tensor<F>>,
    pub logits_severity: Option<Tensor<F>>,
    pub features: Tensor<F>,
}

#[derive(Debug)]
struct StemTape<F: Scalar> {
    x: Tensor<F>,
    bn: BnCache<F>,
    out: Tensor<F>,
}

#[derive(Debug)]
struct BlockTape<F: Scalar> {
    x: Tensor<F>,
    bn1: BnCache<F>,
    h: Tensor<F>,
    bn2: BnCache<F>,
    out: Tensor<F>,
}

/// Intermediate activations recorded by a train-mode forward pass.
#[derive(Debug)]
pub struct NetTape<F: Scalar> {
    stem: StemTape<F>,
    blocks: Vec<BlockTape<F>>,
    pooled_shape: Vec<usize>,
    features: Tensor<F>,
    logits_stress: Option<Tensor<F>>,
    logits_severity: Option<Tensor<F>>,
}

fn relu_mask_into<F: Scalar>(grad: &mut Tensor<F>, reference: &Tensor<F>) {
    for (g, &r) in grad.data_mut().iter_mut().zip(reference.data()) {
        if r <= F::zero() {
            *g = F::zero();
        }
    }
}

impl<F: Scalar> MultiTaskNet<F> {
    fn check_input(&self, x: &Tensor<F>) -> Result<(), ModelError> {
        if x.rank() != 4 || x.shape()[1] != 3 {
            return Err(ModelError::Layer(LayerError::ShapeMismatch(format!(
                "expected NCHW input with 3 channels, got {:?}",
                x.shape()
            ))));
        }
        let div = 1usize << self.config.stage_widths.len();
        if x.shape()[2] % div != 0 || x.shape()[3] % div != 0 {
            return Err(ModelError::Layer(LayerError::ShapeMismatch(format!(
                "spatial dims {}x{} must be divisible by {div}",
                x.shape()[2],
                x.shape()[3]
            ))));
        }
        Ok(())
    }

    /// Deterministic eval-mode forward using batchnorm running statistics.
    pub fn forward_eval(&self, x: &Tensor<F>) -> Result<NetOutputs<F>, ModelError> {
        self.check_input(x)?;
        let z = conv2d_forward(x, &self.stem.conv)?;
        let mut cur = batchnorm2d_eval(&z, &self.stem.bn)?.relu();
        for block in &self.blocks {
            let z1 = conv2d_forward(&cur, &block.conv1)?;
            let h = batchnorm2d_eval(&z1, &block.bn1)?.relu();
            let z2 = conv2d_forward(&h, &block.conv2)?;
            let main = batchnorm2d_eval(&z2, &block.bn2)?;
            let skip = match &block.proj {
                Some(p) => conv2d_forward(&cur, p)?,
                None => cur.clone(),
            };
            cur = main.add(&skip).map_err(LayerError::from)?.relu();
        }
        let features = global_avg_forward(&cur)?;
        Ok(NetOutputs {
            logits_stress: self
                .head_stress
                .as_ref()
                .map(|h| dense_forward(&features, h, Activation::None))
                .transpose()?,
            logits_severity: self
                .head_severity
                .as_ref()
                .map(|h| dense_forward(&features, h, Activation::None))
                .transpose()?,
            features,
        })
    }

    /// Train-mode forward: batch statistics, running-stat updates, and a
    /// tape of intermediate activations for [`MultiTaskNet::backward`].
    /// Requires a batch of at least 2.
    pub fn forward_train(&mut self, x: &Tensor<F>) -> Result<(NetOutputs<F>, NetTape<F>), ModelError> {
        self.check_input(x)?;
        if x.shape()[0] < 2 {
            return Err(ModelError::Layer(LayerError::BatchTooSmall(x.shape()[0])));
        }
        let z = conv2d_forward(x, &self.stem.conv)?;
        let (y, bn_cache) = batchnorm2d_train(&z, &mut self.stem.bn)?;
        let stem_out = y.relu();
        let stem_tape = StemTape {
            x: x.clone(),
            bn: bn_cache,
            out: stem_out.clone(),
        };
        let mut cur = stem_out;
        let mut block_tapes = Vec::with_capacity(self.blocks.len());
        for block in &mut self.blocks {
            let z1 = conv2d_forward(&cur, &block.conv1)?;
            let (y1, c1) = batchnorm2d_train(&z1, &mut block.bn1)?;
            let h = y1.relu();
            let z2 = conv2d_forward(&h, &block.conv2)?;
            let (main, c2) = batchnorm2d_train(&z2, &mut block.bn2)?;
            let skip = match &block.proj {
                Some(p) => conv2d_forward(&cur, p)?,
                None => cur.clone(),
            };
            let out = main.add(&skip).map_err(LayerError::from)?.relu();
            block_tapes.push(BlockTape {
                x: cur,
                bn1: c1,
                h,
                bn2: c2,
                out: out.clone(),
            });
            cur = out;
        }
        let pooled_shape = cur.shape().to_vec();
        let features = global_avg_forward(&cur)?;
        let logits_stress = self
            .head_stress
            .as_ref()
            .map(|h| dense_forward(&features, h, Activation::None))
            .transpose()?;
        let logits_severity = self
            .head_severity
            .as_ref()
            .map(|h| dense_forward(&features, h, Activation::None))
            .transpose()?;
        let outputs = NetOutputs {
            logits_stress: logits_stress.clone(),
            logits_severity: logits_severity.clone(),
            features: features.clone(),
        };
        Ok((
            outputs,
            NetTape {
                stem: stem_tape,
                blocks: block_tapes,
                pooled_shape,
                features,
                logits_stress,
                logits_severity,
            },
        ))
    }

    /// Backpropagates head-logit gradients through the whole network.
    /// Feature-level gradients accumulate stress head first, then severity.
    pub fn backward(
        &self,
        tape: &NetTape<F>,
        grad_stress: Option<&Tensor<F>>,
        grad_severity: Option<&Tensor<F>>,
    ) -> Result<NetGrads<F>, ModelError> {
        let n = tape.features.shape()[0];
        let mut d_features = Tensor::zeros(&[n, self.feature_dim]);
        let mut head_stress_grads = None;
        let mut head_severity_grads = None;

        if let Some(g) = grad_stress {
            let head = self.head_stress.as_ref().ok_or_else(|| {
                ModelError::Layer(LayerError::ShapeMismatch("no stress head in this mode".into()))
            })?;
            let logits = tape.logits_stress.as_ref().expect("taped stress logits");
            let grads = dense_backward(&tape.features, head, Activation::None, logits, g)?;
            d_features = d_features.add(&grads.input).map_err(LayerError::from)?;
            head_stress_grads = Some((grads.weight, grads.bias));
        }
        if let Some(g) = grad_severity {
            let head = self.head_severity.as_ref().ok_or_else(|| {
                ModelError::Layer(LayerError::ShapeMismatch("no severity head in this mode".into()))
            })?;
            let logits = tape.logits_severity.as_ref().expect("taped severity logits");
            let grads = dense_backward(&tape.features, head, Activation::None, logits, g)?;
            d_features = d_features.add(&grads.input).map_err(LayerError::from)?;
            head_severity_grads = Some((grads.weight, grads.bias));
        }

        let mut d_cur = global_avg_backward(&d_features, &tape.pooled_shape)?;

        let mut block_grads: Vec<BlockGrads<F>> = Vec::with_capacity(self.blocks.len());
        for (block, t) in self.blocks.iter().zip(&tape.blocks).rev() {
            let mut d_sum = d_cur;
            relu_mask_into(&mut d_sum, &t.out);
            let bn2 = batchnorm2d_backward(&block.bn2, &t.bn2, &d_sum)?;
            let conv2 = conv2d_backward(&t.h, &block.conv2, &bn2.input)?;
            let mut d_h = conv2.input;
            relu_mask_into(&mut d_h, &t.h);
            let bn1 = batchnorm2d_backward(&block.bn1, &t.bn1, &d_h)?;
            let conv1 = conv2d_backward(&t.x, &block.conv1, &bn1.input)?;
            let mut d_x = conv1.input;
            let proj_grads = match &block.proj {
                Some(p) => {
                    let pg = conv2d_backward(&t.x, p, &d_sum)?;
                    d_x = d_x.add(&pg.input).map_err(LayerError::from)?;
                    Some((pg.weight, pg.bias))
                }
                None => {
                    d_x = d_x.add(&d_sum).map_err(LayerError::from)?;
                    None
                }
            };
            block_grads.push(BlockGrads {
                conv1_w: conv1.weight,
                conv1_b: conv1.bias,
                bn1_gamma: bn1.gamma,
                bn1_beta: bn1.beta,
                conv2_w: conv2.weight,
                conv2_b: conv2.bias,
                bn2_gamma: bn2.gamma,
                bn2_beta: bn2.beta,
                proj: proj_grads,
            });
            d_cur = d_x;
        }
        block_grads.reverse();

        let mut d_stem = d_cur;
        relu_mask_into(&mut d_stem, &tape.stem.out);
        let bn = batchnorm2d_backward(&self.stem.bn, &tape.stem.bn, &d_stem)?;
        let conv = conv2d_backward(&tape.stem.x, &self.stem.conv, &bn.input)?;

        Ok(NetGrads {
            stem_conv_w: conv.weight,
            stem_conv_b: conv.bias,
            stem_gamma: bn.gamma,
            stem_beta: bn.beta,
            blocks: block_grads,
            head_stress: head_stress_grads,
            head_severity: head_severity_grads,
            input: conv.input,
        })
    }

    /// Trainable tensors in canonical order with their weight-decay flags.
    /// Running batchnorm statistics are state, not trainable parameters.
    pub fn param_meta(&self) -> Vec<(String, bool)> {
        let mut out = vec![
            ("stem.conv.weight".to_string(), true),
            ("stem.conv.bias".to_string(), false),
            ("stem.bn.gamma".to_string(), false),
            ("stem.bn.beta".to_string(), false),
        ];
        for (i, block) in self.blocks.iter().enumerate() {
            out.push((format!("block{i}.conv1.weight"), true));
            out.push((format!("block{i}.conv1.bias"), false));
            out.push((format!("block{i}.bn1.gamma"), false));
            out.push((format!("block{i}.bn1.beta"), false));
            out.push((format!("block{i}.conv2.weight"), true));
            out.push((format!("block{i}.conv2.bias"), false));
            out.push((format!("block{i}.bn2.gamma"), false));
            out.push((format!("block{i}.bn2.beta"), false));
            if block.proj.is_some() {
                out.push((format!("block{i}.proj.weight"), true));
                out.push((format!("block{i}.proj.bias"), false));
            }
        }
        if self.head_stress.is_some() {
            out.push(("head_stress.weight".to_string(), true));
            out.push(("head_stress.bias".to_string(), false));
        }
        if self.head_severity.is_some() {
            out.push(("head_severity.weight".to_string(), true));
            out.push(("head_severity.bias".to_string(), false));
        }
        out
    }

    pub fn params(&self) -> Vec<&Tensor<F>> {
        let mut out: Vec<&Tensor<F>> = vec![
            &self.stem.conv.weight,
            &self.stem.conv.bias,
            &self.stem.bn.gamma,
            &self.stem.bn.beta,
        ];
        for block in &self.blocks {
            out.push(&block.conv1.weight);
            out.push(&block.conv1.bias);
            out.push(&block.bn1.gamma);
            out.push(&block.bn1.beta);
            out.push(&block.conv2.weight);
            out.push(&block.conv2.bias);
            out.push(&block.bn2.gamma);
            out.push(&block.bn2.beta);
            if let Some(p) = &block.proj {
                out.push(&p.weight);
                out.push(&p.bias);
            }
        }
        if let Some(h) = &self.head_stress {
            out.push(&h.weight);
            out.push(&h.bias);
        }
        if let Some(h) = &self.head_severity {
            out.push(&h.weight);
            out.push(&h.bias);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let mut out: Vec<&mut Tensor<F>> = vec![
            &mut self.stem.conv.weight,
            &mut self.stem.conv.bias,
            &mut self.stem.bn.gamma,
            &mut self.stem.bn.beta,
        ];
        for block in &mut self.blocks {
            out.push(&mut block.conv1.weight);
            out.push(&mut block.conv1.bias);
            out.push(&mut block.bn1.gamma);
            out.push(&mut block.bn1.beta);
            out.push(&mut block.conv2.weight);
            out.push(&mut block.conv2.bias);
            out.push(&mut block.bn2.gamma);
            out.push(&mut block.bn2.beta);
            if let Some(p) = &mut block.proj {
                out.push(&mut p.weight);
                out.push(&mut p.bias);
            }
        }
        if let Some(h) = &mut self.head_stress {
            out.push(&mut h.weight);
            out.push(&mut h.bias);
        }
        if let Some(h) = &mut self.head_severity {
            out.push(&mut h.weight);
            out.push(&mut h.bias);
        }
        out
    }

    /// All persistent tensors (trainable parameters plus batchnorm running
    /// statistics) in canonical order, for checkpointing.
    pub fn state_tensors(&self) -> Vec<(String, &Tensor<F>)> {
        let mut out: Vec<(String, &Tensor<F>)> = vec![
            ("stem.conv.weight".into(), &self.stem.conv.weight),
            ("stem.conv.bias".into(), &self.stem.conv.bias),
            ("stem.bn.gamma".into(), &self.stem.bn.gamma),
            ("stem.bn.beta".into(), &self.stem.bn.beta),
            ("stem.bn.running_mean".into(), &self.stem.bn.running_mean),
            ("stem.bn.running_var".into(), &self.stem.bn.running_var),
        ];
        for (i, block) in self.blocks.iter().enumerate() {
            out.push((format!("block{i}.conv1.weight"), &block.conv1.weight));
            out.push((format!("block{i}.conv1.bias"), &block.conv1.bias));
            out.push((format!("block{i}.bn1.gamma"), &block.bn1.gamma));
            out.push((format!("block{i}.bn1.beta"), &block.bn1.beta));
            out.push((format!("block{i}.bn1.running_mean"), &block.bn1.running_mean));
            out.push((format!("block{i}.bn1.running_var"), &block.bn1.running_var));
            out.push((format!("block{i}.conv2.weight"), &block.conv2.weight));
            out.push((format!("block{i}.conv2.bias"), &block.conv2.bias));
            out.push((format!("block{i}.bn2.gamma"), &block.bn2.gamma));
            out.push((format!("block{i}.bn2.beta"), &block.bn2.beta));
            out.push((format!("block{i}.bn2.running_mean"), &block.bn2.running_mean));
            out.push((format!("block{i}.bn2.running_var"), &block.bn2.running_var));
            if let Some(p) = &block.proj {
                out.push((format!("block{i}.proj.weight"), &p.weight));
                out.push((format!("block{i}.proj.bias"), &p.bias));
            }
        }
        if let Some(h) = &self.head_stress {
            out.push(("head_stress.weight".into(), &h.weight));
            out.push(("head_stress.bias".into(), &h.bias));
        }
        if let Some(h) = &self.head_severity {
            out.push(("head_severity.weight".into(), &h.weight));
            out.push(("head_severity.bias".into(), &h.bias));
        }
        out
    }

    /// Overwrites state tensors by name. Every tensor the net owns must be
    /// present with a matching shape.
    pub fn load_state(&mut self, entries: &[(String, Tensor<F>)]) -> Result<(), ModelError> {
        use std::collections::HashMap;
        let map: HashMap<&str, &Tensor<F>> = entries.iter().map(|(n, t)| (n.as_str(), t)).collect();
        let names: Vec<String> = self.state_tensors().iter().map(|(n, _)| n.clone()).collect();
        let mut targets = self.state_tensors_mut();
        for (name, target) in names.iter().zip(targets.iter_mut()) {
            let src = map.get(name.as_str()).ok_or_else(|| {
                ModelError::InvalidConfig(format!("checkpoint is missing tensor '{name}'"))
            })?;
            if src.shape() != target.shape() {
                return Err(ModelError::InvalidConfig(format!(
                    "tensor '{name}' has shape {:?}, expected {:?}",
                    src.shape(),
                    target.shape()
                )));
            }
            **target = (*src).clone();
        }
        Ok(())
    }

    fn state_tensors_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let mut out: Vec<&mut Tensor<F>> = vec![
            &mut self.stem.conv.weight,
            &mut self.stem.conv.bias,
            &mut self.stem.bn.gamma,
            &mut self.stem.bn.beta,
            &mut self.stem.bn.running_mean,
            &mut self.stem.bn.running_var,
        ];
        for block in &mut self.blocks {
            out.push(&mut block.conv1.weight);
            out.push(&mut block.conv1.bias);
            out.push(&mut block.bn1.gamma);
            out.push(&mut block.bn1.beta);
            out.push(&mut block.bn1.running_mean);
            out.push(&mut block.bn1.running_var);
            out.push(&mut block.conv2.weight);
            out.push(&mut block.conv2.bias);
            out.push(&mut block.bn2.gamma);
            out.push(&mut block.bn2.beta);
            out.push(&mut block.bn2.running_mean);
            out.push(&mut block.bn2.running_var);
            if let Some(p) = &mut block.proj {
                out.push(&mut p.weight);
                out.push(&mut p.bias);
            }
        }
        if let Some(h) = &mut self.head_stress {
            out.push(&mut h.weight);
            out.push(&mut h.bias);
        }
        if let Some(h) = &mut self.head_severity {
            out.push(&mut h.weight);
            out.push(&mut h.bias);
        }
        out
    }

    /// Trainable parameter count of the shared trunk only.
    pub fn trunk_param_count(&self) -> usize {
        let mut count = self.stem.conv.param_count() + self.stem.bn.param_count();
        for block in &self.blocks {
            count += block.conv1.param_count()
                + block.bn1.param_count()
                + block.conv2.param_count()
                + block.bn2.param_count()
                + block.proj.as_ref().map_or(0, |p| p.param_count());
        }
        count
    }

    pub fn head_param_count(&self) -> usize {
        self.head_stress.as_ref().map_or(0, |h| h.param_count())
            + self.head_severity.as_ref().map_or(0, |h| h.param_count())
    }

    pub fn total_param_count(&self) -> usize {
        self.trunk_param_count() + self.head_param_count()
    }
}

#[derive(Debug, Clone)]
pub struct BlockGrads<F: Scalar> {
    pub conv1_w: Tensor<F>,
    pub conv1_b: Tensor<F>,
    pub bn1_gamma: Tensor<F>,
    pub bn1_beta: Tensor<F>,
    pub conv2_w: Tensor<F>,
    pub conv2_b: Tensor<F>,
    pub bn2_gamma: Tensor<F>,
    pub bn2_beta: Tensor<F>,
    pub proj: Option<(Tensor<F>, Tensor<F>)>,
}

/// Gradients for every trainable tensor, plus the gradient with respect to
/// the network input.
#[derive(Debug, Clone)]
pub struct NetGrads<F: Scalar> {
    pub stem_conv_w: Tensor<F>,
    pub stem_conv_b: Tensor<F>,
    pub stem_gamma: Tensor<F>,
    pub stem_beta: Tensor<F>,
    pub blocks: Vec<BlockGrads<F>>,
    pub head_stress: Option<(Tensor<F>, Tensor<F>)>,
    pub head_severity: Option<(Tensor<F>, Tensor<F>)>,
    pub input: Tensor<F>,
}

impl<F: Scalar> NetGrads<F> {
    /// Flattens in the same canonical order as [`MultiTaskNet::params`].
    /// Heads without an upstream gradient contribute zero tensors.
    pub fn flatten(&self, net: &MultiTaskNet<F>) -> Vec<Tensor<F>> {
        let mut out = vec![
            self.stem_conv_w.clone(),
            self.stem_conv_b.clone(),
            self.stem_gamma.clone(),
            self.stem_beta.clone(),
        ];
        for bg in &self.blocks {
            out.push(bg.conv1_w.clone());
            out.push(bg.conv1_b.clone());
            out.push(bg.bn1_gamma.clone());
            out.push(bg.bn1_beta.clone());
            out.push(bg.conv2_w.clone());
            out.push(bg.conv2_b.clone());
            out.push(bg.bn2_gamma.clone());
            out.push(bg.bn2_beta.clone());
            if let Some((w, b)) = &bg.proj {
                out.push(w.clone());
                out.push(b.clone());
            }
        }
        if let Some(head) = &net.head_stress {
            match &self.head_stress {
                Some((w, b)) => {
                    out.push(w.clone());
                    out.push(b.clone());
                }
                None => {
                    out.push(Tensor::zeros(head.weight.shape()));
                    out.push(Tensor::zeros(head.bias.shape()));
                }
            }
        }
        if let Some(head) = &net.head_severity {
            match &self.head_severity {
                Some((w, b)) => {
                    out.push(w.clone());
                    out.push(b.clone());
                }
                None => {
                    out.push(Tensor::zeros(head.weight.shape()));
                    out.push(Tensor::zeros(head.bias.shape()));
                }
            }
        }
        out
    }

    /// Trunk gradients only (everything except the heads), flattened in
    /// canonical order.
    pub fn trunk_flatten(&self) -> Vec<&Tensor<F>> {
        let mut out = vec![&self.stem_conv_w, &self.stem_conv_b, &self.stem_gamma, &self.stem_beta];
        for bg in &self.blocks {
            out.push(&bg.conv1_w);
            out.push(&bg.conv1_b);
            out.push(&bg.bn1_gamma);
            out.push(&bg.bn1_beta);
            out.push(&bg.conv2_w);
            out.push(&bg.conv2_b);
            out.push(&bg.bn2_gamma);
            out.push(&bg.bn2_beta);
            if let Some((w, b)) = &bg.proj {
                out.push(w);
                out.push(b);
            }
        }
        out
    }
}
