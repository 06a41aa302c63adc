//! SGD training loop with online augmentation, eval-mode validation after
//! every epoch, and best-checkpoint retention (lowest validation loss,
//! earliest epoch on ties).
//!
//! Determinism contract: the epoch shuffle runs on a stream keyed by
//! (seed, epoch); each sample's augmentation on (seed, epoch, dataset
//! index); mixup on (seed, epoch, batch index). Nothing is keyed by worker
//! or wall clock, so identical seeds replay every reported number bitwise.

use crate::augment::{mixup_batch, standard_augment, AugmentConfig, AugmentError, LabeledSample};
use crate::checkpoint::Checkpoint;
use crate::layers::{softmax_cross_entropy, LayerError};
use crate::model::{ModelError, MultiTaskNet, NetOutputs};
use crate::optim::{sgd_step, LrSchedule, OptimError, ParamUpdate, SgdConfig};
use crate::rng::RngStream;
use crate::tensor::Tensor;
use std::io::Write;
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

const K_SHUFFLE: u64 = 1;
const K_AUGMENT: u64 = 2;
const K_MIXUP: u64 = 3;

#[derive(Error, Debug)]
pub enum TrainError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("label missing: sample {index} lacks a severity label required by the task mode")]
    LabelMissing { index: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error("malformed report: {0}")]
    MalformedReport(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_acc_stress: Option<f64>,
    pub train_acc_severity: Option<f64>,
    pub val_acc_stress: Option<f64>,
    pub val_acc_severity: Option<f64>,
    /// Wall time; informative only, never part of any acceptance threshold.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
}

impl TrainReport {
    /// Equality of every reported number except wall time.
    pub fn same_numbers(&self, other: &TrainReport) -> bool {
        self.best_epoch == other.best_epoch
            && self.epochs.len() == other.epochs.len()
            && self.epochs.iter().zip(&other.epochs).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.train_loss.to_bits() == b.train_loss.to_bits()
                    && a.val_loss.to_bits() == b.val_loss.to_bits()
                    && opt_bits(a.train_acc_stress) == opt_bits(b.train_acc_stress)
                    && opt_bits(a.train_acc_severity) == opt_bits(b.train_acc_severity)
                    && opt_bits(a.val_acc_stress) == opt_bits(b.val_acc_stress)
                    && opt_bits(a.val_acc_severity) == opt_bits(b.val_acc_severity)
            })
    }
}

fn opt_bits(v: Option<f64>) -> Option<u64> {
    v.map(f64::to_bits)
}

fn stack_images(samples: &[&LabeledSample]) -> Result<Tensor<f32>, TrainError> {
    let first = samples[0].image.shape();
    let (c, h, w) = (first[0], first[1], first[2]);
    let mut data = Vec::with_capacity(samples.len() * c * h * w);
    for s in samples {
        if s.image.shape() != first {
            return Err(TrainError::Layer(LayerError::ShapeMismatch(format!(
                "sample image {:?} differs from {:?}",
                s.image.shape(),
                first
            ))));
        }
        data.extend_from_slice(s.image.data());
    }
    Ok(Tensor::new(vec![samples.len(), c, h, w], data).expect("consistent dims"))
}

fn stack_stress_labels(samples: &[&LabeledSample]) -> Tensor<f32> {
    let mut data = Vec::with_capacity(samples.len() * 5);
    for s in samples {
        data.extend_from_slice(&s.y_stress);
    }
    Tensor::new(vec![samples.len(), 5], data).expect("5-way labels")
}

fn stack_severity_labels(samples: &[&LabeledSample]) -> Result<Tensor<f32>, TrainError> {
    let mut data = Vec::with_capacity(samples.len() * 5);
    for (i, s) in samples.iter().enumerate() {
        let y = s.y_severity.as_ref().ok_or(TrainError::LabelMissing { index: i })?;
        data.extend_from_slice(y);
    }
    Ok(Tensor::new(vec![samples.len(), 5], data).expect("5-way labels"))
}

fn correct_count(logits: &Tensor<f32>, targets: &Tensor<f32>) -> usize {
    let pred = logits.argmax_axis(1).expect("rank 2");
    let truth = targets.argmax_axis(1).expect("rank 2");
    pred.iter().zip(&truth).filter(|(a, b)| a == b).count()
}

/// Batches of indices: chunks of `batch_size` with a trailing singleton
/// merged into the previous batch (batch statistics need at least 2 items).
fn make_batches(order: &[usize], batch_size: usize) -> Vec<Vec<usize>> {
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(|c| c.to_vec()).collect();
    if batches.len() >= 2 && batches.last().map(|b| b.len()) == Some(1) {
        let last = batches.pop().unwrap();
        batches.last_mut().unwrap().extend(last);
    }
    batches
}

struct EvalNumbers {
    loss: f64,
    acc_stress: Option<f64>,
    acc_severity: Option<f64>,
}

/// Eval-mode loss and accuracy over a whole set, batched.
fn evaluate_set(
    net: &MultiTaskNet<f32>,
    set: &[LabeledSample],
    batch_size: usize,
) -> Result<EvalNumbers, TrainError> {
    let mut loss_sum = 0.0f64;
    let mut stress_correct = 0usize;
    let mut severity_correct = 0usize;
    let n = set.len();
    let mode = net.mode;
    for chunk in set.chunks(batch_size.max(1)) {
        let refs: Vec<&LabeledSample> = chunk.iter().collect();
        let x = stack_images(&refs)?;
        let out: NetOutputs<f32> = net.forward_eval(&x)?;
        let mut batch_loss = 0.0f64;
        if mode.wants_stress() {
            let t = stack_stress_labels(&refs);
            let logits = out.logits_stress.as_ref().expect("stress head");
            let (l, _) = softmax_cross_entropy(logits, &t)?;
            batch_loss += l as f64;
            stress_correct += correct_count(logits, &t);
        }
        if mode.wants_severity() {
            let t = stack_severity_labels(&refs)?;
            let logits = out.logits_severity.as_ref().expect("severity head");
            let (l, _) = softmax_cross_entropy(logits, &t)?;
            batch_loss += l as f64;
            severity_correct += correct_count(logits, &t);
        }
        loss_sum += batch_loss * chunk.len() as f64;
    }
    Ok(EvalNumbers {
        loss: loss_sum / n as f64,
        acc_stress: mode.wants_stress().then(|| stress_correct as f64 / n as f64),
        acc_severity: mode.wants_severity().then(|| severity_correct as f64 / n as f64),
    })
}

/// Trains in place and returns the per-epoch report plus the checkpoint with
/// the lowest validation loss.
pub fn train(
    net: &mut MultiTaskNet<f32>,
    train_set: &[LabeledSample],
    val_set: &[LabeledSample],
    cfg: &SgdConfig,
    schedule: &LrSchedule,
    augment_cfg: &AugmentConfig,
    seed: u64,
) -> Result<(TrainReport, Checkpoint), TrainError> {
    cfg.validate()?;
    augment_cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if net.mode.wants_severity() {
        for (i, s) in train_set.iter().chain(val_set.iter()).enumerate() {
            if s.y_severity.is_none() {
                return Err(TrainError::LabelMissing { index: i });
            }
        }
    }

    let mut velocity: Vec<Tensor<f32>> = net.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
    let decay_flags: Vec<bool> = net.param_meta().iter().map(|(_, d)| *d).collect();

    let mut report = TrainReport {
        epochs: Vec::with_capacity(cfg.epochs),
        best_epoch: 0,
    };
    let mut best: Option<(f64, Checkpoint)> = None;

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let lr = schedule.lr_at_epoch(epoch)?;

        let mut order: Vec<usize> = (0..train_set.len()).collect();
        RngStream::keyed(seed, &[K_SHUFFLE, epoch as u64]).shuffle(&mut order);
        let batches = make_batches(&order, cfg.batch_size);

        let mut train_loss_sum = 0.0f64;
        let mut stress_correct = 0usize;
        let mut severity_correct = 0usize;

        for (bi, batch) in batches.iter().enumerate() {
            let mut samples: Vec<LabeledSample> = Vec::with_capacity(batch.len());
            for &idx in batch {
                let mut stream = RngStream::keyed(seed, &[K_AUGMENT, epoch as u64, idx as u64]);
                samples.push(standard_augment(&train_set[idx], augment_cfg, &mut stream)?);
            }
            if augment_cfg.mixup_enabled {
                let mut stream = RngStream::keyed(seed, &[K_MIXUP, epoch as u64, bi as u64]);
                samples = mixup_batch(&samples, augment_cfg.mixup_alpha, augment_cfg.mixup_heads, &mut stream)?;
            }
            let refs: Vec<&LabeledSample> = samples.iter().collect();
            let x = stack_images(&refs)?;
            let (out, tape) = net.forward_train(&x)?;

            let mut batch_loss = 0.0f64;
            let mut grad_stress = None;
            let mut grad_severity = None;
            if net.mode.wants_stress() {
                let t = stack_stress_labels(&refs);
                let logits = out.logits_stress.as_ref().expect("stress head");
                let (l, g) = softmax_cross_entropy(logits, &t)?;
                batch_loss += l as f64;
                stress_correct += correct_count(logits, &t);
                grad_stress = Some(g);
            }
            if net.mode.wants_severity() {
                let t = stack_severity_labels(&refs)?;
                let logits = out.logits_severity.as_ref().expect("severity head");
                let (l, g) = softmax_cross_entropy(logits, &t)?;
                batch_loss += l as f64;
                severity_correct += correct_count(logits, &t);
                grad_severity = Some(g);
            }
            train_loss_sum += batch_loss * batch.len() as f64;

            let grads = net.backward(&tape, grad_stress.as_ref(), grad_severity.as_ref())?;
            let flat = grads.flatten(net);
            let mut params = net.params_mut();
            let mut updates: Vec<ParamUpdate<'_, f32>> = params
                .iter_mut()
                .zip(flat.iter())
                .zip(velocity.iter_mut())
                .zip(&decay_flags)
                .map(|(((param, grad), velocity), &decay)| ParamUpdate {
                    param,
                    grad,
                    velocity,
                    decay,
                })
                .collect();
            sgd_step(&mut updates, cfg, lr)?;
        }

        let n_train = train_set.len() as f64;
        let val = evaluate_set(net, val_set, cfg.batch_size)?;
        let stats = EpochStats {
            epoch,
            train_loss: train_loss_sum / n_train,
            val_loss: val.loss,
            train_acc_stress: net.mode.wants_stress().then(|| stress_correct as f64 / n_train),
            train_acc_severity: net.mode.wants_severity().then(|| severity_correct as f64 / n_train),
            val_acc_stress: val.acc_stress,
            val_acc_severity: val.acc_severity,
            seconds: started.elapsed().as_secs_f64(),
        };
        let is_better = best.as_ref().map_or(true, |(b, _)| val.loss < *b);
        if is_better {
            best = Some((val.loss, Checkpoint::from_net(net, epoch as u32, val.loss as f32)));
            report.best_epoch = epoch;
        }
        report.epochs.push(stats);
    }

    let (_, checkpoint) = best.expect("at least one epoch");
    Ok((report, checkpoint))
}

const REPORT_HEADER: &str =
    "epoch,train_loss,val_loss,train_acc_stress,train_acc_severity,val_acc_stress,val_acc_severity,seconds";

pub fn write_train_report_csv(report: &TrainReport, path: &Path) -> Result<(), TrainError> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{REPORT_HEADER}")?;
    let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for e in &report.epochs {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{}",
            e.epoch,
            e.train_loss,
            e.val_loss,
            fmt_opt(e.train_acc_stress),
            fmt_opt(e.train_acc_severity),
            fmt_opt(e.val_acc_stress),
            fmt_opt(e.val_acc_severity),
            e.seconds
        )?;
    }
    Ok(())
}

pub fn read_train_report_csv(path: &Path) -> Result<TrainReport, TrainError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != REPORT_HEADER {
        return Err(TrainError::MalformedReport(format!("unexpected header {header:?}")));
    }
    let mut epochs = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 8 {
            return Err(TrainError::MalformedReport(format!("bad row {line:?}")));
        }
        let num = |s: &str| -> Result<f64, TrainError> {
            s.parse().map_err(|_| TrainError::MalformedReport(format!("bad number {s:?}")))
        };
        let opt = |s: &str| -> Result<Option<f64>, TrainError> {
            if s.is_empty() {
                Ok(None)
            } else {
                num(s).map(Some)
            }
        };
        epochs.push(EpochStats {
            epoch: cells[0]
                .parse()
                .map_err(|_| TrainError::MalformedReport(format!("bad epoch {:?}", cells[0])))?,
            train_loss: num(cells[1])?,
            val_loss: num(cells[2])?,
            train_acc_stress: opt(cells[3])?,
            train_acc_severity: opt(cells[4])?,
            val_acc_stress: opt(cells[5])?,
            val_acc_severity: opt(cells[6])?,
            seconds: num(cells[7])?,
        });
    }
    if epochs.is_empty() {
        return Err(TrainError::MalformedReport("no epochs".into()));
    }
    let best_epoch = epochs
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.val_loss.partial_cmp(&b.val_loss).unwrap())
        .map(|(i, _)| epochs[i].epoch)
        .unwrap();
    Ok(TrainReport { epochs, best_epoch })
}

/// Builds a `LabeledSample` from an image tensor and hard class indices.
pub fn make_sample(image: Tensor<f32>, stress: usize, severity: Option<usize>) -> LabeledSample {
    let one_hot = |k: usize| {
        let mut v = vec![0.0f32; 5];
        v[k] = 1.0;
        v
    };
    LabeledSample {
        image,
        y_stress: one_hot(stress),
        y_severity: severity.map(one_hot),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, ArchConfig, TaskMode};

    fn tiny_config() -> ArchConfig {
        ArchConfig {
            mode: TaskMode::MultiTask,
            input_size: 16,
            stage_widths: vec![8, 16],
            blocks_per_stage: 1,
        }
    }

    fn colored_sample(stress: usize, severity: usize, seed: u64) -> LabeledSample {
        // A 16x16 image dominated by a class-specific color plus noise.
        let mut rng = RngStream::new(seed, 0);
        let mut data = vec![0.0f32; 3 * 16 * 16];
        for p in 0..16 * 16 {
            data[p] = (stress as f32 / 5.0 + rng.uniform01() as f32 * 0.1).min(1.0);
            data[256 + p] = (severity as f32 / 5.0 + rng.uniform01() as f32 * 0.1).min(1.0);
            data[512 + p] = 0.5;
        }
        make_sample(Tensor::new(vec![3, 16, 16], data).unwrap(), stress, Some(severity))
    }

    fn small_sets() -> (Vec<LabeledSample>, Vec<LabeledSample>) {
        let mut train = Vec::new();
        let mut val = Vec::new();
        for s in 0..5 {
            for v in 0..5 {
                for i in 0..3 {
                    train.push(colored_sample(s, v, (s * 100 + v * 10 + i) as u64));
                }
                val.push(colored_sample(s, v, (90_000 + s * 100 + v * 10) as u64));
            }
        }
        (train, val)
    }

    fn quick_schedule(epochs: usize) -> LrSchedule {
        LrSchedule::new(0.01, epochs)
    }

    fn no_augment() -> AugmentConfig {
        AugmentConfig {
            hflip_prob: 0.0,
            vflip_prob: 0.0,
            rotation_deg: 0.0,
            jitter: 0.0,
            mixup_enabled: false,
            ..AugmentConfig::default()
        }
    }

    #[test]
    fn best_epoch_is_argmin_val_loss() {
        let (train_set, val_set) = small_sets();
        let mut rng = RngStream::new(1, 0);
        let mut net = build_model::<f32>(&tiny_config(), &mut rng).unwrap();
        let cfg = SgdConfig {
            epochs: 3,
            batch_size: 16,
            ..SgdConfig::default()
        };
        let (report, cp) = train(&mut net, &train_set, &val_set, &cfg, &quick_schedule(3), &no_augment(), 7).unwrap();
        let argmin = report
            .epochs
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| a.val_loss.partial_cmp(&b.val_loss).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        assert_eq!(report.best_epoch, argmin);
        assert_eq!(cp.epoch as usize, argmin);
    }

    #[test]
    fn identical_seeds_identical_reports() {
        let (train_set, val_set) = small_sets();
        let cfg = SgdConfig {
            epochs: 2,
            batch_size: 16,
            ..SgdConfig::default()
        };
        let aug = AugmentConfig {
            mixup_enabled: true,
            ..AugmentConfig::default()
        };
        let mut rng = RngStream::new(2, 0);
        let mut net_a = build_model::<f32>(&tiny_config(), &mut rng).unwrap();
        let (ra, _) = train(&mut net_a, &train_set, &val_set, &cfg, &quick_schedule(2), &aug, 11).unwrap();
        let mut rng = RngStream::new(2, 0);
        let mut net_b = build_model::<f32>(&tiny_config(), &mut rng).unwrap();
        let (rb, _) = train(&mut net_b, &train_set, &val_set, &cfg, &quick_schedule(2), &aug, 11).unwrap();
        assert!(ra.same_numbers(&rb));
    }

    #[test]
    fn zero_lr_leaves_weights_bitwise_unchanged() {
        let (train_set, val_set) = small_sets();
        let mut rng = RngStream::new(3, 0);
        let mut net = build_model::<f32>(&tiny_config(), &mut rng).unwrap();
        let before: Vec<Vec<u32>> = net
            .params()
            .iter()
            .map(|t| t.data().iter().map(|v| v.to_bits()).collect())
            .collect();
        let cfg = SgdConfig {
            epochs: 1,
            batch_size: 16,
            ..SgdConfig::default()
        };
        let schedule = LrSchedule::new(0.0, 1);
        train(&mut net, &train_set, &val_set, &cfg, &schedule, &no_augment(), 5).unwrap();
        let after: Vec<Vec<u32>> = net
            .params()
            .iter()
            .map(|t| t.data().iter().map(|v| v.to_bits()).collect())
            .collect();
        assert_eq!(before, after);
    }

    #[test]
    fn severity_mode_requires_labels() {
        let (mut train_set, val_set) = small_sets();
        train_set[3].y_severity = None;
        let mut rng = RngStream::new(4, 0);
        let mut net = build_model::<f32>(&tiny_config(), &mut rng).unwrap();
        let cfg = SgdConfig {
            epochs: 1,
            batch_size: 16,
            ..SgdConfig::default()
        };
        assert!(matches!(
            train(&mut net, &train_set, &val_set, &cfg, &quick_schedule(1), &no_augment(), 5),
            Err(TrainError::LabelMissing { .. })
        ));
    }

    #[test]
    fn trailing_singleton_merges() {
        let order: Vec<usize> = (0..9).collect();
        let batches = make_batches(&order, 4);
        assert_eq!(batches.len(), 2);
        assert_eq!(batches[1].len(), 5);
        let batches = make_batches(&order[..8], 4);
        assert_eq!(batches.len(), 2);
        assert_eq!(batches[1].len(), 4);
        let batches = make_batches(&order[..1], 4);
        assert_eq!(batches.len(), 1);
    }

    #[test]
    fn report_csv_roundtrip() {
        let report = TrainReport {
            epochs: vec![
                EpochStats {
                    epoch: 0,
                    train_loss: 1.5,
                    val_loss: 1.25,
                    train_acc_stress: Some(0.25),
                    train_acc_severity: None,
                    val_acc_stress: Some(0.3),
                    val_acc_severity: None,
                    seconds: 0.5,
                },
                EpochStats {
                    epoch: 1,
                    train_loss: 1.0,
                    val_loss: 0.75,
                    train_acc_stress: Some(0.5),
                    train_acc_severity: None,
                    val_acc_stress: Some(0.6),
                    val_acc_severity: None,
                    seconds: 0.5,
                },
            ],
            best_epoch: 1,
        };
        let dir = std::env::temp_dir().join("leafnet_report_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("train_report.csv");
        write_train_report_csv(&report, &path).unwrap();
        let back = read_train_report_csv(&path).unwrap();
        assert_eq!(back, report);
    }
}
