//! Times one training epoch at the synthetic-acceptance scale
//! (multi-task net, 64x64 inputs, 350 train / 75 val samples).

use leafnet::augment::AugmentConfig;
use leafnet::model::{build_model, ArchConfig, TaskMode};
use leafnet::optim::{LrSchedule, SgdConfig};
use leafnet::train::{make_sample, train};
use leafnet::{RngStream, Tensor};
use std::time::Instant;

fn random_sample(rng: &mut RngStream, stress: usize, severity: usize) -> leafnet::augment::LabeledSample {
    let data: Vec<f64> = rng.uniform_vec(3 * 64 * 64);
    make_sample(
        Tensor::from_f64_slice(&[3, 64, 64], &data).unwrap(),
        stress,
        Some(severity),
    )
}

fn main() {
    let mut rng = RngStream::new(1, 0);
    let train_set: Vec<_> = (0..350).map(|i| random_sample(&mut rng, i % 5, (i / 5) % 5)).collect();
    let val_set: Vec<_> = (0..75).map(|i| random_sample(&mut rng, i % 5, (i / 5) % 5)).collect();

    let cfg = ArchConfig {
        mode: TaskMode::MultiTask,
        input_size: 64,
        stage_widths: vec![16, 32, 64],
        blocks_per_stage: 1,
    };
    let mut net = build_model::<f32>(&cfg, &mut rng).unwrap();
    let sgd = SgdConfig {
        epochs: 1,
        batch_size: 32,
        ..SgdConfig::default()
    };
    let schedule = LrSchedule::new(0.01, 1);
    let aug = AugmentConfig {
        mixup_enabled: true,
        ..AugmentConfig::default()
    };

    let start = Instant::now();
    let (report, _) = train(&mut net, &train_set, &val_set, &sgd, &schedule, &aug, 3).unwrap();
    println!(
        "one epoch: {:.2}s (train loss {:.4})",
        start.elapsed().as_secs_f64(),
        report.epochs[0].train_loss
    );
}
