//! Command-line pipeline: `synth` -> `prepare` -> `train` -> `evaluate` /
//! `embed`. Exit codes: 0 success, 1 validation error, 2 I/O error.

use crate::augment::LabeledSample;
use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::config::{load_config, write_config, ConfigError, RunConfig};
use crate::dataset::{
    generate_synthetic, load_manifest, save_manifest, stratified_split, DataError, DatasetKind,
    ManifestRecord, Split, SplitSpec, StressClass, SynthConfig, STRESS_CLASSES,
};
use crate::imaging::{
    bilinear_resize, crop_and_resize, read_ppm, segment_leaf, write_ppm, ImageError, ImageRGB,
    SEVERITY_CLASSES,
};
use crate::metrics::{write_confusion_csv, write_metrics_csv, ConfusionMatrix, MetricsError, MetricsRow};
use crate::model::{build_model, ModelError, MultiTaskNet, TaskMode};
use crate::rng::RngStream;
use crate::train::{
    make_sample, read_train_report_csv, train, write_train_report_csv, TrainError, TrainReport,
};
use crate::tsne::{run_tsne, write_embedding_csv, TsneError};
use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

const K_INIT: u64 = 0x1217;
const K_TSNE: u64 = 0x075e;

#[derive(Error, Debug)]
pub enum AppError {
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Tsne(#[from] TsneError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl AppError {
    /// 2 for I/O-rooted failures, 1 for validation failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Io(_)
            | AppError::Config(ConfigError::Io(_))
            | AppError::Data(DataError::Io(_))
            | AppError::Image(ImageError::Io(_))
            | AppError::Train(TrainError::Io(_))
            | AppError::Checkpoint(CheckpointError::Io(_))
            | AppError::Metrics(MetricsError::Io(_))
            | AppError::Tsne(TsneError::Io(_)) => 2,
            _ => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "leafnet",
    about = "Leaf biotic-stress classification and severity estimation pipeline",
    version
)]
struct Cli {
    /// Run configuration file (INI-style sections).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for every random choice in the run.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for all run artifacts.
    #[arg(long, global = true, default_value = "leafnet_out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic labeled dataset with exact ground-truth masks.
    Synth {
        /// Images per stress class.
        #[arg(long, default_value_t = 20)]
        count_per_class: usize,
        /// Square image side in pixels.
        #[arg(long, default_value_t = 64)]
        image_size: usize,
    },
    /// Validate a manifest, assign splits, and cache preprocessed images.
    Prepare {
        #[arg(long)]
        manifest: PathBuf,
        /// Require every listed image file to exist.
        #[arg(long, default_value_t = true)]
        check_files: bool,
        /// Keep split assignments already present in the manifest.
        #[arg(long, default_value_t = false)]
        respect_splits: bool,
    },
    /// Train on a prepared manifest and keep the best checkpoint.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Override [model].mode from the config file.
        #[arg(long)]
        mode: Option<String>,
        /// Override [augment].mixup_enabled.
        #[arg(long)]
        mixup: Option<bool>,
    },
    /// Compute confusion matrices and metrics for a checkpoint.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Which split to evaluate.
        #[arg(long, default_value = "test")]
        split: String,
        /// Training report for the per-epoch timing summary; defaults to
        /// train_report.csv next to the checkpoint.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Extract features for a split and embed them to 2-D.
    Embed {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Z-score features before the embedding.
        #[arg(long, default_value_t = false)]
        standardize: bool,
    },
}

/// Entry point. `args[0]` is the program name.
pub fn run(args: &[String]) -> u8 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{e}");
                    1
                }
            };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), AppError> {
    let cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    std::fs::create_dir_all(&cli.out_dir)?;
    match &cli.command {
        Command::Synth {
            count_per_class,
            image_size,
        } => cmd_synth(cli, &cfg, *count_per_class, *image_size),
        Command::Prepare {
            manifest,
            check_files,
            respect_splits,
        } => cmd_prepare(cli, cfg, manifest, *check_files, *respect_splits),
        Command::Train { manifest, mode, mixup } => cmd_train(cli, cfg, manifest, mode.as_deref(), *mixup),
        Command::Evaluate {
            manifest,
            checkpoint,
            split,
            report,
        } => cmd_evaluate(cli, &cfg, manifest, checkpoint, split, report.as_deref()),
        Command::Embed {
            manifest,
            checkpoint,
            split,
            standardize,
        } => cmd_embed(cli, cfg, manifest, checkpoint, split, *standardize),
    }
}

fn cmd_synth(cli: &Cli, _cfg: &RunConfig, count_per_class: usize, image_size: usize) -> Result<(), AppError> {
    let synth = SynthConfig {
        width: image_size,
        height: image_size,
        per_stress_counts: [count_per_class; 5],
        seed: cli.seed,
        ..SynthConfig::default()
    };
    let (manifest, records) = generate_synthetic(&synth, &cli.out_dir)?;
    println!(
        "synth: wrote {} images ({}x{}) and ground-truth masks under {}",
        records.len(),
        image_size,
        image_size,
        cli.out_dir.display()
    );
    println!("synth: manifest at {}", manifest.display());
    Ok(())
}

fn load_record_image(manifest_path: &Path, record: &ManifestRecord) -> Result<ImageRGB, AppError> {
    let path = crate::dataset::resolve_record_path(manifest_path, record);
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    match ext {
        "ppm" => Ok(read_ppm(&path)?),
        "png" => {
            let bytes = std::fs::read(&path)?;
            Ok(crate::imaging::decode_image(&bytes, crate::imaging::ImageFormat::Png)?)
        }
        other => Err(AppError::Image(ImageError::UnsupportedFormat(format!(
            "extension {other:?} for {}",
            path.display()
        )))),
    }
}

fn cmd_prepare(
    cli: &Cli,
    cfg: RunConfig,
    manifest: &Path,
    check_files: bool,
    respect_splits: bool,
) -> Result<(), AppError> {
    let mut records = load_manifest(manifest, check_files)?;
    let spec = SplitSpec {
        train_bp: cfg.split.train_bp,
        val_bp: cfg.split.val_bp,
        test_bp: cfg.split.test_bp,
        seed: cli.seed,
        stratify_on: cfg.split.stratify,
        respect_existing: respect_splits,
    };
    let summary = stratified_split(&mut records, &spec)?;
    for class in &summary.empty_classes {
        eprintln!("warning: class {class} has no records, skipped in split");
    }

    let prepared_dir = cli.out_dir.join("prepared");
    let images_dir = prepared_dir.join("images");
    std::fs::create_dir_all(&images_dir)?;

    let out_size = cfg.imaging.out_size;
    let processed: Vec<Result<PathBuf, AppError>> = records
        .par_iter()
        .enumerate()
        .map(|(i, rec)| -> Result<PathBuf, AppError> {
            let img = load_record_image(manifest, rec)?;
            let resized = match rec.kind {
                DatasetKind::Leaf => {
                    let leaf = segment_leaf(&img, cfg.imaging.s_threshold)?;
                    crop_and_resize(&img, &leaf, cfg.imaging.margin_frac, (out_size, out_size))?
                }
                // Symptom crops are already tight; a plain resize suffices.
                DatasetKind::Symptom => bilinear_resize(&img, out_size, out_size)?,
            };
            let rel = PathBuf::from("images").join(format!("{i:04}.ppm"));
            write_ppm(&resized, &prepared_dir.join(&rel))?;
            Ok(rel)
        })
        .collect();

    let mut out_records = Vec::with_capacity(records.len());
    for (rec, rel) in records.iter().zip(processed) {
        out_records.push(ManifestRecord {
            path: rel?,
            ..rec.clone()
        });
    }
    let out_manifest = prepared_dir.join("manifest.csv");
    save_manifest(&out_records, &out_manifest)?;
    std::fs::write(cli.out_dir.join("config.ini"), write_config(&cfg))?;
    println!(
        "prepare: {} records split {}/{}/{} (train/val/test), cache at {}",
        out_records.len(),
        summary.train,
        summary.val,
        summary.test,
        out_manifest.display()
    );
    Ok(())
}

fn records_to_samples(
    manifest_path: &Path,
    records: &[&ManifestRecord],
) -> Result<Vec<LabeledSample>, AppError> {
    records
        .iter()
        .map(|rec| {
            let img = load_record_image(manifest_path, rec)?;
            Ok(make_sample(
                img.to_tensor(),
                rec.stress.index(),
                rec.severity.map(|s| s.rank()),
            ))
        })
        .collect()
}

fn cmd_train(
    cli: &Cli,
    mut cfg: RunConfig,
    manifest: &Path,
    mode_override: Option<&str>,
    mixup_override: Option<bool>,
) -> Result<(), AppError> {
    if let Some(mode) = mode_override {
        cfg.model.mode = TaskMode::parse(mode)
            .ok_or_else(|| AppError::Validation(format!("unknown mode {mode:?}")))?;
    }
    if let Some(mixup) = mixup_override {
        cfg.augment.mixup_enabled = mixup;
    }

    let records = load_manifest(manifest, false)?;
    if records.iter().any(|r| r.split.is_none()) {
        return Err(AppError::Validation(
            "manifest has unassigned splits; run `leafnet prepare` first".into(),
        ));
    }
    if cfg.model.mode.wants_severity() {
        if let Some(row) = records.iter().position(|r| r.severity.is_none()) {
            return Err(AppError::Data(DataError::MissingSeverity { row: row + 2 }));
        }
    }
    let train_recs: Vec<&ManifestRecord> = records.iter().filter(|r| r.split == Some(Split::Train)).collect();
    let val_recs: Vec<&ManifestRecord> = records.iter().filter(|r| r.split == Some(Split::Val)).collect();
    if train_recs.is_empty() || val_recs.is_empty() {
        return Err(AppError::Train(TrainError::EmptyDataset));
    }
    let train_set = records_to_samples(manifest, &train_recs)?;
    let val_set = records_to_samples(manifest, &val_recs)?;

    let mut rng = RngStream::keyed(cli.seed, &[K_INIT]);
    let mut net: MultiTaskNet<f32> = build_model(&cfg.model, &mut rng)?;
    println!(
        "train: mode {}, {} trainable trunk params + {} head params, {} train / {} val samples",
        cfg.model.mode.as_str(),
        net.trunk_param_count(),
        net.head_param_count(),
        train_set.len(),
        val_set.len()
    );

    let schedule = cfg.lr_schedule();
    let (report, checkpoint) = train(&mut net, &train_set, &val_set, &cfg.sgd, &schedule, &cfg.augment, cli.seed)?;
    for e in &report.epochs {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
        println!(
            "epoch {:>3}: train loss {:.4}, val loss {:.4}, val acc stress {}, val acc severity {}, {:.2}s",
            e.epoch,
            e.train_loss,
            e.val_loss,
            fmt(e.val_acc_stress),
            fmt(e.val_acc_severity),
            e.seconds
        );
    }
    println!("train: best epoch {} (val loss {:.4})", report.best_epoch, checkpoint.val_loss);

    checkpoint.save(&cli.out_dir.join("checkpoint.lfst"))?;
    write_train_report_csv(&report, &cli.out_dir.join("train_report.csv"))?;
    std::fs::write(cli.out_dir.join("config.ini"), write_config(&cfg))?;
    Ok(())
}

fn parse_split(s: &str) -> Result<Split, AppError> {
    Split::parse(s).ok_or_else(|| AppError::Validation(format!("unknown split {s:?}")))
}

fn load_checkpointed_net(cfg: &RunConfig, checkpoint_path: &Path) -> Result<(MultiTaskNet<f32>, Checkpoint), AppError> {
    let checkpoint = Checkpoint::load(checkpoint_path)?;
    let expected = cfg.model.fingerprint();
    if checkpoint.fingerprint != expected {
        return Err(AppError::Validation(format!(
            "checkpoint fingerprint {:#018x} does not match the configured architecture {:#018x}",
            checkpoint.fingerprint, expected
        )));
    }
    let mut rng = RngStream::new(0, 0);
    let mut net: MultiTaskNet<f32> = build_model(&cfg.model, &mut rng)?;
    checkpoint.apply_to(&mut net)?;
    Ok((net, checkpoint))
}

fn forward_set(
    net: &MultiTaskNet<f32>,
    samples: &[LabeledSample],
    batch_size: usize,
) -> Result<(Vec<usize>, Vec<usize>, Vec<Vec<f64>>), AppError> {
    // Returns per-sample stress predictions, severity predictions (usize::MAX
    // when the head is absent), and pooled features.
    let mut pred_stress = Vec::new();
    let mut pred_severity = Vec::new();
    let mut features = Vec::new();
    for chunk in samples.chunks(batch_size.max(1)) {
        let mut data = Vec::new();
        let shape = chunk[0].image.shape().to_vec();
        for s in chunk {
            data.extend_from_slice(s.image.data());
        }
        let x = crate::tensor::Tensor::new(
            vec![chunk.len(), shape[0], shape[1], shape[2]],
            data,
        )
        .map_err(|e| AppError::Validation(e.to_string()))?;
        let out = net.forward_eval(&x)?;
        if let Some(logits) = &out.logits_stress {
            pred_stress.extend(logits.argmax_axis(1).expect("rank 2"));
        }
        if let Some(logits) = &out.logits_severity {
            pred_severity.extend(logits.argmax_axis(1).expect("rank 2"));
        }
        let f = &out.features;
        let dim = f.shape()[1];
        for i in 0..chunk.len() {
            features.push(f.data()[i * dim..(i + 1) * dim].iter().map(|&v| v as f64).collect());
        }
    }
    Ok((pred_stress, pred_severity, features))
}

fn cmd_evaluate(
    cli: &Cli,
    cfg: &RunConfig,
    manifest: &Path,
    checkpoint_path: &Path,
    split: &str,
    report: Option<&Path>,
) -> Result<(), AppError> {
    let split = parse_split(split)?;
    let records = load_manifest(manifest, false)?;
    let eval_recs: Vec<&ManifestRecord> = records.iter().filter(|r| r.split == Some(split)).collect();
    if eval_recs.is_empty() {
        return Err(AppError::Validation(format!("no records in split {}", split.as_str())));
    }
    let (net, _) = load_checkpointed_net(cfg, checkpoint_path)?;
    let samples = records_to_samples(manifest, &eval_recs)?;
    let (pred_stress, pred_severity, _) = forward_set(&net, &samples, cfg.sgd.batch_size)?;

    let stress_names: Vec<&str> = STRESS_CLASSES.iter().map(StressClass::as_str).collect();
    let severity_names: Vec<&str> = SEVERITY_CLASSES.iter().map(|c| c.as_str()).collect();
    let mut rows = Vec::new();

    if net.mode.wants_stress() {
        let mut cm = ConfusionMatrix::new(5);
        for (rec, &pred) in eval_recs.iter().zip(&pred_stress) {
            cm.update(rec.stress.index(), pred)?;
        }
        let (precision, recall) = cm.macro_precision_recall()?;
        rows.push(MetricsRow {
            task: "stress".into(),
            accuracy: cm.accuracy()?,
            precision,
            recall,
        });
        write_confusion_csv(&cm, &stress_names, &cli.out_dir.join("confusion_stress.csv"))?;
    }
    if net.mode.wants_severity() {
        let mut cm = ConfusionMatrix::new(5);
        for (rec, &pred) in eval_recs.iter().zip(&pred_severity) {
            if let Some(sev) = rec.severity {
                cm.update(sev.rank(), pred)?;
            }
        }
        let (precision, recall) = cm.macro_precision_recall()?;
        rows.push(MetricsRow {
            task: "severity".into(),
            accuracy: cm.accuracy()?,
            precision,
            recall,
        });
        write_confusion_csv(&cm, &severity_names, &cli.out_dir.join("confusion_severity.csv"))?;
    }
    write_metrics_csv(&rows, &cli.out_dir.join("metrics.csv"))?;
    for r in &rows {
        println!(
            "evaluate[{}]: acc {:.4}, precision {:.4}, recall {:.4} over {} samples",
            r.task,
            r.accuracy,
            r.precision,
            r.recall,
            eval_recs.len()
        );
    }

    let report_path = report
        .map(Path::to_path_buf)
        .or_else(|| checkpoint_path.parent().map(|d| d.join("train_report.csv")));
    if let Some(path) = report_path.filter(|p| p.exists()) {
        let tr: TrainReport = read_train_report_csv(&path)?;
        write_timing_summary(&tr, &cli.out_dir.join("timing_summary.csv"))?;
        let secs: Vec<f64> = tr.epochs.iter().map(|e| e.seconds).collect();
        println!(
            "evaluate: {} epochs, mean {:.3}s/epoch (min {:.3}, max {:.3})",
            secs.len(),
            secs.iter().sum::<f64>() / secs.len() as f64,
            secs.iter().cloned().fold(f64::INFINITY, f64::min),
            secs.iter().cloned().fold(0.0, f64::max),
        );
    }
    Ok(())
}

fn write_timing_summary(report: &TrainReport, path: &Path) -> Result<(), AppError> {
    let secs: Vec<f64> = report.epochs.iter().map(|e| e.seconds).collect();
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "epochs,total_seconds,mean_seconds,min_seconds,max_seconds")?;
    writeln!(
        f,
        "{},{},{},{},{}",
        secs.len(),
        secs.iter().sum::<f64>(),
        secs.iter().sum::<f64>() / secs.len() as f64,
        secs.iter().cloned().fold(f64::INFINITY, f64::min),
        secs.iter().cloned().fold(0.0, f64::max)
    )?;
    Ok(())
}

fn cmd_embed(
    cli: &Cli,
    mut cfg: RunConfig,
    manifest: &Path,
    checkpoint_path: &Path,
    split: &str,
    standardize: bool,
) -> Result<(), AppError> {
    if standardize {
        cfg.tsne.standardize = true;
    }
    let split = parse_split(split)?;
    let records = load_manifest(manifest, false)?;
    let eval_recs: Vec<&ManifestRecord> = records.iter().filter(|r| r.split == Some(split)).collect();
    if eval_recs.is_empty() {
        return Err(AppError::Validation(format!("no records in split {}", split.as_str())));
    }
    let (net, _) = load_checkpointed_net(&cfg, checkpoint_path)?;
    let samples = records_to_samples(manifest, &eval_recs)?;
    let (_, _, features) = forward_set(&net, &samples, cfg.sgd.batch_size)?;

    let mut stream = RngStream::keyed(cli.seed, &[K_TSNE]);
    let result = run_tsne(&features, &cfg.tsne, &mut stream)?;

    let ids: Vec<String> = eval_recs.iter().map(|r| r.path.display().to_string()).collect();
    let stress: Vec<String> = eval_recs.iter().map(|r| r.stress.as_str().to_string()).collect();
    let severity: Vec<Option<String>> = eval_recs
        .iter()
        .map(|r| r.severity.map(|s| s.as_str().to_string()))
        .collect();
    let out_path = cli.out_dir.join("embedding.csv");
    write_embedding_csv(&out_path, &ids, &result.embedding, &stress, &severity)?;
    println!(
        "embed: {} samples -> {} (final KL {:.4})",
        ids.len(),
        out_path.display(),
        result.kl_trace.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> u8 {
        let argv: Vec<String> = std::iter::once("leafnet".to_string())
            .chain(args.iter().map(|s| s.to_string()))
            .collect();
        run(&argv)
    }

    #[test]
    fn unknown_flag_exits_one() {
        assert_eq!(run_args(&["synth", "--bogus-flag"]), 1);
    }

    #[test]
    fn unknown_subcommand_exits_one() {
        assert_eq!(run_args(&["frobnicate"]), 1);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(run_args(&["--help"]), 0);
    }
}
