//! INI-style run configuration: `[section]` lines with `key=value` pairs,
//! `#` comments, strict unknown-key rejection. The resolved config echoes
//! back through [`write_config`] with round-trip float formatting, so an
//! echoed file re-parses to the identical configuration.

use crate::augment::{AugmentConfig, MixupHeads};
use crate::dataset::StratifyOn;
use crate::imaging::SymptomThresholds;
use crate::model::{ArchConfig, TaskMode};
use crate::optim::{FirstFactor, LrSchedule, SgdConfig};
use crate::tsne::TsneConfig;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("unknown key {key:?} in section [{section}]")]
    UnknownKey { section: String, key: String },
    #[error("invalid value {value:?} for {section}.{key}: {msg}")]
    InvalidValue {
        section: String,
        key: String,
        value: String,
        msg: String,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleSettings {
    pub period: usize,
    pub first_factor: FirstFactor,
}

impl Default for ScheduleSettings {
    fn default() -> Self {
        Self {
            period: 20,
            first_factor: FirstFactor::Half,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSettings {
    pub train_bp: u32,
    pub val_bp: u32,
    pub test_bp: u32,
    pub stratify: StratifyOn,
}

impl Default for SplitSettings {
    fn default() -> Self {
        Self {
            train_bp: 7000,
            val_bp: 1500,
            test_bp: 1500,
            stratify: StratifyOn::Stress,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImagingConfig {
    pub s_threshold: f32,
    pub thresholds: SymptomThresholds,
    pub margin_frac: f32,
    pub out_size: usize,
}

impl Default for ImagingConfig {
    fn default() -> Self {
        Self {
            s_threshold: 0.25,
            thresholds: SymptomThresholds::default(),
            margin_frac: 0.05,
            out_size: 224,
        }
    }
}

/// Every tunable in one place; sections [model], [sgd], [schedule],
/// [augment], [split], [tsne], [imaging].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub model: ArchConfig,
    pub sgd: SgdConfig,
    pub schedule: ScheduleSettings,
    pub augment: AugmentConfig,
    pub split: SplitSettings,
    pub tsne: TsneConfig,
    pub imaging: ImagingConfig,
}

impl RunConfig {
    pub fn lr_schedule(&self) -> LrSchedule {
        LrSchedule {
            base_lr: self.sgd.lr0,
            period: self.schedule.period,
            first_factor: self.schedule.first_factor,
            epochs: self.sgd.epochs,
        }
    }
}

fn fraction_to_bp(v: f64) -> u32 {
    (v * 10_000.0).round() as u32
}

fn bp_to_fraction(bp: u32) -> f64 {
    bp as f64 / 10_000.0
}

/// Serializes the full configuration.
pub fn write_config(cfg: &RunConfig) -> String {
    let widths: Vec<String> = cfg.model.stage_widths.iter().map(|w| w.to_string()).collect();
    let ff = match cfg.schedule.first_factor {
        FirstFactor::Half => "half",
        FirstFactor::Fifth => "fifth",
    };
    format!(
        "[model]\n\
         mode={}\n\
         input_size={}\n\
         stage_widths={}\n\
         blocks_per_stage={}\n\
         \n\
         [sgd]\n\
         lr0={}\n\
         momentum={}\n\
         weight_decay={}\n\
         epochs={}\n\
         batch_size={}\n\
         \n\
         [schedule]\n\
         period={}\n\
         first_factor={}\n\
         \n\
         [augment]\n\
         hflip_prob={}\n\
         vflip_prob={}\n\
         rotation_deg={}\n\
         jitter={}\n\
         mixup_enabled={}\n\
         mixup_alpha={}\n\
         mixup_heads={}\n\
         fill={},{},{}\n\
         \n\
         [split]\n\
         train={}\n\
         val={}\n\
         test={}\n\
         stratify={}\n\
         \n\
         [tsne]\n\
         perplexity={}\n\
         output_dim={}\n\
         iterations={}\n\
         learning_rate={}\n\
         early_exaggeration={}\n\
         exaggeration_iters={}\n\
         momentum_early={}\n\
         momentum_late={}\n\
         momentum_switch={}\n\
         entropy_tol={}\n\
         max_bisect_steps={}\n\
         standardize={}\n\
         strict_calibration={}\n\
         \n\
         [imaging]\n\
         s_threshold={}\n\
         hue_lo={}\n\
         hue_hi={}\n\
         s_min={}\n\
         v_max={}\n\
         margin_frac={}\n\
         out_size={}\n",
        cfg.model.mode.as_str(),
        cfg.model.input_size,
        widths.join(","),
        cfg.model.blocks_per_stage,
        cfg.sgd.lr0,
        cfg.sgd.momentum,
        cfg.sgd.weight_decay,
        cfg.sgd.epochs,
        cfg.sgd.batch_size,
        cfg.schedule.period,
        ff,
        cfg.augment.hflip_prob,
        cfg.augment.vflip_prob,
        cfg.augment.rotation_deg,
        cfg.augment.jitter,
        cfg.augment.mixup_enabled,
        cfg.augment.mixup_alpha,
        cfg.augment.mixup_heads.as_str(),
        cfg.augment.fill[0],
        cfg.augment.fill[1],
        cfg.augment.fill[2],
        bp_to_fraction(cfg.split.train_bp),
        bp_to_fraction(cfg.split.val_bp),
        bp_to_fraction(cfg.split.test_bp),
        cfg.split.stratify.as_str(),
        cfg.tsne.perplexity,
        cfg.tsne.output_dim,
        cfg.tsne.iterations,
        cfg.tsne.learning_rate,
        cfg.tsne.early_exaggeration,
        cfg.tsne.exaggeration_iters,
        cfg.tsne.momentum_early,
        cfg.tsne.momentum_late,
        cfg.tsne.momentum_switch,
        cfg.tsne.entropy_tol,
        cfg.tsne.max_bisect_steps,
        cfg.tsne.standardize,
        cfg.tsne.strict_calibration,
        cfg.imaging.s_threshold,
        cfg.imaging.thresholds.hue_lo,
        cfg.imaging.thresholds.hue_hi,
        cfg.imaging.thresholds.s_min,
        cfg.imaging.thresholds.v_max,
        cfg.imaging.margin_frac,
        cfg.imaging.out_size,
    )
}

/// Parses a configuration file; absent sections/keys keep their defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut section = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = name.trim().to_string();
            if !matches!(
                section.as_str(),
                "model" | "sgd" | "schedule" | "augment" | "split" | "tsne" | "imaging"
            ) {
                return Err(ConfigError::UnknownSection(section));
            }
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
            line: lineno,
            msg: format!("expected key=value, got {line:?}"),
        })?;
        let key = key.trim();
        let value = value.trim();
        apply_key(&mut cfg, &section, key, value)?;
    }
    Ok(cfg)
}

pub fn load_config(path: &std::path::Path) -> Result<RunConfig, ConfigError> {
    parse_config(&std::fs::read_to_string(path)?)
}

fn invalid(section: &str, key: &str, value: &str, msg: &str) -> ConfigError {
    ConfigError::InvalidValue {
        section: section.to_string(),
        key: key.to_string(),
        value: value.to_string(),
        msg: msg.to_string(),
    }
}

fn apply_key(cfg: &mut RunConfig, section: &str, key: &str, value: &str) -> Result<(), ConfigError> {
    macro_rules! num {
        ($ty:ty) => {
            value
                .parse::<$ty>()
                .map_err(|e| invalid(section, key, value, &e.to_string()))?
        };
    }
    let parse_bool = || -> Result<bool, ConfigError> {
        match value {
            "true" | "1" => Ok(true),
            "false" | "0" => Ok(false),
            _ => Err(invalid(section, key, value, "expected true/false")),
        }
    };
    match (section, key) {
        ("model", "mode") => {
            cfg.model.mode =
                TaskMode::parse(value).ok_or_else(|| invalid(section, key, value, "unknown mode"))?;
        }
        ("model", "input_size") => cfg.model.input_size = num!(usize),
        ("model", "stage_widths") => {
            cfg.model.stage_widths = value
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|e| invalid(section, key, value, &e.to_string()))?;
        }
        ("model", "blocks_per_stage") => cfg.model.blocks_per_stage = num!(usize),

        ("sgd", "lr0") => cfg.sgd.lr0 = num!(f64),
        ("sgd", "momentum") => cfg.sgd.momentum = num!(f64),
        ("sgd", "weight_decay") => cfg.sgd.weight_decay = num!(f64),
        ("sgd", "epochs") => cfg.sgd.epochs = num!(usize),
        ("sgd", "batch_size") => cfg.sgd.batch_size = num!(usize),

        ("schedule", "period") => cfg.schedule.period = num!(usize),
        ("schedule", "first_factor") => {
            cfg.schedule.first_factor = match value {
                "half" => FirstFactor::Half,
                "fifth" => FirstFactor::Fifth,
                _ => return Err(invalid(section, key, value, "expected half or fifth")),
            };
        }

        ("augment", "hflip_prob") => cfg.augment.hflip_prob = num!(f64),
        ("augment", "vflip_prob") => cfg.augment.vflip_prob = num!(f64),
        ("augment", "rotation_deg") => cfg.augment.rotation_deg = num!(f64),
        ("augment", "jitter") => cfg.augment.jitter = num!(f64),
        ("augment", "mixup_enabled") => cfg.augment.mixup_enabled = parse_bool()?,
        ("augment", "mixup_alpha") => cfg.augment.mixup_alpha = num!(f64),
        ("augment", "mixup_heads") => {
            cfg.augment.mixup_heads =
                MixupHeads::parse(value).ok_or_else(|| invalid(section, key, value, "expected both/stress/severity"))?;
        }
        ("augment", "fill") => {
            let parts: Vec<f32> = value
                .split(',')
                .map(|s| s.trim().parse::<f32>())
                .collect::<Result<_, _>>()
                .map_err(|e| invalid(section, key, value, &e.to_string()))?;
            if parts.len() != 3 {
                return Err(invalid(section, key, value, "expected r,g,b"));
            }
            cfg.augment.fill = [parts[0], parts[1], parts[2]];
        }

        ("split", "train") => cfg.split.train_bp = fraction_to_bp(num!(f64)),
        ("split", "val") => cfg.split.val_bp = fraction_to_bp(num!(f64)),
        ("split", "test") => cfg.split.test_bp = fraction_to_bp(num!(f64)),
        ("split", "stratify") => {
            cfg.split.stratify =
                StratifyOn::parse(value).ok_or_else(|| invalid(section, key, value, "expected stress or severity"))?;
        }

        ("tsne", "perplexity") => cfg.tsne.perplexity = num!(f64),
        ("tsne", "output_dim") => cfg.tsne.output_dim = num!(usize),
        ("tsne", "iterations") => cfg.tsne.iterations = num!(usize),
        ("tsne", "learning_rate") => cfg.tsne.learning_rate = num!(f64),
        ("tsne", "early_exaggeration") => cfg.tsne.early_exaggeration = num!(f64),
        ("tsne", "exaggeration_iters") => cfg.tsne.exaggeration_iters = num!(usize),
        ("tsne", "momentum_early") => cfg.tsne.momentum_early = num!(f64),
        ("tsne", "momentum_late") => cfg.tsne.momentum_late = num!(f64),
        ("tsne", "momentum_switch") => cfg.tsne.momentum_switch = num!(usize),
        ("tsne", "entropy_tol") => cfg.tsne.entropy_tol = num!(f64),
        ("tsne", "max_bisect_steps") => cfg.tsne.max_bisect_steps = num!(usize),
        ("tsne", "standardize") => cfg.tsne.standardize = parse_bool()?,
        ("tsne", "strict_calibration") => cfg.tsne.strict_calibration = parse_bool()?,

        ("imaging", "s_threshold") => cfg.imaging.s_threshold = num!(f32),
        ("imaging", "hue_lo") => cfg.imaging.thresholds.hue_lo = num!(f32),
        ("imaging", "hue_hi") => cfg.imaging.thresholds.hue_hi = num!(f32),
        ("imaging", "s_min") => cfg.imaging.thresholds.s_min = num!(f32),
        ("imaging", "v_max") => cfg.imaging.thresholds.v_max = num!(f32),
        ("imaging", "margin_frac") => cfg.imaging.margin_frac = num!(f32),
        ("imaging", "out_size") => cfg.imaging.out_size = num!(usize),

        _ => {
            return Err(ConfigError::UnknownKey {
                section: section.to_string(),
                key: key.to_string(),
            })
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_echo_and_reparse_identically() {
        let cfg = RunConfig::default();
        let text = write_config(&cfg);
        let back = parse_config(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn modified_config_closes_under_echo() {
        let mut cfg = RunConfig::default();
        cfg.model.mode = TaskMode::SingleTaskSeverity;
        cfg.model.input_size = 64;
        cfg.model.stage_widths = vec![8, 24, 40];
        cfg.sgd.lr0 = 0.0123456789;
        cfg.sgd.epochs = 30;
        cfg.schedule.first_factor = FirstFactor::Fifth;
        cfg.augment.mixup_enabled = true;
        cfg.augment.mixup_heads = MixupHeads::StressOnly;
        cfg.split.train_bp = 8000;
        cfg.split.val_bp = 1000;
        cfg.split.test_bp = 1000;
        cfg.tsne.perplexity = 12.5;
        cfg.tsne.standardize = true;
        cfg.imaging.out_size = 64;
        let text = write_config(&cfg);
        let back = parse_config(&text).unwrap();
        assert_eq!(back, cfg);
        // Double echo is byte-stable.
        assert_eq!(write_config(&back), text);
    }

    #[test]
    fn partial_config_keeps_defaults() {
        let cfg = parse_config("[sgd]\nepochs=7\n").unwrap();
        assert_eq!(cfg.sgd.epochs, 7);
        assert_eq!(cfg.sgd.batch_size, 32);
        assert_eq!(cfg.model.stage_widths, vec![16, 32, 64]);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(
            parse_config("[sgd]\nlearning=0.1\n"),
            Err(ConfigError::UnknownKey { .. })
        ));
    }

    #[test]
    fn unknown_section_rejected() {
        assert!(matches!(
            parse_config("[optimizer]\nlr0=0.1\n"),
            Err(ConfigError::UnknownSection(_))
        ));
    }

    #[test]
    fn comments_and_blanks_ignored() {
        let cfg = parse_config("# top\n\n[sgd]\n; note\nlr0=0.5\n").unwrap();
        assert_eq!(cfg.sgd.lr0, 0.5);
    }

    #[test]
    fn bad_value_reports_context() {
        match parse_config("[sgd]\nepochs=ten\n") {
            Err(ConfigError::InvalidValue { section, key, .. }) => {
                assert_eq!(section, "sgd");
                assert_eq!(key, "epochs");
            }
            other => panic!("expected InvalidValue, got {other:?}"),
        }
    }

    #[test]
    fn split_fractions_convert_to_basis_points() {
        let cfg = parse_config("[split]\ntrain=0.7\nval=0.15\ntest=0.15\n").unwrap();
        assert_eq!(cfg.split.train_bp, 7000);
        assert_eq!(cfg.split.val_bp, 1500);
        assert_eq!(cfg.split.test_bp, 1500);
    }
}
