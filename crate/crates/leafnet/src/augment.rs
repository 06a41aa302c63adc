//! Online training-time transforms: flips, rotation, color jitter, and
//! mixup batch combination.
//!
//! [`standard_augment`] consumes exactly six uniform draws per sample, in the
//! order hflip coin, vflip coin, rotation angle, brightness, contrast,
//! saturation — so a sample's transform depends only on its stream key,
//! never on processing order. Neutral parameters (factor exactly 1, angle
//! exactly 0, probability 0) short-circuit to the identity so a degenerate
//! config is a bitwise no-op.

use crate::rng::RngStream;
use crate::tensor::Tensor;
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum AugmentError {
    #[error("invalid factor: {0} (must be > 0)")]
    InvalidFactor(f32),
    #[error("batch too small for mixup: {0} < 2")]
    BatchTooSmall(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Which heads receive mixed labels when mixup is enabled. Excluded heads
/// keep the lambda-owner's original label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixupHeads {
    Both,
    StressOnly,
    SeverityOnly,
}

impl MixupHeads {
    pub fn as_str(&self) -> &'static str {
        match self {
            MixupHeads::Both => "both",
            MixupHeads::StressOnly => "stress",
            MixupHeads::SeverityOnly => "severity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "both" => Some(MixupHeads::Both),
            "stress" => Some(MixupHeads::StressOnly),
            "severity" => Some(MixupHeads::SeverityOnly),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub hflip_prob: f64,
    pub vflip_prob: f64,
    /// Rotation drawn uniformly from [-rotation_deg, +rotation_deg].
    pub rotation_deg: f64,
    /// Multiplicative jitter factors drawn from [1 - jitter, 1 + jitter].
    pub jitter: f64,
    pub mixup_enabled: bool,
    pub mixup_alpha: f64,
    pub mixup_heads: MixupHeads,
    /// Fill color for pixels rotated in from outside the frame.
    pub fill: [f32; 3],
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            hflip_prob: 0.5,
            vflip_prob: 0.5,
            rotation_deg: 30.0,
            jitter: 0.2,
            mixup_enabled: false,
            mixup_alpha: 0.2,
            mixup_heads: MixupHeads::Both,
            fill: [1.0, 1.0, 1.0],
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), AugmentError> {
        for p in [self.hflip_prob, self.vflip_prob] {
            if !(0.0..=1.0).contains(&p) {
                return Err(AugmentError::InvalidParameter(format!("flip probability {p}")));
            }
        }
        if self.jitter < 0.0 || self.jitter >= 1.0 {
            return Err(AugmentError::InvalidParameter(format!(
                "jitter {} must keep factors positive",
                self.jitter
            )));
        }
        if self.rotation_deg < 0.0 {
            return Err(AugmentError::InvalidParameter("rotation range must be >= 0".into()));
        }
        if self.mixup_enabled && !(self.mixup_alpha > 0.0) {
            return Err(AugmentError::InvalidParameter(format!(
                "mixup alpha {} must be positive",
                self.mixup_alpha
            )));
        }
        Ok(())
    }
}

/// An image in planar 3xHxW form with row-stochastic label vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub image: Tensor<f32>,
    pub y_stress: Vec<f32>,
    pub y_severity: Option<Vec<f32>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeometricOp {
    HFlip,
    VFlip,
    /// Degrees; positive turns the content clockwise on screen.
    Rotate(f32),
}

fn dims(img: &Tensor<f32>) -> Result<(usize, usize), AugmentError> {
    if img.rank() != 3 || img.shape()[0] != 3 {
        return Err(AugmentError::ShapeMismatch(format!(
            "expected 3xHxW image tensor, got {:?}",
            img.shape()
        )));
    }
    Ok((img.shape()[1], img.shape()[2]))
}

pub fn geometric(img: &Tensor<f32>, op: GeometricOp, fill: [f32; 3]) -> Result<Tensor<f32>, AugmentError> {
    let (h, w) = dims(img)?;
    let plane = h * w;
    let src = img.data();
    match op {
        GeometricOp::HFlip => {
            let mut out = vec![0.0f32; 3 * plane];
            for c in 0..3 {
                for y in 0..h {
                    for x in 0..w {
                        out[c * plane + y * w + x] = src[c * plane + y * w + (w - 1 - x)];
                    }
                }
            }
            Ok(Tensor::new(vec![3, h, w], out).expect("same dims"))
        }
        GeometricOp::VFlip => {
            let mut out = vec![0.0f32; 3 * plane];
            for c in 0..3 {
                for y in 0..h {
                    let sy = h - 1 - y;
                    out[c * plane + y * w..c * plane + y * w + w]
                        .copy_from_slice(&src[c * plane + sy * w..c * plane + sy * w + w]);
                }
            }
            Ok(Tensor::new(vec![3, h, w], out).expect("same dims"))
        }
        GeometricOp::Rotate(deg) => {
            if deg == 0.0 {
                return Ok(img.clone());
            }
            let theta = (deg as f64).to_radians();
            let (sin, cos) = (theta.sin() as f32, theta.cos() as f32);
            let cx = (w as f32 - 1.0) / 2.0;
            let cy = (h as f32 - 1.0) / 2.0;
            // Rounding in the rotation can push a boundary sample a few ulp
            // outside the frame; treat those as inside.
            const EDGE_TOL: f32 = 1e-3;
            let mut out = vec![0.0f32; 3 * plane];
            for y in 0..h {
                for x in 0..w {
                    let dx = x as f32 - cx;
                    let dy = y as f32 - cy;
                    let sx = cx + dx * cos + dy * sin;
                    let sy = cy - dx * sin + dy * cos;
                    let idx = y * w + x;
                    if sx < -EDGE_TOL || sy < -EDGE_TOL || sx > (w - 1) as f32 + EDGE_TOL || sy > (h - 1) as f32 + EDGE_TOL {
                        for c in 0..3 {
                            out[c * plane + idx] = fill[c];
                        }
                    } else {
                        let sx = sx.clamp(0.0, (w - 1) as f32);
                        let sy = sy.clamp(0.0, (h - 1) as f32);
                        let x0 = sx.floor() as usize;
                        let y0 = sy.floor() as usize;
                        let x1 = (x0 + 1).min(w - 1);
                        let y1 = (y0 + 1).min(h - 1);
                        let fx = sx - x0 as f32;
                        let fy = sy - y0 as f32;
                        for c in 0..3 {
                            let at = |xx: usize, yy: usize| src[c * plane + yy * w + xx];
                            let top = at(x0, y0) + fx * (at(x1, y0) - at(x0, y0));
                            let bot = at(x0, y1) + fx * (at(x1, y1) - at(x0, y1));
                            out[c * plane + idx] = top + fy * (bot - top);
                        }
                    }
                }
            }
            Ok(Tensor::new(vec![3, h, w], out).expect("same dims"))
        }
    }
}

fn luma(r: f32, g: f32, b: f32) -> f32 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// Brightness, contrast, saturation in that fixed order, each clamped back
/// to [0, 1]. Contrast pivots on the per-image gray mean; saturation blends
/// each pixel with its own luma. A factor of exactly 1 skips its step.
pub fn color_jitter(img: &Tensor<f32>, factors: (f32, f32, f32)) -> Result<Tensor<f32>, AugmentError> {
    let (h, w) = dims(img)?;
    let (b, c, s) = factors;
    for f in [b, c, s] {
        if !(f > 0.0) {
            return Err(AugmentError::InvalidFactor(f));
        }
    }
    let plane = h * w;
    let mut data = img.data().to_vec();

    if b != 1.0 {
        for v in data.iter_mut() {
            *v = (*v * b).clamp(0.0, 1.0);
        }
    }
    if c != 1.0 {
        let mut mean = 0.0f64;
        for p in 0..plane {
            mean += luma(data[p], data[plane + p], data[2 * plane + p]) as f64;
        }
        let mean = (mean / plane as f64) as f32;
        for v in data.iter_mut() {
            *v = (mean + (*v - mean) * c).clamp(0.0, 1.0);
        }
    }
    if s != 1.0 {
        for p in 0..plane {
            let l = luma(data[p], data[plane + p], data[2 * plane + p]);
            for ch in 0..3 {
                let v = data[ch * plane + p];
                data[ch * plane + p] = (l + (v - l) * s).clamp(0.0, 1.0);
            }
        }
    }
    Ok(Tensor::new(vec![3, h, w], data).expect("same dims"))
}

/// Standard augmentation for one sample. Labels pass through untouched.
pub fn standard_augment(
    sample: &LabeledSample,
    cfg: &AugmentConfig,
    stream: &mut RngStream,
) -> Result<LabeledSample, AugmentError> {
    cfg.validate()?;
    // Fixed draw order; all six are consumed even when a step is disabled.
    let u_hflip = stream.uniform01();
    let u_vflip = stream.uniform01();
    let u_angle = stream.uniform01();
    let u_b = stream.uniform01();
    let u_c = stream.uniform01();
    let u_s = stream.uniform01();

    let mut image = sample.image.clone();
    if cfg.hflip_prob > 0.0 && u_hflip < cfg.hflip_prob {
        image = geometric(&image, GeometricOp::HFlip, cfg.fill)?;
    }
    if cfg.vflip_prob > 0.0 && u_vflip < cfg.vflip_prob {
        image = geometric(&image, GeometricOp::VFlip, cfg.fill)?;
    }
    let angle = ((2.0 * u_angle - 1.0) * cfg.rotation_deg) as f32;
    if angle != 0.0 {
        image = geometric(&image, GeometricOp::Rotate(angle), cfg.fill)?;
    }
    let jitter_factor = |u: f64| (1.0 + (2.0 * u - 1.0) * cfg.jitter) as f32;
    let factors = (jitter_factor(u_b), jitter_factor(u_c), jitter_factor(u_s));
    if factors != (1.0, 1.0, 1.0) {
        image = color_jitter(&image, factors)?;
    }
    Ok(LabeledSample {
        image,
        y_stress: sample.y_stress.clone(),
        y_severity: sample.y_severity.clone(),
    })
}

/// Convex combination of two samples: image and every selected label mix as
/// `lambda * a + (1 - lambda) * b`.
pub fn mix_samples(a: &LabeledSample, b: &LabeledSample, lambda: f32, heads: MixupHeads) -> LabeledSample {
    let mix_vec = |x: &[f32], y: &[f32]| -> Vec<f32> {
        x.iter()
            .zip(y)
            .map(|(&xa, &xb)| lambda * xa + (1.0 - lambda) * xb)
            .collect()
    };
    let image_data = mix_vec(a.image.data(), b.image.data());
    let y_stress = match heads {
        MixupHeads::Both | MixupHeads::StressOnly => mix_vec(&a.y_stress, &b.y_stress),
        MixupHeads::SeverityOnly => a.y_stress.clone(),
    };
    let y_severity = match (&a.y_severity, &b.y_severity) {
        (Some(ya), Some(yb)) => Some(match heads {
            MixupHeads::Both | MixupHeads::SeverityOnly => mix_vec(ya, yb),
            MixupHeads::StressOnly => ya.clone(),
        }),
        (Some(ya), None) => Some(ya.clone()),
        _ => None,
    };
    LabeledSample {
        image: Tensor::new(a.image.shape().to_vec(), image_data).expect("same dims"),
        y_stress,
        y_severity,
    }
}

/// Mixup over a batch: each position i draws lambda ~ Beta(alpha, alpha) and
/// a partner from a stream-shuffled permutation (self-pairing allowed, which
/// reproduces the sample unchanged). Consumes `len - 1` ticks for the
/// permutation plus one per lambda.
pub fn mixup_batch(
    batch: &[LabeledSample],
    alpha: f64,
    heads: MixupHeads,
    stream: &mut RngStream,
) -> Result<Vec<LabeledSample>, AugmentError> {
    if batch.len() < 2 {
        return Err(AugmentError::BatchTooSmall(batch.len()));
    }
    if !(alpha > 0.0) {
        return Err(AugmentError::InvalidParameter(format!("alpha {alpha} must be positive")));
    }
    let mut partners: Vec<usize> = (0..batch.len()).collect();
    stream.shuffle(&mut partners);
    let mut out = Vec::with_capacity(batch.len());
    for (i, partner) in partners.iter().enumerate() {
        let lambda = stream
            .beta(alpha, alpha)
            .map_err(|e| AugmentError::InvalidParameter(e.to_string()))? as f32;
        out.push(mix_samples(&batch[i], &batch[*partner], lambda, heads));
    }
    Ok(out)
}
