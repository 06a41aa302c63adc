//! Synthetic leaf-image generator: a white background, one elliptical leaf
//! in a healthy green, and symptom blobs whose hue encodes the stress class
//! and whose exact pixel count lands the severity ratio inside the requested
//! bin. Ground-truth leaf and symptom masks are emitted next to each image,
//! so downstream segmentation can be checked pixel-for-pixel.
//!
//! Layout under the output directory:
//!
//! ```text
//! images/0000.ppm          masks/0000_leaf.ppm   masks/0000_symptom.ppm
//! manifest.csv             (paths relative to the manifest)
//! ```

use super::{save_manifest, DataError, DatasetKind, ManifestRecord, StressClass, STRESS_CLASSES};
use crate::imaging::{
    bin_severity, hsv_pixel_to_rgb, severity_ratio_and_bin, write_ppm, ImageRGB, Mask, SeverityClass,
};
use crate::rng::RngStream;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    /// Images per stress class, in [`STRESS_CLASSES`] order. Healthy images
    /// carry severity `healthy`; the others cycle very_low -> very_high.
    pub per_stress_counts: [usize; 5],
    /// Blob hue (degrees) per stress class; index 0 (healthy) is unused.
    pub hue_per_stress: [f64; 5],
    /// Target symptom-area fraction range per severity class. Each range
    /// must sit strictly inside its severity bin so quantization cannot
    /// push a label across a boundary.
    pub area_ranges: [(f64, f64); 5],
    pub background: [f32; 3],
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            per_stress_counts: [20, 20, 20, 20, 20],
            hue_per_stress: [120.0, 35.0, 0.0, 300.0, 220.0],
            area_ranges: [
                (0.0, 0.0),
                (0.010, 0.040),
                (0.058, 0.092),
                (0.108, 0.142),
                (0.170, 0.280),
            ],
            background: [1.0, 1.0, 1.0],
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.width < 16 || self.height < 16 {
            return Err(DataError::InvalidConfig(format!(
                "image size {}x{} too small",
                self.width, self.height
            )));
        }
        for (rank, &(lo, hi)) in self.area_ranges.iter().enumerate() {
            if lo > hi || lo < 0.0 {
                return Err(DataError::InvalidConfig(format!("area range {rank}: ({lo}, {hi})")));
            }
            let class = SeverityClass::from_rank(rank).expect("five ranges");
            if class != SeverityClass::Healthy
                && (bin_severity(lo) != class || bin_severity(hi) != class)
            {
                return Err(DataError::InvalidConfig(format!(
                    "area range ({lo}, {hi}) leaves the {} bin",
                    class.as_str()
                )));
            }
        }
        Ok(())
    }

    pub fn total_images(&self) -> usize {
        self.per_stress_counts.iter().sum()
    }
}

/// Severity classes a non-healthy image cycles through.
const DISEASED_SEVERITIES: [SeverityClass; 4] = [
    SeverityClass::VeryLow,
    SeverityClass::Low,
    SeverityClass::High,
    SeverityClass::VeryHigh,
];

/// One generated image with its exact ground truth.
pub struct SynthImage {
    pub image: ImageRGB,
    pub leaf_mask: Mask,
    pub symptom_mask: Mask,
    pub stress: StressClass,
    pub severity: SeverityClass,
}

fn uniform_in(stream: &mut RngStream, lo: f64, hi: f64) -> f64 {
    lo + stream.uniform01() * (hi - lo)
}

/// Renders one image deterministically from (config.seed, index).
pub fn render_synth_image(cfg: &SynthConfig, stress: StressClass, severity: SeverityClass, index: u64) -> SynthImage {
    let mut stream = RngStream::keyed(cfg.seed, &[0x5f17, index]);
    let (w, h) = (cfg.width, cfg.height);
    let mut image = ImageRGB::filled(w, h, cfg.background);
    let mut leaf_mask = Mask::new(w, h);
    let mut symptom_mask = Mask::new(w, h);

    // Leaf ellipse with a little positional jitter.
    let cx = w as f64 / 2.0 + uniform_in(&mut stream, -(w as f64) / 16.0, w as f64 / 16.0);
    let cy = h as f64 / 2.0 + uniform_in(&mut stream, -(h as f64) / 16.0, h as f64 / 16.0);
    let rx = uniform_in(&mut stream, 0.28, 0.40) * w as f64;
    let ry = uniform_in(&mut stream, 0.28, 0.40) * h as f64;

    let leaf_hue = uniform_in(&mut stream, 108.0, 132.0) as f32;
    let leaf_s = uniform_in(&mut stream, 0.55, 0.80) as f32;
    let leaf_v = uniform_in(&mut stream, 0.50, 0.75) as f32;
    let (lr, lg, lb) = hsv_pixel_to_rgb(leaf_hue, leaf_s, leaf_v);

    let mut leaf_pixels = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let dx = (x as f64 + 0.5 - cx) / rx;
            let dy = (y as f64 + 0.5 - cy) / ry;
            if dx * dx + dy * dy <= 1.0 {
                leaf_mask.set(x, y, true);
                image.set_pixel(x, y, [lr, lg, lb]);
                leaf_pixels.push((x, y));
            }
        }
    }
    let leaf_px = leaf_pixels.len();

    if severity != SeverityClass::Healthy {
        let (lo, hi) = cfg.area_ranges[severity.rank()];
        let frac = uniform_in(&mut stream, lo, hi);
        // Exact pixel count, clamped so the realized ratio stays in range.
        let min_px = (lo * leaf_px as f64).ceil() as usize;
        let max_px = (hi * leaf_px as f64).floor() as usize;
        let target = ((frac * leaf_px as f64).round() as usize).clamp(min_px.max(1), max_px.max(1));

        let base_hue = cfg.hue_per_stress[stress.index()];
        let mut painted = 0usize;
        while painted < target {
            let (bx, by) = leaf_pixels[stream.below(leaf_px as u64) as usize];
            let radius = 2 + stream.below(4) as i64; // 2..=5
            let hue = {
                let v = base_hue + uniform_in(&mut stream, -8.0, 8.0);
                (if v < 0.0 { v + 360.0 } else { v }) as f32
            };
            let s = uniform_in(&mut stream, 0.60, 0.85) as f32;
            let v = uniform_in(&mut stream, 0.50, 0.80) as f32;
            let (br, bg, bb) = hsv_pixel_to_rgb(hue % 360.0, s, v);
            'disk: for dy in -radius..=radius {
                for dx in -radius..=radius {
                    if dx * dx + dy * dy > radius * radius {
                        continue;
                    }
                    let x = bx as i64 + dx;
                    let y = by as i64 + dy;
                    if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
                        continue;
                    }
                    let (x, y) = (x as usize, y as usize);
                    if leaf_mask.get(x, y) && !symptom_mask.get(x, y) {
                        symptom_mask.set(x, y, true);
                        image.set_pixel(x, y, [br, bg, bb]);
                        painted += 1;
                        if painted == target {
                            break 'disk;
                        }
                    }
                }
            }
        }
    }

    debug_assert_eq!(
        severity_ratio_and_bin(&symptom_mask, &leaf_mask).map(|(_, c)| c).ok(),
        Some(severity)
    );

    SynthImage {
        image,
        leaf_mask,
        symptom_mask,
        stress,
        severity,
    }
}

fn mask_to_image(mask: &Mask) -> ImageRGB {
    let mut img = ImageRGB::new(mask.width, mask.height);
    for (p, &bit) in mask.bits.iter().enumerate() {
        let v = if bit { 1.0 } else { 0.0 };
        img.data[3 * p] = v;
        img.data[3 * p + 1] = v;
        img.data[3 * p + 2] = v;
    }
    img
}

/// Reads back a mask written by [`generate_synthetic`].
pub fn mask_from_image(img: &ImageRGB) -> Mask {
    let mut mask = Mask::new(img.width, img.height);
    for (p, bit) in mask.bits.iter_mut().enumerate() {
        *bit = img.data[3 * p] > 0.5;
    }
    mask
}

/// Ground-truth mask paths for an image path like `images/0004.ppm`.
pub fn mask_paths_for(image_rel: &Path) -> (PathBuf, PathBuf) {
    let stem = image_rel.file_stem().unwrap_or_default().to_string_lossy();
    (
        PathBuf::from("masks").join(format!("{stem}_leaf.ppm")),
        PathBuf::from("masks").join(format!("{stem}_symptom.ppm")),
    )
}

/// Writes the dataset under `out_dir` and returns the manifest path together
/// with the records (paths relative to the manifest).
pub fn generate_synthetic(cfg: &SynthConfig, out_dir: &Path) -> Result<(PathBuf, Vec<ManifestRecord>), DataError> {
    cfg.validate()?;
    let images_dir = out_dir.join("images");
    let masks_dir = out_dir.join("masks");
    std::fs::create_dir_all(&images_dir)?;
    std::fs::create_dir_all(&masks_dir)?;

    let mut records = Vec::new();
    let mut index = 0u64;
    for (ci, &count) in cfg.per_stress_counts.iter().enumerate() {
        let stress = STRESS_CLASSES[ci];
        for i in 0..count {
            let severity = if stress == StressClass::Healthy {
                SeverityClass::Healthy
            } else {
                DISEASED_SEVERITIES[i % DISEASED_SEVERITIES.len()]
            };
            let synth = render_synth_image(cfg, stress, severity, index);
            let rel = PathBuf::from("images").join(format!("{index:04}.ppm"));
            let (leaf_rel, sym_rel) = mask_paths_for(&rel);
            write_ppm(&synth.image, &out_dir.join(&rel))?;
            write_ppm(&mask_to_image(&synth.leaf_mask), &out_dir.join(&leaf_rel))?;
            write_ppm(&mask_to_image(&synth.symptom_mask), &out_dir.join(&sym_rel))?;
            records.push(ManifestRecord {
                path: rel,
                kind: DatasetKind::Leaf,
                stress,
                severity: Some(severity),
                split: None,
            });
            index += 1;
        }
    }
    let manifest_path = out_dir.join("manifest.csv");
    save_manifest(&records, &manifest_path)?;
    Ok((manifest_path, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{read_ppm, segment_leaf, segment_symptoms, SymptomThresholds};

    #[test]
    fn generated_labels_match_ground_truth_masks() {
        let cfg = SynthConfig {
            per_stress_counts: [2, 3, 3, 3, 3],
            seed: 5,
            ..SynthConfig::default()
        };
        let mut index = 0;
        for (ci, &count) in cfg.per_stress_counts.iter().enumerate() {
            for i in 0..count {
                let stress = STRESS_CLASSES[ci];
                let severity = if stress == StressClass::Healthy {
                    SeverityClass::Healthy
                } else {
                    DISEASED_SEVERITIES[i % 4]
                };
                let s = render_synth_image(&cfg, stress, severity, index);
                let (_, computed) = severity_ratio_and_bin(&s.symptom_mask, &s.leaf_mask).unwrap();
                assert_eq!(computed, severity);
                index += 1;
            }
        }
    }

    #[test]
    fn healthy_images_have_zero_symptom_pixels() {
        let cfg = SynthConfig::default();
        let s = render_synth_image(&cfg, StressClass::Healthy, SeverityClass::Healthy, 3);
        assert_eq!(s.symptom_mask.count(), 0);
    }

    #[test]
    fn identical_seeds_identical_bytes() {
        let cfg = SynthConfig {
            per_stress_counts: [1, 1, 0, 0, 0],
            seed: 11,
            ..SynthConfig::default()
        };
        let dir_a = std::env::temp_dir().join("leafnet_synth_a");
        let dir_b = std::env::temp_dir().join("leafnet_synth_b");
        let _ = std::fs::remove_dir_all(&dir_a);
        let _ = std::fs::remove_dir_all(&dir_b);
        generate_synthetic(&cfg, &dir_a).unwrap();
        generate_synthetic(&cfg, &dir_b).unwrap();
        for name in ["images/0000.ppm", "images/0001.ppm", "masks/0001_symptom.ppm", "manifest.csv"] {
            let a = std::fs::read(dir_a.join(name)).unwrap();
            let b = std::fs::read(dir_b.join(name)).unwrap();
            assert_eq!(a, b, "{name} differs");
        }
    }

    #[test]
    fn pipeline_segmentation_reproduces_masks_after_quantization() {
        let cfg = SynthConfig {
            per_stress_counts: [1, 2, 2, 2, 2],
            seed: 23,
            ..SynthConfig::default()
        };
        let dir = std::env::temp_dir().join("leafnet_synth_seg");
        let _ = std::fs::remove_dir_all(&dir);
        let (manifest, records) = generate_synthetic(&cfg, &dir).unwrap();
        let base = manifest.parent().unwrap();
        for rec in &records {
            let img = read_ppm(&base.join(&rec.path)).unwrap();
            let (leaf_rel, sym_rel) = mask_paths_for(&rec.path);
            let truth_leaf = mask_from_image(&read_ppm(&base.join(leaf_rel)).unwrap());
            let truth_sym = mask_from_image(&read_ppm(&base.join(sym_rel)).unwrap());
            let leaf = segment_leaf(&img, 0.25).unwrap();
            assert_eq!(leaf, truth_leaf, "{:?}", rec.path);
            let sym = segment_symptoms(&img, &leaf, &SymptomThresholds::default()).unwrap();
            assert_eq!(sym, truth_sym, "{:?}", rec.path);
            let (_, severity) = severity_ratio_and_bin(&sym, &leaf).unwrap();
            assert_eq!(Some(severity), rec.severity, "{:?}", rec.path);
        }
    }

    #[test]
    fn invalid_area_range_rejected() {
        let mut cfg = SynthConfig::default();
        cfg.area_ranges[1] = (0.01, 0.30); // leaves the very_low bin
        assert!(cfg.validate().is_err());
    }
}
