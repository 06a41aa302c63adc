//! Image decoding, HSV segmentation, crop-and-resize, and severity binning.

mod hsv;
mod ppm;
mod resize;
mod segment;

pub use hsv::{hsv_pixel_to_rgb, hsv_to_rgb, rgb_pixel_to_hsv, rgb_to_hsv, HsvPlanes};
pub use ppm::{decode_image, encode_ppm, read_ppm, write_ppm, ImageFormat};
pub use resize::{bilinear_resize, crop_and_resize};
pub use segment::{largest_component, segment_leaf, segment_symptoms, SymptomThresholds};

use thiserror::Error;

#[derive(Error, Debug)]
pub enum ImageError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncated pixel data: expected {expected} bytes, got {got}")]
    TruncatedPixelData { expected: usize, got: usize },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("no leaf found: no pixel passes the saturation threshold")]
    NoLeafFound,
    #[error("empty mask")]
    EmptyMask,
    #[error("empty leaf mask")]
    EmptyLeafMask,
    #[error("symptom mask contains pixels outside the leaf mask")]
    SymptomOutsideLeaf,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// RGB image with float channels in [0, 1], row-major, interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRGB {
    pub width: usize,
    pub height: usize,
    /// `3 * width * height` values: r, g, b per pixel.
    pub data: Vec<f32>,
}

impl ImageRGB {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; 3 * width * height],
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let mut img = Self::new(width, height);
        for p in 0..width * height {
            img.data[3 * p] = rgb[0];
            img.data[3 * p + 1] = rgb[1];
            img.data[3 * p + 2] = rgb[2];
        }
        img
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let p = 3 * (y * self.width + x);
        [self.data[p], self.data[p + 1], self.data[p + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let p = 3 * (y * self.width + x);
        self.data[p] = rgb[0];
        self.data[p + 1] = rgb[1];
        self.data[p + 2] = rgb[2];
    }

    /// Planar 3xHxW tensor for the network input path.
    pub fn to_tensor(&self) -> crate::tensor::Tensor<f32> {
        let plane = self.width * self.height;
        let mut data = vec![0.0f32; 3 * plane];
        for p in 0..plane {
            data[p] = self.data[3 * p];
            data[plane + p] = self.data[3 * p + 1];
            data[2 * plane + p] = self.data[3 * p + 2];
        }
        crate::tensor::Tensor::new(vec![3, self.height, self.width], data).expect("consistent dims")
    }

    pub fn from_tensor(t: &crate::tensor::Tensor<f32>) -> Result<Self, ImageError> {
        if t.rank() != 3 || t.shape()[0] != 3 {
            return Err(ImageError::ShapeMismatch(format!(
                "expected 3xHxW tensor, got {:?}",
                t.shape()
            )));
        }
        let (h, w) = (t.shape()[1], t.shape()[2]);
        let plane = h * w;
        let mut img = ImageRGB::new(w, h);
        for p in 0..plane {
            img.data[3 * p] = t.data()[p];
            img.data[3 * p + 1] = t.data()[plane + p];
            img.data[3 * p + 2] = t.data()[2 * plane + p];
        }
        Ok(img)
    }
}

/// Boolean pixel map paired with image dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Tight bounding box (x0, y0, x1, y1) inclusive, or None when empty.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    bb = Some(match bb {
                        None => (x, y, x, y),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                    });
                }
            }
        }
        bb
    }
}

/// Ordinal severity classes derived from the symptomatic-area ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SeverityClass {
    Healthy,
    VeryLow,
    Low,
    High,
    VeryHigh,
}

pub const SEVERITY_CLASSES: [SeverityClass; 5] = [
    SeverityClass::Healthy,
    SeverityClass::VeryLow,
    SeverityClass::Low,
    SeverityClass::High,
    SeverityClass::VeryHigh,
];

impl SeverityClass {
    pub fn rank(&self) -> usize {
        match self {
            SeverityClass::Healthy => 0,
            SeverityClass::VeryLow => 1,
            SeverityClass::Low => 2,
            SeverityClass::High => 3,
            SeverityClass::VeryHigh => 4,
        }
    }

    pub fn from_rank(rank: usize) -> Option<Self> {
        SEVERITY_CLASSES.get(rank).copied()
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SeverityClass::Healthy => "healthy",
            SeverityClass::VeryLow => "very_low",
            SeverityClass::Low => "low",
            SeverityClass::High => "high",
            SeverityClass::VeryHigh => "very_high",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        SEVERITY_CLASSES.iter().copied().find(|c| c.as_str() == s)
    }
}

/// Bins a continuous symptomatic-area ratio. Half-open interval convention:
/// healthy r < 0.001, very_low 0.001 <= r <= 0.05, low (0.05, 0.10],
/// high (0.10, 0.15], very_high r > 0.15.
pub fn bin_severity(ratio: f64) -> SeverityClass {
    if ratio < 0.001 {
        SeverityClass::Healthy
    } else if ratio <= 0.05 {
        SeverityClass::VeryLow
    } else if ratio <= 0.10 {
        SeverityClass::Low
    } else if ratio <= 0.15 {
        SeverityClass::High
    } else {
        SeverityClass::VeryHigh
    }
}

/// Symptomatic-area fraction of the leaf and its severity bin.
pub fn severity_ratio_and_bin(symptom: &Mask, leaf: &Mask) -> Result<(f64, SeverityClass), ImageError> {
    if symptom.width != leaf.width || symptom.height != leaf.height {
        return Err(ImageError::ShapeMismatch(format!(
            "symptom {}x{} vs leaf {}x{}",
            symptom.width, symptom.height, leaf.width, leaf.height
        )));
    }
    let leaf_px = leaf.count();
    if leaf_px == 0 {
        return Err(ImageError::EmptyLeafMask);
    }
    if !symptom.is_subset_of(leaf) {
        return Err(ImageError::SymptomOutsideLeaf);
    }
    let ratio = symptom.count() as f64 / leaf_px as f64;
    Ok((ratio, bin_severity(ratio)))
}
