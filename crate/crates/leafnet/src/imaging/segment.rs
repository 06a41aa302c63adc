//! Threshold-based leaf and symptom segmentation in HSV space.

use super::{rgb_to_hsv, ImageError, ImageRGB, Mask};

/// Largest 4-connected component of a mask. Components are discovered in
/// row-major scan order; equal sizes keep the first-found component.
pub fn largest_component(mask: &Mask) -> Mask {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![0u32; w * h];
    let mut best_label = 0u32;
    let mut best_size = 0usize;
    let mut next = 1u32;
    let mut queue = Vec::new();
    for start in 0..w * h {
        if !mask.bits[start] || labels[start] != 0 {
            continue;
        }
        let label = next;
        next += 1;
        let mut size = 0usize;
        queue.clear();
        queue.push(start);
        labels[start] = label;
        while let Some(p) = queue.pop() {
            size += 1;
            let (x, y) = (p % w, p / w);
            let mut push = |q: usize| {
                if mask.bits[q] && labels[q] == 0 {
                    labels[q] = label;
                    queue.push(q);
                }
            };
            if x > 0 {
                push(p - 1);
            }
            if x + 1 < w {
                push(p + 1);
            }
            if y > 0 {
                push(p - w);
            }
            if y + 1 < h {
                push(p + w);
            }
        }
        if size > best_size {
            best_size = size;
            best_label = label;
        }
    }
    let mut out = Mask::new(w, h);
    if best_label != 0 {
        for (o, &l) in out.bits.iter_mut().zip(&labels) {
            *o = l == best_label;
        }
    }
    out
}

/// Leaf mask: pixels whose saturation reaches `s_threshold`, reduced to the
/// largest 4-connected component. A saturated leaf separates cleanly from a
/// white background, whose saturation is near zero.
pub fn segment_leaf(img: &ImageRGB, s_threshold: f32) -> Result<Mask, ImageError> {
    if !(s_threshold > 0.0 && s_threshold < 1.0) {
        return Err(ImageError::InvalidParameter(format!(
            "s_threshold must be in (0, 1), got {s_threshold}"
        )));
    }
    let hsv = rgb_to_hsv(img);
    let mut mask = Mask::new(img.width, img.height);
    for (bit, &s) in mask.bits.iter_mut().zip(&hsv.s) {
        *bit = s >= s_threshold;
    }
    if mask.count() == 0 {
        return Err(ImageError::NoLeafFound);
    }
    Ok(largest_component(&mask))
}

/// Thresholds for the symptom rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymptomThresholds {
    /// Healthy-green hue window in degrees, inclusive.
    pub hue_lo: f32,
    pub hue_hi: f32,
    /// Minimum saturation for a pixel to be judged at all.
    pub s_min: f32,
    /// Value at or below which a pixel counts as dark necrosis.
    pub v_max: f32,
}

impl Default for SymptomThresholds {
    fn default() -> Self {
        Self {
            hue_lo: 60.0,
            hue_hi: 170.0,
            s_min: 0.15,
            v_max: 0.35,
        }
    }
}

/// Symptom mask within a leaf: a leaf pixel with S >= s_min is symptomatic
/// when its hue leaves the healthy-green window or its value drops to the
/// dark-necrosis level. Always a subset of `leaf_mask`.
pub fn segment_symptoms(
    img: &ImageRGB,
    leaf_mask: &Mask,
    thresholds: &SymptomThresholds,
) -> Result<Mask, ImageError> {
    if leaf_mask.width != img.width || leaf_mask.height != img.height {
        return Err(ImageError::ShapeMismatch(format!(
            "leaf mask {}x{} vs image {}x{}",
            leaf_mask.width, leaf_mask.height, img.width, img.height
        )));
    }
    if leaf_mask.count() == 0 {
        return Err(ImageError::EmptyMask);
    }
    let hsv = rgb_to_hsv(img);
    let mut out = Mask::new(img.width, img.height);
    for p in 0..img.width * img.height {
        if !leaf_mask.bits[p] || hsv.s[p] < thresholds.s_min {
            continue;
        }
        let hue_outside = hsv.h[p] < thresholds.hue_lo || hsv.h[p] > thresholds.hue_hi;
        let dark = hsv.v[p] <= thresholds.v_max;
        out.bits[p] = hue_outside || dark;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::hsv_pixel_to_rgb;

    fn white_canvas(w: usize, h: usize) -> ImageRGB {
        ImageRGB::filled(w, h, [1.0, 1.0, 1.0])
    }

    fn paint_rect(img: &mut ImageRGB, x0: usize, y0: usize, x1: usize, y1: usize, hsv: (f32, f32, f32)) {
        let (r, g, b) = hsv_pixel_to_rgb(hsv.0, hsv.1, hsv.2);
        for y in y0..=y1 {
            for x in x0..=x1 {
                img.set_pixel(x, y, [r, g, b]);
            }
        }
    }

    #[test]
    fn rectangle_on_white_segments_exactly() {
        let mut img = white_canvas(20, 15);
        paint_rect(&mut img, 4, 3, 12, 9, (120.0, 0.8, 0.6));
        let mask = segment_leaf(&img, 0.25).unwrap();
        for y in 0..15 {
            for x in 0..20 {
                let inside = (4..=12).contains(&x) && (3..=9).contains(&y);
                assert_eq!(mask.get(x, y), inside, "pixel {x},{y}");
            }
        }
    }

    #[test]
    fn all_white_has_no_leaf() {
        let img = white_canvas(8, 8);
        assert!(matches!(segment_leaf(&img, 0.25), Err(ImageError::NoLeafFound)));
    }

    #[test]
    fn largest_blob_wins() {
        let mut img = white_canvas(30, 10);
        paint_rect(&mut img, 1, 1, 10, 8, (120.0, 0.8, 0.6)); // 80 px
        paint_rect(&mut img, 20, 2, 25, 5, (120.0, 0.8, 0.6)); // 24 px
        let mask = segment_leaf(&img, 0.25).unwrap();
        assert_eq!(mask.count(), 80);
        assert!(mask.get(5, 5));
        assert!(!mask.get(22, 3));
    }

    #[test]
    fn uniformly_green_leaf_has_no_symptoms() {
        let mut img = white_canvas(16, 16);
        paint_rect(&mut img, 2, 2, 13, 13, (120.0, 0.7, 0.6));
        let leaf = segment_leaf(&img, 0.25).unwrap();
        let sym = segment_symptoms(&img, &leaf, &SymptomThresholds::default()).unwrap();
        assert_eq!(sym.count(), 0);
    }

    #[test]
    fn orange_blob_is_the_symptom_mask() {
        let mut img = white_canvas(16, 16);
        paint_rect(&mut img, 2, 2, 13, 13, (120.0, 0.7, 0.6));
        paint_rect(&mut img, 5, 5, 8, 8, (30.0, 0.8, 0.7));
        let leaf = segment_leaf(&img, 0.25).unwrap();
        let sym = segment_symptoms(&img, &leaf, &SymptomThresholds::default()).unwrap();
        assert_eq!(sym.count(), 16);
        for y in 0..16 {
            for x in 0..16 {
                let inside = (5..=8).contains(&x) && (5..=8).contains(&y);
                assert_eq!(sym.get(x, y), inside);
            }
        }
        assert!(sym.is_subset_of(&leaf));
    }

    #[test]
    fn symptom_mask_is_subset_even_with_wild_thresholds() {
        let mut img = white_canvas(12, 12);
        paint_rect(&mut img, 1, 1, 10, 10, (120.0, 0.7, 0.6));
        paint_rect(&mut img, 2, 2, 4, 4, (300.0, 0.9, 0.5));
        let leaf = segment_leaf(&img, 0.25).unwrap();
        let t = SymptomThresholds {
            hue_lo: 119.0,
            hue_hi: 121.0,
            s_min: 0.01,
            v_max: 0.9,
        };
        let sym = segment_symptoms(&img, &leaf, &t).unwrap();
        assert!(sym.is_subset_of(&leaf));
    }

    #[test]
    fn segment_leaf_is_idempotent_on_masked_region() {
        let mut img = white_canvas(20, 20);
        paint_rect(&mut img, 3, 4, 15, 16, (110.0, 0.65, 0.55));
        let mask1 = segment_leaf(&img, 0.25).unwrap();
        // Re-apply on an image where everything outside mask1 is blanked.
        let mut masked = white_canvas(20, 20);
        for y in 0..20 {
            for x in 0..20 {
                if mask1.get(x, y) {
                    masked.set_pixel(x, y, img.pixel(x, y));
                }
            }
        }
        let mask2 = segment_leaf(&masked, 0.25).unwrap();
        assert_eq!(mask1, mask2);
    }
}
