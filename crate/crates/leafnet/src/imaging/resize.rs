//! Bilinear resize with half-pixel center alignment, and mask-driven
//! crop-and-resize.

use super::{ImageError, ImageRGB, Mask};

/// Bilinear sample of one channel at (sx, sy), clamped to the image rect.
/// The result is clamped to the range of the four contributing pixels so
/// rounding can never push a value outside the source range.
fn sample_channel(img: &ImageRGB, c: usize, sx: f32, sy: f32) -> f32 {
    let w = img.width;
    let h = img.height;
    let sx = sx.clamp(0.0, (w - 1) as f32);
    let sy = sy.clamp(0.0, (h - 1) as f32);
    let x0 = sx.floor() as usize;
    let y0 = sy.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = sx - x0 as f32;
    let fy = sy - y0 as f32;
    let at = |x: usize, y: usize| img.data[3 * (y * w + x) + c];
    let p00 = at(x0, y0);
    let p01 = at(x1, y0);
    let p10 = at(x0, y1);
    let p11 = at(x1, y1);
    let top = p00 + fx * (p01 - p00);
    let bot = p10 + fx * (p11 - p10);
    let v = top + fy * (bot - top);
    let lo = p00.min(p01).min(p10).min(p11);
    let hi = p00.max(p01).max(p10).max(p11);
    v.clamp(lo, hi)
}

/// Resizes to `out_h x out_w`. Source coordinates use half-pixel centers:
/// `sx = (ox + 0.5) * w_in / w_out - 0.5`.
pub fn bilinear_resize(img: &ImageRGB, out_h: usize, out_w: usize) -> Result<ImageRGB, ImageError> {
    if out_h == 0 || out_w == 0 {
        return Err(ImageError::InvalidParameter("output size must be positive".into()));
    }
    let mut out = ImageRGB::new(out_w, out_h);
    let x_scale = img.width as f32 / out_w as f32;
    let y_scale = img.height as f32 / out_h as f32;
    for oy in 0..out_h {
        let sy = (oy as f32 + 0.5) * y_scale - 0.5;
        for ox in 0..out_w {
            let sx = (ox as f32 + 0.5) * x_scale - 0.5;
            for c in 0..3 {
                out.data[3 * (oy * out_w + ox) + c] = sample_channel(img, c, sx, sy);
            }
        }
    }
    Ok(out)
}

/// Crops to the mask's bounding box expanded by `margin_frac` of each box
/// dimension (clamped to the image), then bilinearly resizes to `out_size`.
pub fn crop_and_resize(
    img: &ImageRGB,
    leaf_mask: &Mask,
    margin_frac: f32,
    out_size: (usize, usize),
) -> Result<ImageRGB, ImageError> {
    if !(0.0..0.5).contains(&margin_frac) {
        return Err(ImageError::InvalidParameter(format!(
            "margin_frac must be in [0, 0.5), got {margin_frac}"
        )));
    }
    if leaf_mask.width != img.width || leaf_mask.height != img.height {
        return Err(ImageError::ShapeMismatch(format!(
            "mask {}x{} vs image {}x{}",
            leaf_mask.width, leaf_mask.height, img.width, img.height
        )));
    }
    let (x0, y0, x1, y1) = leaf_mask.bounding_box().ok_or(ImageError::EmptyMask)?;
    let bw = (x1 - x0 + 1) as f32;
    let bh = (y1 - y0 + 1) as f32;
    let mx = (bw * margin_frac).round() as usize;
    let my = (bh * margin_frac).round() as usize;
    let cx0 = x0.saturating_sub(mx);
    let cy0 = y0.saturating_sub(my);
    let cx1 = (x1 + mx).min(img.width - 1);
    let cy1 = (y1 + my).min(img.height - 1);

    let cw = cx1 - cx0 + 1;
    let ch = cy1 - cy0 + 1;
    let mut crop = ImageRGB::new(cw, ch);
    for y in 0..ch {
        for x in 0..cw {
            crop.set_pixel(x, y, img.pixel(cx0 + x, cy0 + y));
        }
    }
    bilinear_resize(&crop, out_size.0, out_size.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent per-pixel oracle with the same half-pixel convention but
    // a plainly written weighted sum.
    fn oracle_resize(img: &ImageRGB, out_h: usize, out_w: usize) -> ImageRGB {
        let mut out = ImageRGB::new(out_w, out_h);
        for oy in 0..out_h {
            for ox in 0..out_w {
                let sx = ((ox as f64 + 0.5) * img.width as f64 / out_w as f64 - 0.5)
                    .clamp(0.0, (img.width - 1) as f64);
                let sy = ((oy as f64 + 0.5) * img.height as f64 / out_h as f64 - 0.5)
                    .clamp(0.0, (img.height - 1) as f64);
                let x0 = sx.floor() as usize;
                let y0 = sy.floor() as usize;
                let x1 = (x0 + 1).min(img.width - 1);
                let y1 = (y0 + 1).min(img.height - 1);
                let fx = sx - x0 as f64;
                let fy = sy - y0 as f64;
                for c in 0..3 {
                    let at = |x: usize, y: usize| img.data[3 * (y * img.width + x) + c] as f64;
                    let v = at(x0, y0) * (1.0 - fx) * (1.0 - fy)
                        + at(x1, y0) * fx * (1.0 - fy)
                        + at(x0, y1) * (1.0 - fx) * fy
                        + at(x1, y1) * fx * fy;
                    out.data[3 * (oy * out_w + ox) + c] = v as f32;
                }
            }
        }
        out
    }

    #[test]
    fn checkerboard_upscale_matches_oracle() {
        let mut img = ImageRGB::new(2, 2);
        img.set_pixel(0, 0, [1.0, 1.0, 1.0]);
        img.set_pixel(1, 0, [0.0, 0.0, 0.0]);
        img.set_pixel(0, 1, [0.0, 0.0, 0.0]);
        img.set_pixel(1, 1, [1.0, 1.0, 1.0]);
        let got = bilinear_resize(&img, 4, 4).unwrap();
        let want = oracle_resize(&img, 4, 4);
        for (a, b) in got.data.iter().zip(&want.data) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        // Corner output pixels keep the source corner values.
        assert_eq!(got.pixel(0, 0), [1.0, 1.0, 1.0]);
        assert_eq!(got.pixel(3, 3), [1.0, 1.0, 1.0]);
        assert_eq!(got.pixel(3, 0), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn random_resizes_match_oracle() {
        let mut rng = crate::rng::RngStream::new(44, 0);
        for &(w, h, ow, oh) in &[(7usize, 5usize, 13usize, 9usize), (12, 12, 5, 7), (3, 8, 8, 3)] {
            let mut img = ImageRGB::new(w, h);
            for v in img.data.iter_mut() {
                *v = rng.uniform01() as f32;
            }
            let got = bilinear_resize(&img, oh, ow).unwrap();
            let want = oracle_resize(&img, oh, ow);
            for (a, b) in got.data.iter().zip(&want.data) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = ImageRGB::filled(5, 3, [0.3, 0.6, 0.9]);
        let out = bilinear_resize(&img, 11, 17).unwrap();
        for p in 0..11 * 17 {
            assert_eq!(out.data[3 * p], 0.3);
            assert_eq!(out.data[3 * p + 1], 0.6);
            assert_eq!(out.data[3 * p + 2], 0.9);
        }
    }

    #[test]
    fn full_mask_zero_margin_is_plain_resize() {
        let mut rng = crate::rng::RngStream::new(45, 0);
        let mut img = ImageRGB::new(6, 6);
        for v in img.data.iter_mut() {
            *v = rng.uniform01() as f32;
        }
        let mut mask = Mask::new(6, 6);
        mask.bits.iter_mut().for_each(|b| *b = true);
        let a = crop_and_resize(&img, &mask, 0.0, (4, 4)).unwrap();
        let b = bilinear_resize(&img, 4, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn output_dims_and_range() {
        let mut rng = crate::rng::RngStream::new(46, 0);
        let mut img = ImageRGB::new(9, 7);
        for v in img.data.iter_mut() {
            *v = rng.uniform01() as f32;
        }
        let mut mask = Mask::new(9, 7);
        for y in 2..5 {
            for x in 3..8 {
                mask.set(x, y, true);
            }
        }
        let out = crop_and_resize(&img, &mask, 0.1, (16, 10)).unwrap();
        assert_eq!((out.height, out.width), (16, 10));
        let lo = img.data.iter().cloned().fold(f32::INFINITY, f32::min);
        let hi = img.data.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        for &v in &out.data {
            assert!(v >= lo && v <= hi);
        }
    }

    #[test]
    fn empty_mask_is_error() {
        let img = ImageRGB::filled(4, 4, [0.5; 3]);
        let mask = Mask::new(4, 4);
        assert!(matches!(
            crop_and_resize(&img, &mask, 0.1, (4, 4)),
            Err(ImageError::EmptyMask)
        ));
    }
}
