//! Hexcone RGB <-> HSV conversion. H is in degrees [0, 360) with achromatic
//! pixels (S = 0) assigned H = 0; S and V are in [0, 1].

use super::ImageRGB;

/// Per-pixel H, S, V planes for one image.
#[derive(Debug, Clone)]
pub struct HsvPlanes {
    pub width: usize,
    pub height: usize,
    pub h: Vec<f32>,
    pub s: Vec<f32>,
    pub v: Vec<f32>,
}

pub fn rgb_pixel_to_hsv(r: f32, g: f32, b: f32) -> (f32, f32, f32) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        let mut h = 60.0 * ((g - b) / delta);
        if h < 0.0 {
            h += 360.0;
        }
        h
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let h = if h >= 360.0 { h - 360.0 } else { h };
    (h, s, v)
}

pub fn hsv_pixel_to_rgb(h: f32, s: f32, v: f32) -> (f32, f32, f32) {
    if s <= 0.0 {
        return (v, v, v);
    }
    let h = if h >= 360.0 { h - 360.0 } else { h } / 60.0;
    let sector = h.floor() as i32 % 6;
    let f = h - h.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

pub fn rgb_to_hsv(img: &ImageRGB) -> HsvPlanes {
    let n = img.width * img.height;
    let mut planes = HsvPlanes {
        width: img.width,
        height: img.height,
        h: vec![0.0; n],
        s: vec![0.0; n],
        v: vec![0.0; n],
    };
    for p in 0..n {
        let (h, s, v) = rgb_pixel_to_hsv(img.data[3 * p], img.data[3 * p + 1], img.data[3 * p + 2]);
        planes.h[p] = h;
        planes.s[p] = s;
        planes.v[p] = v;
    }
    planes
}

pub fn hsv_to_rgb(planes: &HsvPlanes) -> ImageRGB {
    let mut img = ImageRGB::new(planes.width, planes.height);
    for p in 0..planes.width * planes.height {
        let (r, g, b) = hsv_pixel_to_rgb(planes.h[p], planes.s[p], planes.v[p]);
        img.data[3 * p] = r;
        img.data[3 * p + 1] = g;
        img.data[3 * p + 2] = b;
    }
    img
}
