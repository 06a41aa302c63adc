//! PPM P6 (binary, 8-bit) reader and writer, bit-exact round trip.
//! PNG decoding is available behind the `png` cargo feature.

use super::{ImageError, ImageRGB};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    PpmP6,
    Png,
}

/// Decodes image bytes in the declared format; channels map to [0, 1] by
/// dividing by 255.
pub fn decode_image(bytes: &[u8], format: ImageFormat) -> Result<ImageRGB, ImageError> {
    match format {
        ImageFormat::PpmP6 => decode_ppm(bytes),
        ImageFormat::Png => decode_png(bytes),
    }
}

#[cfg(feature = "png")]
fn decode_png(bytes: &[u8]) -> Result<ImageRGB, ImageError> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| ImageError::MalformedHeader(format!("png: {e}")))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = ImageRGB::new(w, h);
    for (i, px) in img.pixels().enumerate() {
        out.data[3 * i] = px.0[0] as f32 / 255.0;
        out.data[3 * i + 1] = px.0[1] as f32 / 255.0;
        out.data[3 * i + 2] = px.0[2] as f32 / 255.0;
    }
    Ok(out)
}

#[cfg(not(feature = "png"))]
fn decode_png(_bytes: &[u8]) -> Result<ImageRGB, ImageError> {
    Err(ImageError::UnsupportedFormat(
        "png support requires the `png` cargo feature".into(),
    ))
}

/// Consumes one whitespace/comment-separated ASCII token from a PPM header.
fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8], ImageError> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(ImageError::MalformedHeader("unexpected end of header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn parse_number(token: &[u8]) -> Result<usize, ImageError> {
    std::str::from_utf8(token)
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .ok_or_else(|| ImageError::MalformedHeader(format!("expected number, got {:?}", String::from_utf8_lossy(token))))
}

fn decode_ppm(bytes: &[u8]) -> Result<ImageRGB, ImageError> {
    let mut pos = 0usize;
    let magic = next_token(bytes, &mut pos)?;
    if magic != b"P6" {
        return Err(ImageError::MalformedHeader(format!(
            "expected magic P6, got {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let width = parse_number(next_token(bytes, &mut pos)?)?;
    let height = parse_number(next_token(bytes, &mut pos)?)?;
    let maxval = parse_number(next_token(bytes, &mut pos)?)?;
    if maxval != 255 {
        return Err(ImageError::UnsupportedFormat(format!(
            "only 8-bit PPM supported, maxval {maxval}"
        )));
    }
    if width == 0 || height == 0 {
        return Err(ImageError::MalformedHeader("zero image dimension".into()));
    }
    // Exactly one whitespace byte separates header and pixel data.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(ImageError::MalformedHeader("missing separator after maxval".into()));
    }
    pos += 1;
    let expected = width * height * 3;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(ImageError::TruncatedPixelData {
            expected,
            got: payload.len(),
        });
    }
    let mut img = ImageRGB::new(width, height);
    for (i, &b) in payload[..expected].iter().enumerate() {
        img.data[i] = b as f32 / 255.0;
    }
    Ok(img)
}

/// Canonical PPM P6 bytes: `P6\n<w> <h>\n255\n` followed by raw RGB.
/// Channels are clamped to [0, 1] and quantized by round(v * 255).
pub fn encode_ppm(img: &ImageRGB) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.reserve(img.data.len());
    for &v in &img.data {
        out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
    }
    out
}

pub fn write_ppm(img: &ImageRGB, path: &Path) -> Result<(), ImageError> {
    std::fs::write(path, encode_ppm(img))?;
    Ok(())
}

pub fn read_ppm(path: &Path) -> Result<ImageRGB, ImageError> {
    let bytes = std::fs::read(path)?;
    decode_ppm(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_two_pixel_image() {
        let bytes = b"P6\n2 1\n255\n\xff\x00\x00\x00\xff\x00";
        let img = decode_image(bytes, ImageFormat::PpmP6).unwrap();
        assert_eq!((img.width, img.height), (2, 1));
        assert_eq!(img.pixel(0, 0), [1.0, 0.0, 0.0]);
        assert_eq!(img.pixel(1, 0), [0.0, 1.0, 0.0]);
    }

    #[test]
    fn p3_magic_rejected() {
        let bytes = b"P3\n2 1\n255\n255 0 0 0 255 0";
        assert!(matches!(
            decode_image(bytes, ImageFormat::PpmP6),
            Err(ImageError::MalformedHeader(_))
        ));
    }

    #[test]
    fn truncated_pixels_rejected() {
        // Declares 4 pixels, carries 3.
        let bytes = b"P6\n2 2\n255\n\x01\x02\x03\x04\x05\x06\x07\x08\x09";
        match decode_image(bytes, ImageFormat::PpmP6) {
            Err(ImageError::TruncatedPixelData { expected: 12, got: 9 }) => {}
            other => panic!("expected TruncatedPixelData, got {other:?}"),
        }
    }

    #[test]
    fn header_comments_are_skipped() {
        let bytes = b"P6\n# a comment\n1 1\n255\n\x10\x20\x30";
        let img = decode_image(bytes, ImageFormat::PpmP6).unwrap();
        assert_eq!(img.pixel(0, 0), [16.0 / 255.0, 32.0 / 255.0, 48.0 / 255.0]);
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let mut img = ImageRGB::new(5, 4);
        let mut rng = crate::rng::RngStream::new(31, 0);
        for v in img.data.iter_mut() {
            *v = (rng.below(256) as f32) / 255.0;
        }
        let bytes = encode_ppm(&img);
        let back = decode_image(&bytes, ImageFormat::PpmP6).unwrap();
        assert_eq!(back, img);
        // Writer output re-encodes to identical bytes.
        assert_eq!(encode_ppm(&back), bytes);
    }

    #[cfg(not(feature = "png"))]
    #[test]
    fn png_without_feature_is_unsupported() {
        assert!(matches!(
            decode_image(b"\x89PNG", ImageFormat::Png),
            Err(ImageError::UnsupportedFormat(_))
        ));
    }
}
