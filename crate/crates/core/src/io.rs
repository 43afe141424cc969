//! Image file I/O: 8-bit PNG (gray/RGB) and binary PGM (P5) / PPM (P6).

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::{ColorType, DynamicImage, ImageFormat};

use crate::error::{Error, Result};
use crate::image::ImageU8;

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Decodes a PNG, PPM (P6) or PGM (P5) file. Alpha channels are dropped.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageU8> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}

/// Decodes an in-memory image, sniffing the format from its leading bytes.
pub fn decode_image(bytes: &[u8]) -> Result<ImageU8> {
    if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(bytes)
    } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        decode_pnm(bytes)
    } else if bytes.len() >= 2 && bytes[0] == b'P' && bytes[1].is_ascii_digit() {
        Err(Error::format("PNM", format!("unsupported variant P{}", bytes[1] as char)))
    } else {
        Err(Error::format("image", "unrecognized file signature (expected PNG, P5 or P6)"))
    }
}

/// Writes `img`; the format follows the extension (`.png`, or `.ppm`/`.pgm`/`.pnm`).
/// PNM output picks P5 for one channel and P6 for three.
pub fn save_image(img: &ImageU8, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let bytes = match ext.as_str() {
        "png" => encode_png(img)?,
        "ppm" | "pgm" | "pnm" => encode_pnm(img),
        other => {
            return Err(Error::format("image", format!("unsupported output extension {other:?}")));
        }
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_pnm(img: &ImageU8) -> Vec<u8> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.to_interleaved());
    out
}

fn decode_pnm(bytes: &[u8]) -> Result<ImageU8> {
    let channels = if &bytes[..2] == b"P5" { 1 } else { 3 };
    let fmt = if channels == 1 { "PGM" } else { "PPM" };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for (k, name) in ["width", "height", "maxval"].iter().enumerate() {
        // Skip whitespace and comments.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(fmt, format!("missing or malformed {name}")));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        fields[k] = text
            .parse()
            .map_err(|_| Error::format(fmt, format!("{name} out of range: {text}")))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::format(fmt, "header must end with a single whitespace byte"));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::format(fmt, format!("unsupported bit depth (maxval {maxval}, need 255)")));
    }
    if width == 0 || height == 0 {
        return Err(Error::format(fmt, "zero image dimension"));
    }
    let n = width
        .checked_mul(height)
        .and_then(|v| v.checked_mul(channels))
        .ok_or_else(|| Error::format(fmt, "image dimensions overflow"))?;
    let payload = &bytes[pos..];
    if payload.len() < n {
        return Err(Error::format(fmt, format!("truncated pixel data: {} of {n} bytes", payload.len())));
    }
    ImageU8::from_interleaved(height, width, channels, &payload[..n])
}

fn decode_png(bytes: &[u8]) -> Result<ImageU8> {
    let decoded = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::format("PNG", e.to_string()))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    match decoded.color() {
        ColorType::L8 => ImageU8::from_interleaved(h, w, 1, decoded.as_bytes()),
        ColorType::La8 => ImageU8::from_interleaved(h, w, 1, decoded.to_luma8().as_raw()),
        ColorType::Rgb8 => ImageU8::from_interleaved(h, w, 3, decoded.as_bytes()),
        ColorType::Rgba8 => ImageU8::from_interleaved(h, w, 3, decoded.to_rgb8().as_raw()),
        other => Err(Error::format("PNG", format!("unsupported color type / bit depth {other:?}"))),
    }
}

pub fn encode_png(img: &ImageU8) -> Result<Vec<u8>> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let pixels = img.to_interleaved();
    let dynamic = if img.channels() == 1 {
        image::GrayImage::from_raw(w, h, pixels).map(DynamicImage::ImageLuma8)
    } else {
        image::RgbImage::from_raw(w, h, pixels).map(DynamicImage::ImageRgb8)
    }
    .ok_or_else(|| Error::format("PNG", "pixel buffer does not match dimensions"))?;
    let mut out = Cursor::new(Vec::new());
    dynamic
        .write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::format("PNG", e.to_string()))?;
    Ok(out.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> ImageU8 {
        let data = (0..h * w * c).map(|_| rng.random()).collect();
        ImageU8::from_vec(h, w, c, data).unwrap()
    }

    #[test]
    fn decodes_hand_written_ppm() {
        let mut bytes = b"P6\n2 2\n255\n".to_vec();
        bytes.extend([255, 0, 0, 0, 255, 0, 0, 0, 255, 255, 255, 255]);
        let img = decode_image(&bytes).unwrap();
        assert_eq!((img.height(), img.width(), img.channels()), (2, 2, 3));
        assert_eq!(img.to_interleaved(), vec![255, 0, 0, 0, 255, 0, 0, 0, 255, 255, 255, 255]);
    }

    #[test]
    fn decodes_pgm_with_comment() {
        let img = decode_image(b"P5 # a comment\n1 1\n255\n\x80").unwrap();
        assert_eq!((img.height(), img.width(), img.channels()), (1, 1, 1));
        assert_eq!(img.data(), &[128]);
    }

    #[test]
    fn pnm_errors() {
        assert!(matches!(decode_image(b"P6\n2 2\n65535\n"), Err(Error::Format { format: "PPM", .. })));
        assert!(matches!(decode_image(b"P5\n2 2\n255\n\x00"), Err(Error::Format { .. })));
        assert!(matches!(decode_image(b"P3\n1 1\n255\n0 0 0"), Err(Error::Format { format: "PNM", .. })));
        assert!(matches!(decode_image(b"GIF89a"), Err(Error::Format { .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load_image("/nonexistent/x.png"), Err(Error::Io { .. })));
    }

    #[test]
    fn pnm_header_is_canonical() {
        let img = ImageU8::from_vec(1, 2, 1, vec![7, 9]).unwrap();
        assert_eq!(encode_pnm(&img), b"P5\n2 1\n255\n\x07\x09");
    }

    #[test]
    fn random_round_trips_are_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for i in 0..10 {
            let c = if i % 2 == 0 { 3 } else { 1 };
            let img = random_image(&mut rng, 8 + i, 8, c);
            for ext in ["png", "ppm", "pgm"] {
                let path = dir.path().join(format!("img{i}.{ext}"));
                save_image(&img, &path).unwrap();
                assert_eq!(load_image(&path).unwrap(), img, "{ext} round trip");
            }
        }
    }

    #[test]
    fn png_alpha_is_dropped() {
        let rgba = image::RgbaImage::from_raw(1, 1, vec![10, 20, 30, 40]).unwrap();
        let mut buf = Cursor::new(Vec::new());
        DynamicImage::ImageRgba8(rgba).write_to(&mut buf, ImageFormat::Png).unwrap();
        let img = decode_image(buf.get_ref()).unwrap();
        assert_eq!(img.channels(), 3);
        assert_eq!(img.data(), &[10, 20, 30]);
    }
}
