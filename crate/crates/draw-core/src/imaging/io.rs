//! Bit-exact file I/O.
//!
//! - RGB: 8-bit PNG, 3 channels.
//! - RAW: binary PGM ("P5", maxval 65535, big-endian samples) plus a JSON
//!   sidecar `<path>.rawmeta.json` with bayer pattern and black/white levels.
//! - Masks: 8-bit single-channel PNG, 0 = authentic, 255 = tampered.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use super::{BayerPattern, BinaryMask, RawImage, RgbImage};
use crate::error::{DrawError, Result};

pub const RAW_META_EXT: &str = ".rawmeta.json";

#[derive(Debug, Serialize, Deserialize)]
struct RawMeta {
    bayer_pattern: String,
    black_level: u16,
    white_level: u16,
}

pub fn save_rgb(img: &RgbImage, path: &Path) -> Result<()> {
    let (h, w) = (img.height(), img.width());
    let mut buf = vec![0u8; h * w * 3];
    let data = img.data();
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                buf[(y * w + x) * 3 + c] =
                    (f64::from(data[[c, y, x]]) * 255.0).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    image::save_buffer(
        path,
        &buf,
        w as u32,
        h as u32,
        image::ExtendedColorType::Rgb8,
    )?;
    Ok(())
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    let img = image::open(path)?.into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = Array3::from_shape_fn((3, h, w), |(c, y, x)| {
        f32::from(img.get_pixel(x as u32, y as u32).0[c]) / 255.0
    });
    RgbImage::from_data_cropped(data)
}

pub fn save_mask(mask: &BinaryMask, path: &Path) -> Result<()> {
    let (h, w) = mask.data().dim();
    let buf: Vec<u8> = mask
        .data()
        .iter()
        .map(|&v| if v >= 0.5 { 255 } else { 0 })
        .collect();
    image::save_buffer(path, &buf, w as u32, h as u32, image::ExtendedColorType::L8)?;
    Ok(())
}

pub fn load_mask(path: &Path) -> Result<BinaryMask> {
    let img = image::open(path)?.into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = Array2::from_shape_fn((h, w), |(y, x)| {
        if img.get_pixel(x as u32, y as u32).0[0] >= 128 {
            1.0
        } else {
            0.0
        }
    });
    BinaryMask::from_data(data)
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(RAW_META_EXT);
    PathBuf::from(s)
}

pub fn save_raw(raw: &RawImage, path: &Path) -> Result<()> {
    let (h, w) = (raw.height(), raw.width());
    let file = fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    write!(out, "P5\n{w} {h}\n65535\n")?;
    let span = f64::from(raw.white_level) - f64::from(raw.black_level);
    for &v in raw.data().iter() {
        let dn = (f64::from(v) * span + f64::from(raw.black_level))
            .round()
            .clamp(0.0, 65535.0) as u16;
        out.write_all(&dn.to_be_bytes())?;
    }
    out.flush()?;

    let meta = RawMeta {
        bayer_pattern: raw.pattern.as_str().to_string(),
        black_level: raw.black_level,
        white_level: raw.white_level,
    };
    let json = serde_json::to_string_pretty(&meta)
        .map_err(|e| DrawError::Malformed {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
    fs::write(sidecar_path(path), json)?;
    Ok(())
}

/// Loads a RAW plane plus sidecar. `expected_pattern`, when given, turns a
/// pattern disagreement into an explicit error instead of silently adapting.
pub fn load_raw(path: &Path, expected_pattern: Option<BayerPattern>) -> Result<RawImage> {
    let meta_path = sidecar_path(path);
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| DrawError::Malformed {
        path: meta_path.display().to_string(),
        reason: format!("missing or unreadable sidecar: {e}"),
    })?;
    let meta: RawMeta = serde_json::from_str(&meta_text).map_err(|e| DrawError::Malformed {
        path: meta_path.display().to_string(),
        reason: e.to_string(),
    })?;
    let pattern = BayerPattern::parse(&meta.bayer_pattern)?;
    if let Some(expected) = expected_pattern {
        if expected != pattern {
            return Err(DrawError::PatternMismatch {
                expected: expected.as_str().into(),
                found: pattern.as_str().into(),
            });
        }
    }

    let mut file = fs::File::open(path)?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    let (w, h, offset) = parse_pgm_header(&bytes, path)?;
    let need = h * w * 2;
    if bytes.len() < offset + need {
        return Err(DrawError::Malformed {
            path: path.display().to_string(),
            reason: format!("truncated pixel data: need {need} bytes"),
        });
    }
    let span = f64::from(meta.white_level) - f64::from(meta.black_level);
    if span <= 0.0 {
        return Err(DrawError::Malformed {
            path: meta_path.display().to_string(),
            reason: "white level must exceed black level".into(),
        });
    }
    let data = Array2::from_shape_fn((h, w), |(y, x)| {
        let i = offset + (y * w + x) * 2;
        let dn = u16::from_be_bytes([bytes[i], bytes[i + 1]]);
        let v = (f64::from(dn) - f64::from(meta.black_level)) / span;
        v.clamp(0.0, 1.0) as f32
    });
    RawImage::from_data(data, pattern, meta.black_level, meta.white_level)
}

fn parse_pgm_header(bytes: &[u8], path: &Path) -> Result<(usize, usize, usize)> {
    let malformed = |reason: &str| DrawError::Malformed {
        path: path.display().to_string(),
        reason: reason.to_string(),
    };
    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return Err(malformed("not a binary PGM (missing P5 magic)"));
    }
    // Header tokens: magic, width, height, maxval, then a single whitespace.
    let mut pos = 2;
    let mut fields = Vec::new();
    while fields.len() < 3 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(malformed("truncated header"));
        }
        let tok = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| malformed("non-ASCII header token"))?;
        let val: usize = tok
            .parse()
            .map_err(|_| malformed(&format!("bad header field {tok:?}")))?;
        fields.push(val);
    }
    if pos >= bytes.len() {
        return Err(malformed("missing pixel data"));
    }
    pos += 1; // single whitespace after maxval
    let (w, h, maxval) = (fields[0], fields[1], fields[2]);
    if maxval != 65535 {
        return Err(malformed(&format!("expected maxval 65535, got {maxval}")));
    }
    Ok((w, h, pos))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array2, Array3};

    #[test]
    fn rgb_round_trip_within_one_quantization_step() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let data = Array3::from_shape_fn((3, 16, 16), |(c, y, x)| {
            ((c * 89 + y * 13 + x) % 251) as f32 / 250.0
        });
        let img = RgbImage::from_data(data).unwrap();
        save_rgb(&img, &path).unwrap();
        let back = load_rgb(&path).unwrap();
        let max = img
            .data()
            .iter()
            .zip(back.data().iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max <= 1.0 / 255.0 + 1e-6, "max diff {max}");
    }

    #[test]
    fn raw_round_trip_within_one_quantization_step() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pgm");
        let data = Array2::from_shape_fn((16, 16), |(y, x)| ((y * 31 + x * 7) % 101) as f32 / 100.0);
        let raw = RawImage::from_data(data, BayerPattern::Grbg, 64, 16383).unwrap();
        save_raw(&raw, &path).unwrap();
        let back = load_raw(&path, None).unwrap();
        assert_eq!(back.pattern, BayerPattern::Grbg);
        assert_eq!(back.black_level, 64);
        assert_eq!(back.white_level, 16383);
        let max = raw
            .data()
            .iter()
            .zip(back.data().iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max <= 1.0 / (16383.0 - 64.0) + 1e-6, "max diff {max}");
    }

    #[test]
    fn integer_dn_normalization_is_invertible() {
        for dn in [0u16, 1, 5000, 16382, 16383] {
            let v = RawImage::normalize_dn(dn, 0, 16383);
            assert_eq!(RawImage::denormalize_dn(v, 0, 16383), dn);
        }
        for dn in [512u16, 513, 40000, 65535] {
            let v = RawImage::normalize_dn(dn, 512, 65535);
            assert_eq!(RawImage::denormalize_dn(v, 512, 65535), dn);
        }
    }

    #[test]
    fn pattern_mismatch_is_an_explicit_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pgm");
        let raw = RawImage::from_data(Array2::zeros((8, 8)), BayerPattern::Bggr, 0, 65535).unwrap();
        save_raw(&raw, &path).unwrap();
        let err = load_raw(&path, Some(BayerPattern::Rggb)).unwrap_err();
        assert!(matches!(err, DrawError::PatternMismatch { .. }), "{err}");
    }

    #[test]
    fn malformed_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.pgm");
        std::fs::write(&path, b"P6\n4 4\n65535\n").unwrap();
        std::fs::write(
            sidecar_path(&path),
            r#"{"bayer_pattern":"RGGB","black_level":0,"white_level":65535}"#,
        )
        .unwrap();
        assert!(load_raw(&path, None).is_err());
    }

    #[test]
    fn mask_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let data = Array2::from_shape_fn((16, 16), |(y, x)| f32::from(u8::from((y + x) % 3 == 0)));
        let mask = BinaryMask::from_data(data).unwrap();
        save_mask(&mask, &path).unwrap();
        let back = load_mask(&path).unwrap();
        assert_eq!(mask.data(), back.data());
    }
}
