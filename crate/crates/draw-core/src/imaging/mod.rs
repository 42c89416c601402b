//! Image containers and Bayer-domain operations.
//!
//! All pixel data is kept in `[0,1]` floating point. RGB images are `[3,H,W]`
//! with `H`, `W` multiples of 16 (three decimation levels plus Bayer packing);
//! RAW images are a single normalized Bayer plane with pattern and level
//! metadata.

mod bayer;
mod io;

pub use bayer::{demosaic_bilinear, demosaic_plane, mosaic, mosaic_plane};
pub use io::{load_mask, load_raw, load_rgb, save_mask, save_raw, save_rgb, RAW_META_EXT};

use ndarray::{Array2, Array3, ArrayView2, ArrayView3};
use serde::{Deserialize, Serialize};

use crate::error::{DrawError, Result};

/// Spatial granularity every ingested image is cropped to.
pub const TILE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BayerPattern {
    Rggb,
    Bggr,
    Grbg,
    Gbrg,
}

impl BayerPattern {
    /// Channel (0=R, 1=G, 2=B) recorded at pixel `(row, col)`.
    pub fn channel_at(self, row: usize, col: usize) -> usize {
        // channel layout of the 2x2 tile, row-major
        let tile = match self {
            BayerPattern::Rggb => [0, 1, 1, 2],
            BayerPattern::Bggr => [2, 1, 1, 0],
            BayerPattern::Grbg => [1, 0, 2, 1],
            BayerPattern::Gbrg => [1, 2, 0, 1],
        };
        tile[(row % 2) * 2 + (col % 2)]
    }

    /// Offset `(row, col)` of the red site inside the 2x2 tile.
    pub fn red_offset(self) -> (usize, usize) {
        match self {
            BayerPattern::Rggb => (0, 0),
            BayerPattern::Bggr => (1, 1),
            BayerPattern::Grbg => (0, 1),
            BayerPattern::Gbrg => (1, 0),
        }
    }

    /// Offset of the blue site inside the 2x2 tile.
    pub fn blue_offset(self) -> (usize, usize) {
        let (r, c) = self.red_offset();
        (1 - r, 1 - c)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BayerPattern::Rggb => "RGGB",
            BayerPattern::Bggr => "BGGR",
            BayerPattern::Grbg => "GRBG",
            BayerPattern::Gbrg => "GBRG",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RGGB" => Ok(BayerPattern::Rggb),
            "BGGR" => Ok(BayerPattern::Bggr),
            "GRBG" => Ok(BayerPattern::Grbg),
            "GBRG" => Ok(BayerPattern::Gbrg),
            other => Err(DrawError::InvalidArgument(format!(
                "unknown bayer pattern {other:?}"
            ))),
        }
    }
}

/// 3-channel rendered image, `[3, H, W]`, values in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    data: Array3<f32>,
}

impl RgbImage {
    /// Validates shape and finiteness; values are clamped to `[0,1]`.
    pub fn from_data(mut data: Array3<f32>) -> Result<Self> {
        let (c, h, w) = data.dim();
        if c != 3 {
            return Err(DrawError::Dimension(format!("expected 3 channels, got {c}")));
        }
        if h % TILE != 0 || w % TILE != 0 {
            return Err(DrawError::Dimension(format!(
                "H and W must be multiples of {TILE}, got {h}x{w}"
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(DrawError::InvalidArgument("non-finite pixel value".into()));
        }
        data.mapv_inplace(|v| v.clamp(0.0, 1.0));
        Ok(Self { data })
    }

    /// Center-crops to multiples of [`TILE`] before validation.
    pub fn from_data_cropped(data: Array3<f32>) -> Result<Self> {
        let (_, h, w) = data.dim();
        let (ch, cw) = (h - h % TILE, w - w % TILE);
        if ch == 0 || cw == 0 {
            return Err(DrawError::Dimension(format!(
                "image {h}x{w} too small for {TILE}-pixel tiling"
            )));
        }
        let (y0, x0) = ((h - ch) / 2, (w - cw) / 2);
        let cropped = data
            .slice(ndarray::s![.., y0..y0 + ch, x0..x0 + cw])
            .to_owned();
        Self::from_data(cropped)
    }

    pub fn data(&self) -> ArrayView3<'_, f32> {
        self.data.view()
    }

    pub fn into_data(self) -> Array3<f32> {
        self.data
    }

    pub fn height(&self) -> usize {
        self.data.dim().1
    }

    pub fn width(&self) -> usize {
        self.data.dim().2
    }
}

/// Single-plane Bayer mosaic, normalized as `(raw - black) / (white - black)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawImage {
    data: Array2<f32>,
    pub pattern: BayerPattern,
    pub black_level: u16,
    pub white_level: u16,
}

impl RawImage {
    pub fn from_data(
        data: Array2<f32>,
        pattern: BayerPattern,
        black_level: u16,
        white_level: u16,
    ) -> Result<Self> {
        let (h, w) = data.dim();
        if h % 2 != 0 || w % 2 != 0 {
            return Err(DrawError::Dimension(format!(
                "RAW dimensions must be even, got {h}x{w}"
            )));
        }
        if black_level >= white_level {
            return Err(DrawError::InvalidArgument(format!(
                "black level {black_level} must be below white level {white_level}"
            )));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(DrawError::InvalidArgument(
                "RAW values must be finite and within [0,1]".into(),
            ));
        }
        Ok(Self {
            data,
            pattern,
            black_level,
            white_level,
        })
    }

    pub fn data(&self) -> ArrayView2<'_, f32> {
        self.data.view()
    }

    pub fn into_data(self) -> Array2<f32> {
        self.data
    }

    pub fn height(&self) -> usize {
        self.data.dim().0
    }

    pub fn width(&self) -> usize {
        self.data.dim().1
    }

    /// Normalize an integer-DN plane to `[0,1]`.
    pub fn normalize_dn(dn: u16, black: u16, white: u16) -> f32 {
        let span = f64::from(white) - f64::from(black);
        let v = (f64::from(dn) - f64::from(black)) / span;
        v.clamp(0.0, 1.0) as f32
    }

    /// Invert [`Self::normalize_dn`]; exact for integer-DN inputs.
    pub fn denormalize_dn(v: f32, black: u16, white: u16) -> u16 {
        let span = f64::from(white) - f64::from(black);
        let dn = f64::from(v) * span + f64::from(black);
        dn.round().clamp(0.0, f64::from(u16::MAX)) as u16
    }
}

/// Per-pixel tamper map. Ground truth is exactly binary; predictions are soft.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    data: Array2<f32>,
}

impl BinaryMask {
    pub fn from_data(data: Array2<f32>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(DrawError::InvalidArgument(
                "mask values must be finite and within [0,1]".into(),
            ));
        }
        Ok(Self { data })
    }

    pub fn zeros(h: usize, w: usize) -> Self {
        Self {
            data: Array2::zeros((h, w)),
        }
    }

    pub fn data(&self) -> ArrayView2<'_, f32> {
        self.data.view()
    }

    pub fn into_data(self) -> Array2<f32> {
        self.data
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Fraction of tampered pixels.
    pub fn area(&self) -> f64 {
        self.data.iter().map(|&v| f64::from(v)).sum::<f64>() / self.data.len() as f64
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&v| v > 0.0)
    }
}
