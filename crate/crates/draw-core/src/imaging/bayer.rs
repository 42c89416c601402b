//! Bayer mosaic sampling and bilinear demosaicing.

use ndarray::{Array2, Array3, ArrayView2, ArrayView3};

use super::{BayerPattern, RawImage, RgbImage};
use crate::error::Result;

/// Sample a 3-channel image down to a Bayer plane.
///
/// Each mosaic site carries the corresponding channel value of `rgb`;
/// black/white levels of the result are 0/65535.
pub fn mosaic(rgb: &RgbImage, pattern: BayerPattern) -> Result<RawImage> {
    let plane = mosaic_plane(rgb.data(), pattern);
    RawImage::from_data(plane, pattern, 0, 65535)
}

/// Mosaic on a bare `[3,H,W]` view (no container validation).
pub fn mosaic_plane(rgb: ArrayView3<'_, f32>, pattern: BayerPattern) -> Array2<f32> {
    let (_, h, w) = rgb.dim();
    Array2::from_shape_fn((h, w), |(y, x)| rgb[[pattern.channel_at(y, x), y, x]])
}

/// Bilinear demosaic with same-channel edge replication at borders.
///
/// At each mosaic site the native channel equals the raw value exactly;
/// missing channels are averages of the nearest same-channel neighbors
/// (2 axial for red/blue at half-sites, 4 diagonal at opposite sites,
/// 4 axial for green).
pub fn demosaic_bilinear(raw: &RawImage) -> Result<RgbImage> {
    let rgb = demosaic_plane(raw.data(), raw.pattern);
    RgbImage::from_data(rgb)
}

/// Demosaic on a bare plane (no container validation, no clamping).
pub fn demosaic_plane(raw: ArrayView2<'_, f32>, pattern: BayerPattern) -> Array3<f32> {
    let (h, w) = raw.dim();
    let mut out = Array3::zeros((3, h, w));

    // Parity-preserving reflection keeps lookups on same-channel sites.
    let reflect = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let mut i = i;
        if i < 0 {
            i = -i;
        }
        if i > n - 1 {
            i = 2 * (n - 1) - i;
        }
        i as usize
    };
    let at = |y: isize, x: isize| raw[[reflect(y, h), reflect(x, w)]];

    for ch in [0usize, 2] {
        let (r0, c0) = if ch == 0 {
            pattern.red_offset()
        } else {
            pattern.blue_offset()
        };
        for y in 0..h {
            for x in 0..w {
                let (yi, xi) = (y as isize, x as isize);
                let dy = (y + 2 - r0) % 2;
                let dx = (x + 2 - c0) % 2;
                out[[ch, y, x]] = match (dy, dx) {
                    (0, 0) => raw[[y, x]],
                    (0, 1) => 0.5 * (at(yi, xi - 1) + at(yi, xi + 1)),
                    (1, 0) => 0.5 * (at(yi - 1, xi) + at(yi + 1, xi)),
                    _ => {
                        0.25 * (at(yi - 1, xi - 1)
                            + at(yi - 1, xi + 1)
                            + at(yi + 1, xi - 1)
                            + at(yi + 1, xi + 1))
                    }
                };
            }
        }
    }

    let (gr, gc) = match pattern {
        BayerPattern::Rggb | BayerPattern::Bggr => (0, 1),
        BayerPattern::Grbg | BayerPattern::Gbrg => (0, 0),
    };
    let g_parity = (gr + gc) % 2;
    for y in 0..h {
        for x in 0..w {
            let (yi, xi) = (y as isize, x as isize);
            out[[1, y, x]] = if (y + x) % 2 == g_parity {
                raw[[y, x]]
            } else {
                0.25 * (at(yi - 1, xi) + at(yi + 1, xi) + at(yi, xi - 1) + at(yi, xi + 1))
            };
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn const_rgb(h: usize, w: usize, v: f32) -> RgbImage {
        RgbImage::from_data(Array3::from_elem((3, h, w), v)).unwrap()
    }

    #[test]
    fn mosaic_of_constant_is_constant() {
        let rgb = const_rgb(16, 16, 0.37);
        for p in [
            BayerPattern::Rggb,
            BayerPattern::Bggr,
            BayerPattern::Grbg,
            BayerPattern::Gbrg,
        ] {
            let raw = mosaic(&rgb, p).unwrap();
            assert!(raw.data().iter().all(|&v| (v - 0.37).abs() < 1e-7));
        }
    }

    #[test]
    fn demosaic_of_constant_raw_is_constant() {
        let raw = RawImage::from_data(
            ndarray::Array2::from_elem((16, 16), 0.62),
            BayerPattern::Rggb,
            0,
            65535,
        )
        .unwrap();
        let rgb = demosaic_bilinear(&raw).unwrap();
        assert!(rgb.data().iter().all(|&v| (v - 0.62).abs() < 1e-6));
    }

    #[test]
    fn rggb_site_selection_matches_hand_enumeration() {
        // 4x4 image with distinct per-pixel, per-channel values.
        let data = Array3::from_shape_fn((3, 4, 4), |(c, y, x)| {
            (c as f32) * 0.25 + (y as f32) * 0.05 + (x as f32) * 0.01
        });
        let plane = mosaic_plane(data.view(), BayerPattern::Rggb);
        // Hand-computed: R at (0,0), G at (0,1)/(1,0), B at (1,1) per tile.
        for y in 0..4 {
            for x in 0..4 {
                let expect = match (y % 2, x % 2) {
                    (0, 0) => data[[0, y, x]],
                    (1, 1) => data[[2, y, x]],
                    _ => data[[1, y, x]],
                };
                assert_eq!(plane[[y, x]], expect, "site ({y},{x})");
            }
        }
    }

    #[test]
    fn mosaic_then_demosaic_restores_native_sites_exactly() {
        let data = Array3::from_shape_fn((3, 16, 16), |(c, y, x)| {
            ((c * 31 + y * 7 + x * 3) % 97) as f32 / 96.0
        });
        let rgb = RgbImage::from_data(data).unwrap();
        for p in [
            BayerPattern::Rggb,
            BayerPattern::Bggr,
            BayerPattern::Grbg,
            BayerPattern::Gbrg,
        ] {
            let raw = mosaic(&rgb, p).unwrap();
            let back = demosaic_bilinear(&raw).unwrap();
            for y in 0..16 {
                for x in 0..16 {
                    let c = p.channel_at(y, x);
                    assert_eq!(back.data()[[c, y, x]], rgb.data()[[c, y, x]]);
                }
            }
        }
    }

    #[test]
    fn single_red_impulse_spreads_with_bilinear_weights() {
        // RGGB plane, R=1 at site (2,2), zeros elsewhere.
        let mut plane = ndarray::Array2::zeros((8, 8));
        plane[[2, 2]] = 1.0;
        let rgb = demosaic_plane(plane.view(), BayerPattern::Rggb);
        // Axial missing sites get weight 0.5, diagonal 0.25 (interior).
        assert_eq!(rgb[[0, 2, 2]], 1.0);
        assert_eq!(rgb[[0, 2, 1]], 0.5);
        assert_eq!(rgb[[0, 2, 3]], 0.5);
        assert_eq!(rgb[[0, 1, 2]], 0.5);
        assert_eq!(rgb[[0, 3, 2]], 0.5);
        assert_eq!(rgb[[0, 1, 1]], 0.25);
        assert_eq!(rgb[[0, 1, 3]], 0.25);
        assert_eq!(rgb[[0, 3, 1]], 0.25);
        assert_eq!(rgb[[0, 3, 3]], 0.25);
        // Far sites untouched.
        assert_eq!(rgb[[0, 6, 6]], 0.0);
    }

    #[test]
    fn odd_dimensions_rejected() {
        let raw = RawImage::from_data(
            ndarray::Array2::zeros((15, 16)),
            BayerPattern::Rggb,
            0,
            65535,
        );
        assert!(raw.is_err());
    }
}
