//! Built-in naive inpainter: iterative neighborhood diffusion from the
//! unmasked boundary (fixed 200 Jacobi sweeps). Stands in for external
//! learned inpainting models; the tamper API accepts any source image, so a
//! real model can be plugged in upstream.

use ndarray::{Array2, Array3};

use crate::error::{DrawError, Result};

const JACOBI_ITERS: usize = 200;

pub fn naive_inpaint(img: &Array3<f32>, mask: &Array2<f32>) -> Result<Array3<f32>> {
    let (c, h, w) = img.dim();
    if mask.dim() != (h, w) {
        return Err(DrawError::Dimension("inpaint: mask shape mismatch".into()));
    }
    let masked: Vec<(usize, usize)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (y, x)))
        .filter(|&(y, x)| mask[[y, x]] >= 0.5)
        .collect();
    if masked.len() == h * w {
        return Err(DrawError::InvalidArgument(
            "inpaint: mask covers the whole image".into(),
        ));
    }
    if masked.is_empty() {
        return Ok(img.clone());
    }

    // initialize the hole with the mean of unmasked pixels per channel
    let mut out = img.clone();
    for ch in 0..c {
        let mut sum = 0.0f64;
        let mut n = 0usize;
        for y in 0..h {
            for x in 0..w {
                if mask[[y, x]] < 0.5 {
                    sum += f64::from(img[[ch, y, x]]);
                    n += 1;
                }
            }
        }
        let fill = (sum / n as f64) as f32;
        for &(y, x) in &masked {
            out[[ch, y, x]] = fill;
        }
    }

    let mut next = out.clone();
    for _ in 0..JACOBI_ITERS {
        for ch in 0..c {
            for &(y, x) in &masked {
                let mut acc = 0.0f32;
                let mut n = 0.0f32;
                if y > 0 {
                    acc += out[[ch, y - 1, x]];
                    n += 1.0;
                }
                if y + 1 < h {
                    acc += out[[ch, y + 1, x]];
                    n += 1.0;
                }
                if x > 0 {
                    acc += out[[ch, y, x - 1]];
                    n += 1.0;
                }
                if x + 1 < w {
                    acc += out[[ch, y, x + 1]];
                    n += 1.0;
                }
                next[[ch, y, x]] = acc / n;
            }
        }
        std::mem::swap(&mut out, &mut next);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_fills_with_constant() {
        let img = Array3::from_elem((3, 16, 16), 0.37f32);
        let mut mask = Array2::zeros((16, 16));
        for y in 4..10 {
            for x in 5..11 {
                mask[[y, x]] = 1.0;
            }
        }
        let out = naive_inpaint(&img, &mask).unwrap();
        for v in out.iter() {
            assert!((v - 0.37).abs() < 1e-6);
        }
    }

    #[test]
    fn unmasked_pixels_bit_identical() {
        let img = Array3::from_shape_fn((3, 16, 16), |(c, y, x)| {
            ((c * 61 + y * 17 + x * 3) % 97) as f32 / 96.0
        });
        let mut mask = Array2::zeros((16, 16));
        for y in 2..6 {
            for x in 2..6 {
                mask[[y, x]] = 1.0;
            }
        }
        let out = naive_inpaint(&img, &mask).unwrap();
        for c in 0..3 {
            for y in 0..16 {
                for x in 0..16 {
                    if mask[[y, x]] < 0.5 {
                        assert_eq!(out[[c, y, x]], img[[c, y, x]]);
                    }
                }
            }
        }
    }

    #[test]
    fn strip_on_gradient_approximates_linear_interpolation() {
        // horizontal gradient, vertical strip mask: harmonic fill should be
        // close to the linear interpolation between boundary columns
        let img = Array3::from_shape_fn((1, 16, 16), |(_, _, x)| x as f32 / 15.0);
        let mut mask = Array2::zeros((16, 16));
        for y in 0..16 {
            for x in 6..10 {
                mask[[y, x]] = 1.0;
            }
        }
        let out = naive_inpaint(&img, &mask).unwrap();
        let mut max_err = 0.0f32;
        for y in 0..16 {
            for x in 6..10 {
                max_err = max_err.max((out[[0, y, x]] - x as f32 / 15.0).abs());
            }
        }
        assert!(max_err < 0.02, "harmonic fill error {max_err}");
    }

    #[test]
    fn all_ones_mask_rejected() {
        let img = Array3::zeros((3, 8, 8));
        let mask = Array2::from_elem((8, 8), 1.0f32);
        assert!(naive_inpaint(&img, &mask).is_err());
    }
}
