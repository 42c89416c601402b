//! Procedural natural-statistics RGB images for desk-scale corpora.
//!
//! Smooth luminance base (low-frequency cosines and gradients) plus tinted
//! regions and mild blurred texture. Deterministic per `(seed)`.

use ndarray::{Array2, Array3};
use rand::Rng;

use crate::imaging::RgbImage;
use crate::rng::stream;

/// One smooth random RGB field in [0,1], `[3, H, W]`.
pub fn smooth_rgb(h: usize, w: usize, seed: u64) -> Array3<f32> {
    let mut rng = stream(seed, "synth-image", 0);
    let mut luma = Array2::<f32>::zeros((h, w));

    // low-frequency cosine mixture
    let n_waves = rng.gen_range(3..6);
    for _ in 0..n_waves {
        let fy = rng.gen_range(0.3..2.5) * std::f32::consts::PI / h as f32;
        let fx = rng.gen_range(0.3..2.5) * std::f32::consts::PI / w as f32;
        let phase = rng.gen_range(0.0..std::f32::consts::TAU);
        let amp = rng.gen_range(0.06..0.18);
        for y in 0..h {
            for x in 0..w {
                luma[[y, x]] += amp * (fy * y as f32 + fx * x as f32 + phase).cos();
            }
        }
    }
    // linear gradient
    let (gy, gx) = (rng.gen_range(-0.3..0.3f32), rng.gen_range(-0.3..0.3f32));
    for y in 0..h {
        for x in 0..w {
            luma[[y, x]] += gy * y as f32 / h as f32 + gx * x as f32 / w as f32;
        }
    }

    // soft elliptical patches with their own tint
    let mut tint = Array3::<f32>::zeros((3, h, w));
    let n_blobs = rng.gen_range(2..5);
    for _ in 0..n_blobs {
        let cy = rng.gen_range(0.0..h as f32);
        let cx = rng.gen_range(0.0..w as f32);
        let ry = rng.gen_range(0.1..0.5) * h as f32;
        let rx = rng.gen_range(0.1..0.5) * w as f32;
        let col: [f32; 3] = [
            rng.gen_range(-0.18..0.18),
            rng.gen_range(-0.18..0.18),
            rng.gen_range(-0.18..0.18),
        ];
        for y in 0..h {
            for x in 0..w {
                let d = ((y as f32 - cy) / ry).powi(2) + ((x as f32 - cx) / rx).powi(2);
                let fall = (-d).exp();
                for c in 0..3 {
                    tint[[c, y, x]] += col[c] * fall;
                }
            }
        }
    }

    // mild blurred texture
    let mut noise = Array2::<f32>::zeros((h, w));
    for v in noise.iter_mut() {
        *v = rng.gen_range(-1.0..1.0f32);
    }
    let blurred = box_blur3(&noise);
    let blurred = box_blur3(&blurred);

    let base: [f32; 3] = [
        rng.gen_range(0.35..0.6),
        rng.gen_range(0.35..0.6),
        rng.gen_range(0.35..0.6),
    ];
    let mut out = Array3::<f32>::zeros((3, h, w));
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                let v = base[c] + 0.55 * luma[[y, x]] + tint[[c, y, x]] + 0.03 * blurred[[y, x]];
                out[[c, y, x]] = v.clamp(0.02, 0.98);
            }
        }
    }
    out
}

fn box_blur3(x: &Array2<f32>) -> Array2<f32> {
    let (h, w) = x.dim();
    let mut out = Array2::zeros((h, w));
    for y in 0..h {
        for xx in 0..w {
            let mut acc = 0.0;
            let mut n = 0.0;
            for dy in -1i32..=1 {
                let iy = y as i32 + dy;
                if iy < 0 || iy >= h as i32 {
                    continue;
                }
                for dx in -1i32..=1 {
                    let ix = xx as i32 + dx;
                    if ix < 0 || ix >= w as i32 {
                        continue;
                    }
                    acc += x[[iy as usize, ix as usize]];
                    n += 1.0;
                }
            }
            out[[y, xx]] = acc / n;
        }
    }
    out
}

/// A deterministic corpus of `n` images.
pub fn corpus(n: usize, h: usize, w: usize, seed: u64) -> Vec<RgbImage> {
    (0..n)
        .map(|i| {
            RgbImage::from_data(smooth_rgb(h, w, crate::rng::stream_key(seed, "corpus", i as u64)))
                .expect("synthetic image is valid")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn images_are_valid_and_deterministic() {
        let a = smooth_rgb(32, 48, 5);
        let b = smooth_rgb(32, 48, 5);
        let c = smooth_rgb(32, 48, 6);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|&v| (0.0..=1.0).contains(&v)));
        // non-degenerate content
        let mean: f32 = a.iter().sum::<f32>() / a.len() as f32;
        assert!(mean > 0.1 && mean < 0.9);
    }
}
