//! PSNR, SSIM and pixel segmentation metrics.

use ndarray::{ArrayView2, ArrayView3};

use crate::error::{DrawError, Result};
use crate::imaging::{BinaryMask, RgbImage};

/// PSNR in dB on [0,1] data, capped at 100 dB for identical inputs.
pub fn psnr(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    psnr_arr(a.data(), b.data())
}

pub fn psnr_arr(a: ArrayView3<'_, f32>, b: ArrayView3<'_, f32>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(DrawError::Dimension(format!(
            "psnr: shape mismatch {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let mse = a
        .iter()
        .zip(b.iter())
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum::<f64>()
        / a.len() as f64;
    if mse <= 0.0 {
        return Ok(100.0);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(100.0))
}

/// PSNR between two single-plane arrays (RAW fidelity rows).
pub fn psnr_plane(a: ArrayView2<'_, f32>, b: ArrayView2<'_, f32>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(DrawError::Dimension("psnr: shape mismatch".into()));
    }
    let mse = a
        .iter()
        .zip(b.iter())
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum::<f64>()
        / a.len() as f64;
    if mse <= 0.0 {
        return Ok(100.0);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(100.0))
}

const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const SSIM_WIN: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

/// Mean local SSIM with an 11x11 Gaussian window (sigma 1.5), dynamic range
/// 1, averaged over channels. Windows are evaluated where they fit entirely.
pub fn ssim(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    ssim_arr(a.data(), b.data())
}

pub fn ssim_arr(a: ArrayView3<'_, f32>, b: ArrayView3<'_, f32>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(DrawError::Dimension("ssim: shape mismatch".into()));
    }
    let (c, h, w) = a.dim();
    if h < SSIM_WIN || w < SSIM_WIN {
        return Err(DrawError::Dimension(format!(
            "ssim needs at least {SSIM_WIN}x{SSIM_WIN} images, got {h}x{w}"
        )));
    }
    // separable gaussian window, normalized
    let mut win = [0.0f64; SSIM_WIN];
    let c0 = (SSIM_WIN / 2) as f64;
    let mut s = 0.0;
    for (i, v) in win.iter_mut().enumerate() {
        *v = (-((i as f64 - c0).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        s += *v;
    }
    win.iter_mut().for_each(|v| *v /= s);

    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..c {
        for y0 in 0..=(h - SSIM_WIN) {
            for x0 in 0..=(w - SSIM_WIN) {
                let mut mu_a = 0.0;
                let mut mu_b = 0.0;
                let mut aa = 0.0;
                let mut bb = 0.0;
                let mut ab = 0.0;
                for dy in 0..SSIM_WIN {
                    for dx in 0..SSIM_WIN {
                        let wgt = win[dy] * win[dx];
                        let va = f64::from(a[[ch, y0 + dy, x0 + dx]]);
                        let vb = f64::from(b[[ch, y0 + dy, x0 + dx]]);
                        mu_a += wgt * va;
                        mu_b += wgt * vb;
                        aa += wgt * va * va;
                        bb += wgt * vb * vb;
                        ab += wgt * va * vb;
                    }
                }
                let var_a = aa - mu_a * mu_a;
                let var_b = bb - mu_b * mu_b;
                let cov = ab - mu_a * mu_b;
                let val = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                    / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
                total += val;
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

/// Pixel Recall / F1 / IoU of a thresholded soft prediction against a binary
/// ground truth. All-zero gt with an all-zero prediction counts as perfect
/// (1,1,1); all-zero gt with any positive prediction counts as (0,0,0).
pub fn seg_metrics(pred: &BinaryMask, gt: &BinaryMask, threshold: f64) -> Result<(f64, f64, f64)> {
    if pred.data().dim() != gt.data().dim() {
        return Err(DrawError::Dimension("seg_metrics: shape mismatch".into()));
    }
    if !gt.is_binary() {
        return Err(DrawError::InvalidArgument(
            "seg_metrics: ground truth must be binary".into(),
        ));
    }
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut f_n = 0u64;
    for (&p, &g) in pred.data().iter().zip(gt.data().iter()) {
        let p = f64::from(p) >= threshold;
        let g = g >= 0.5;
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => f_n += 1,
            (false, false) => {}
        }
    }
    if tp + f_n == 0 {
        // authentic ground truth
        return Ok(if fp == 0 {
            (1.0, 1.0, 1.0)
        } else {
            (0.0, 0.0, 0.0)
        });
    }
    let recall = tp as f64 / (tp + f_n) as f64;
    let f1 = 2.0 * tp as f64 / (2 * tp + fp + f_n) as f64;
    let iou = tp as f64 / (tp + fp + f_n) as f64;
    Ok((recall, f1, iou))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array2, Array3};

    fn img(f: impl Fn(usize, usize, usize) -> f32) -> RgbImage {
        RgbImage::from_data(Array3::from_shape_fn((3, 16, 16), |(c, y, x)| f(c, y, x))).unwrap()
    }

    #[test]
    fn psnr_identical_capped_at_100() {
        let a = img(|c, y, x| ((c + y + x) % 7) as f32 / 6.0);
        assert_eq!(psnr(&a, &a).unwrap(), 100.0);
    }

    #[test]
    fn psnr_uniform_one_lsb_closed_form() {
        let a = img(|_, _, _| 0.5);
        let b = img(|_, _, _| 0.5 + 1.0 / 255.0);
        let expect = 20.0 * 255.0f64.log10();
        assert!((psnr(&a, &b).unwrap() - expect).abs() < 1e-3);
    }

    #[test]
    fn psnr_matches_bruteforce_mse() {
        let a = img(|c, y, x| ((c * 5 + y * 3 + x) % 11) as f32 / 10.0);
        let b = img(|c, y, x| ((c * 7 + y + x * 2) % 13) as f32 / 12.0);
        let mse: f64 = a
            .data()
            .iter()
            .zip(b.data().iter())
            .map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2))
            .sum::<f64>()
            / (3.0 * 256.0);
        let expect = 10.0 * (1.0 / mse).log10();
        assert!((psnr(&a, &b).unwrap() - expect).abs() < 1e-9);
        assert!((psnr(&a, &b).unwrap() - psnr(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ssim_identical_is_one() {
        let a = img(|c, y, x| ((c + y * 2 + x * 3) % 9) as f32 / 8.0);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_constant_pair_closed_form() {
        // constant images: variance/covariance vanish -> luminance term only
        let a = img(|_, _, _| 0.5);
        let b = img(|_, _, _| 0.6);
        let c1 = 0.01f64 * 0.01;
        let expect = (2.0 * 0.5 * 0.6 + c1) / (0.25 + 0.36 + c1);
        assert!((ssim(&a, &b).unwrap() - expect).abs() < 1e-6);
    }

    #[test]
    fn ssim_negative_for_anticorrelated() {
        let a = img(|_, y, x| if (y + x) % 2 == 0 { 0.9 } else { 0.1 });
        let b = img(|_, y, x| if (y + x) % 2 == 0 { 0.1 } else { 0.9 });
        assert!(ssim(&a, &b).unwrap() < 0.0);
    }

    #[test]
    fn seg_metrics_hand_confusion_matrix() {
        // gt has 4 positives, pred covers 2 with no false positives
        let mut gt = Array2::<f32>::zeros((4, 4));
        gt[[0, 0]] = 1.0;
        gt[[0, 1]] = 1.0;
        gt[[1, 0]] = 1.0;
        gt[[1, 1]] = 1.0;
        let mut pred = Array2::<f32>::zeros((4, 4));
        pred[[0, 0]] = 1.0;
        pred[[1, 1]] = 1.0;
        let (r, f1, iou) = seg_metrics(
            &BinaryMask::from_data(pred).unwrap(),
            &BinaryMask::from_data(gt).unwrap(),
            0.5,
        )
        .unwrap();
        assert!((r - 0.5).abs() < 1e-12);
        assert!((f1 - 2.0 * 2.0 / (2.0 * 2.0 + 0.0 + 2.0)).abs() < 1e-12);
        assert!((iou - 0.5).abs() < 1e-12);
    }

    #[test]
    fn seg_metrics_perfect_and_complement() {
        let gt = BinaryMask::from_data(Array2::from_shape_fn((4, 4), |(y, x)| {
            f32::from(u8::from((y + x) % 2 == 0))
        }))
        .unwrap();
        let (r, f1, iou) = seg_metrics(&gt, &gt, 0.5).unwrap();
        assert_eq!((r, f1, iou), (1.0, 1.0, 1.0));
        let comp = BinaryMask::from_data(gt.data().mapv(|v| 1.0 - v)).unwrap();
        let (r, f1, iou) = seg_metrics(&comp, &gt, 0.5).unwrap();
        assert_eq!((r, f1, iou), (0.0, 0.0, 0.0));
    }

    #[test]
    fn non_binary_gt_rejected() {
        let gt = BinaryMask::from_data(Array2::from_elem((4, 4), 0.5)).unwrap();
        let pred = BinaryMask::zeros(4, 4);
        assert!(seg_metrics(&pred, &gt, 0.5).is_err());
    }
}
