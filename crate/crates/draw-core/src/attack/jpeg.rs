//! Differentiable JPEG and the real-codec counterpart.
//!
//! The differentiable path mirrors a baseline JPEG codec: YCbCr conversion,
//! 4:2:0 chroma subsampling, 8x8 DCT, quantization with the standard tables
//! scaled by the usual quality curve, straight-through rounding, inverse DCT,
//! nearest chroma upsampling and conversion back. The real counterpart goes
//! through an actual encoder so bitstream-level effects are represented.

use ndarray::{Array3, Array4, IxDyn};

use crate::error::{DrawError, Result};
use crate::tensor::{Arr, Scalar, Tape, Var};

const LUMA_BASE: [[f64; 8]; 8] = [
    [16.0, 11.0, 10.0, 16.0, 24.0, 40.0, 51.0, 61.0],
    [12.0, 12.0, 14.0, 19.0, 26.0, 58.0, 60.0, 55.0],
    [14.0, 13.0, 16.0, 24.0, 40.0, 57.0, 69.0, 56.0],
    [14.0, 17.0, 22.0, 29.0, 51.0, 87.0, 80.0, 62.0],
    [18.0, 22.0, 37.0, 56.0, 68.0, 109.0, 103.0, 77.0],
    [24.0, 35.0, 55.0, 64.0, 81.0, 104.0, 113.0, 92.0],
    [49.0, 64.0, 78.0, 87.0, 103.0, 121.0, 120.0, 101.0],
    [72.0, 92.0, 95.0, 98.0, 112.0, 100.0, 103.0, 99.0],
];

const CHROMA_BASE: [[f64; 8]; 8] = [
    [17.0, 18.0, 24.0, 47.0, 99.0, 99.0, 99.0, 99.0],
    [18.0, 21.0, 26.0, 66.0, 99.0, 99.0, 99.0, 99.0],
    [24.0, 26.0, 56.0, 99.0, 99.0, 99.0, 99.0, 99.0],
    [47.0, 66.0, 99.0, 99.0, 99.0, 99.0, 99.0, 99.0],
    [99.0; 8],
    [99.0; 8],
    [99.0; 8],
    [99.0; 8],
];

/// Quality-scaled quantization table (the common 5000/q curve).
pub fn quant_table(base: &[[f64; 8]; 8], quality: u8) -> [[f64; 8]; 8] {
    let q = f64::from(quality.clamp(1, 100));
    let scale = if q < 50.0 { 5000.0 / q } else { 200.0 - 2.0 * q };
    let mut out = [[0.0; 8]; 8];
    for u in 0..8 {
        for v in 0..8 {
            out[u][v] = ((base[u][v] * scale + 50.0) / 100.0).floor().clamp(1.0, 255.0);
        }
    }
    out
}

fn color_matrix<T: Scalar>(tape: &Tape<T>, x: Var, m: [[f64; 3]; 3]) -> Var {
    let mut w = Array4::<T>::zeros((3, 3, 1, 1));
    for (i, row) in m.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            w[[i, j, 0, 0]] = T::fromf64(v);
        }
    }
    let wv = tape.leaf(w.into_dyn(), false);
    tape.conv2d(x, wv, None, 1, 0)
}

/// Tiles an 8x8 quantization table over `[N,1,H,W]`.
fn tile_table<T: Scalar>(tbl: &[[f64; 8]; 8], n: usize, h: usize, w: usize, invert: bool) -> Arr<T> {
    Arr::from_shape_fn(IxDyn(&[n, 1, h, w]), |ix| {
        let q = tbl[ix[2] % 8][ix[3] % 8];
        T::fromf64(if invert { 1.0 / q } else { q })
    })
}

fn quantize_component<T: Scalar>(
    tape: &Tape<T>,
    comp: Var,
    tbl: &[[f64; 8]; 8],
    rounding: bool,
) -> Var {
    let shape = tape.shape(comp);
    let (n, h, w) = (shape[0], shape[2], shape[3]);
    let coeffs = tape.dct8(comp);
    let inv = tile_table::<T>(tbl, n, h, w, true);
    let fwd = tile_table::<T>(tbl, n, h, w, false);
    let scaled = tape.mul_const(coeffs, &inv);
    let rounded = if rounding {
        tape.round_ste(scaled, 1.0)
    } else {
        scaled
    };
    let deq = tape.mul_const(rounded, &fwd);
    tape.idct8(deq)
}

/// Differentiable JPEG round trip on `[N,3,H,W]` values in [0,1].
pub fn diff_jpeg<T: Scalar>(tape: &Tape<T>, x: Var, quality: u8) -> Result<Var> {
    diff_jpeg_impl(tape, x, quality, true)
}

/// The same pipeline with coefficient rounding disabled. Because rounding is
/// straight-through, this shares the exact backward graph of [`diff_jpeg`];
/// it exists so gradient oracles can finite-difference a genuinely smooth
/// function.
pub fn diff_jpeg_linear<T: Scalar>(tape: &Tape<T>, x: Var, quality: u8) -> Result<Var> {
    diff_jpeg_impl(tape, x, quality, false)
}

fn diff_jpeg_impl<T: Scalar>(tape: &Tape<T>, x: Var, quality: u8, rounding: bool) -> Result<Var> {
    if quality == 0 || quality > 100 {
        return Err(DrawError::InvalidArgument(format!(
            "JPEG quality must lie in 1..=100, got {quality}"
        )));
    }
    let shape = tape.shape(x);
    if shape.len() != 4 || shape[1] != 3 || shape[2] % 16 != 0 || shape[3] % 16 != 0 {
        return Err(DrawError::Dimension(format!(
            "diff_jpeg expects [N,3,H,W] with H, W multiples of 16, got {shape:?}"
        )));
    }
    let luma_t = quant_table(&LUMA_BASE, quality);
    let chroma_t = quant_table(&CHROMA_BASE, quality);

    // to the shifted 255-domain; both color matrices are offset-free there
    let shifted = tape.add_scalar(tape.scale(x, 255.0), -128.0);
    let ycc = color_matrix(
        tape,
        shifted,
        [
            [0.299, 0.587, 0.114],
            [-0.168_736, -0.331_264, 0.5],
            [0.5, -0.418_688, -0.081_312],
        ],
    );
    let y = tape.slice_ch(ycc, 0, 1);
    let cb = tape.avgpool2(tape.slice_ch(ycc, 1, 2));
    let cr = tape.avgpool2(tape.slice_ch(ycc, 2, 3));

    let y = quantize_component(tape, y, &luma_t, rounding);
    let cb = quantize_component(tape, cb, &chroma_t, rounding);
    let cr = quantize_component(tape, cr, &chroma_t, rounding);

    let cb = tape.upsample_nearest2(cb);
    let cr = tape.upsample_nearest2(cr);
    let ycc = tape.concat_ch(&[y, cb, cr]);
    let rgb = color_matrix(
        tape,
        ycc,
        [
            [1.0, 0.0, 1.402],
            [1.0, -0.344_136, -0.714_136],
            [1.0, 1.772, 0.0],
        ],
    );
    let back = tape.scale(tape.add_scalar(rgb, 128.0), 1.0 / 255.0);
    Ok(tape.clamp01(back))
}

/// Round trip through a real JPEG encoder/decoder at the given quality.
/// Input and output are `[3,H,W]` in [0,1]; the input is quantized to 8 bits
/// as part of encoding.
pub fn real_jpeg(img: &Array3<f32>, quality: u8) -> Result<Array3<f32>> {
    let (_, h, w) = img.dim();
    let mut rgb8 = vec![0u8; h * w * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                rgb8[(y * w + x) * 3 + c] =
                    (f64::from(img[[c, y, x]]) * 255.0).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    let mut encoded = Vec::new();
    {
        let mut enc =
            image::codecs::jpeg::JpegEncoder::new_with_quality(&mut encoded, quality);
        enc.encode(&rgb8, w as u32, h as u32, image::ExtendedColorType::Rgb8)
            .map_err(|e| DrawError::Codec(e.to_string()))?;
    }
    let decoded = image::load_from_memory(&encoded)
        .map_err(|e| DrawError::Codec(e.to_string()))?
        .into_rgb8();
    Ok(Array3::from_shape_fn((3, h, w), |(c, y, x)| {
        f32::from(decoded.get_pixel(x as u32, y as u32).0[c]) / 255.0
    }))
}

/// Convenience non-tape wrapper around [`diff_jpeg`].
pub fn diff_jpeg_arr(img: &Array3<f32>, quality: u8) -> Result<Array3<f32>> {
    let (c, h, w) = img.dim();
    let tape: Tape<f32> = Tape::new();
    let x = tape.leaf(
        img.clone()
            .into_shape_with_order((1, c, h, w))
            .expect("contiguous")
            .into_dyn(),
        false,
    );
    let y = diff_jpeg(&tape, x, quality)?;
    let v = tape
        .value(y)
        .into_dimensionality::<ndarray::Ix4>()
        .expect("4d");
    Ok(v.index_axis(ndarray::Axis(0), 0).to_owned())
}

/// Mean absolute difference helper used by the oracle tests.
pub fn mean_abs_diff(a: &Array3<f32>, b: &Array3<f32>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| f64::from((x - y).abs()))
        .sum::<f64>()
        / a.len() as f64
}

/// 8-bit quantization of a [0,1] image.
pub fn quantize255(img: &Array3<f32>) -> Array3<f32> {
    img.mapv(|v| ((f64::from(v) * 255.0).round().clamp(0.0, 255.0) / 255.0) as f32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::psnr_arr;
    use crate::synth::smooth_rgb;

    #[test]
    fn quality_scaling_matches_reference_curve() {
        let t50 = quant_table(&LUMA_BASE, 50);
        // at q=50 the table equals the base
        for u in 0..8 {
            for v in 0..8 {
                assert_eq!(t50[u][v], LUMA_BASE[u][v]);
            }
        }
        let t100 = quant_table(&LUMA_BASE, 100);
        assert!(t100.iter().flatten().all(|&q| q >= 1.0));
        let t10 = quant_table(&LUMA_BASE, 10);
        assert!(t10[7][7] > t50[7][7]);
    }

    #[test]
    fn high_quality_round_trip_is_faithful() {
        let img = smooth_rgb(64, 64, 11);
        let out = diff_jpeg_arr(&img, 100).unwrap();
        let p = psnr_arr(img.view(), out.view()).unwrap();
        assert!(p > 38.0, "q100 psnr {p}");
    }

    #[test]
    fn psnr_monotone_in_quality() {
        let img = smooth_rgb(64, 64, 12);
        let p90 = psnr_arr(img.view(), diff_jpeg_arr(&img, 90).unwrap().view()).unwrap();
        let p50 = psnr_arr(img.view(), diff_jpeg_arr(&img, 50).unwrap().view()).unwrap();
        assert!(p90 > p50, "p90 {p90} <= p50 {p50}");
    }

    #[test]
    fn close_to_real_codec() {
        for (seed, q) in [(13u64, 50u8), (14, 90)] {
            let img = quantize255(&smooth_rgb(64, 64, seed));
            let ours = diff_jpeg_arr(&img, q).unwrap();
            let real = real_jpeg(&img, q).unwrap();
            let mad = mean_abs_diff(&ours, &real);
            assert!(mad < 0.02, "q{q} mean abs diff {mad}");
        }
    }

    #[test]
    fn invalid_quality_rejected() {
        let tape: Tape<f32> = Tape::new();
        let x = tape.leaf(Arr::zeros(IxDyn(&[1, 3, 16, 16])), false);
        assert!(diff_jpeg(&tape, x, 0).is_err());
        assert!(diff_jpeg(&tape, x, 101).is_err());
    }

    #[test]
    fn linear_pipeline_gradient_matches_finite_differences() {
        let img = smooth_rgb(16, 16, 15);
        let x = Arr::from_shape_fn(IxDyn(&[1, 3, 16, 16]), |ix| {
            f64::from(img[[ix[1], ix[2], ix[3]]])
        });
        let r = crate::tensor::check::grad_check(&[x], 1e-6, 97, |t, v| {
            let y = diff_jpeg_linear(t, v[0], 80).unwrap();
            t.mean_all(y)
        });
        assert!(r.max_rel_err < 1e-6, "{r:?}");
    }

    #[test]
    fn rounding_is_straight_through() {
        // the quantized and unquantized pipelines share one backward graph
        let img = smooth_rgb(16, 16, 16);
        let x = Arr::from_shape_fn(IxDyn(&[1, 3, 16, 16]), |ix| {
            f64::from(img[[ix[1], ix[2], ix[3]]])
        });
        let grads_of = |rounding: bool| {
            let t: Tape<f64> = Tape::new();
            let v = t.leaf(x.clone(), true);
            let y = if rounding {
                diff_jpeg(&t, v, 60).unwrap()
            } else {
                diff_jpeg_linear(&t, v, 60).unwrap()
            };
            // weighted sum so the probe is not constant over pixels
            let w = Arr::from_shape_fn(IxDyn(&[1, 3, 16, 16]), |ix| {
                ((ix[1] + 2 * ix[2] + 3 * ix[3]) as f64 * 0.05).sin()
            });
            let l = t.mul_const(y, &w);
            let loss = t.sum_all(l);
            let g = t.backward(loss);
            g[v.0].clone().unwrap()
        };
        let gq = grads_of(true);
        let gl = grads_of(false);
        let err = gq
            .iter()
            .zip(gl.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "straight-through mismatch {err}");
        // forward values genuinely differ (rounding active)
        let t: Tape<f64> = Tape::new();
        let v = t.leaf(x.clone(), false);
        let yq = t.value(diff_jpeg(&t, v, 60).unwrap());
        let yl = t.value(diff_jpeg_linear(&t, v, 60).unwrap());
        assert!(yq
            .iter()
            .zip(yl.iter())
            .any(|(a, b)| (a - b).abs() > 1e-4));
    }
}
