//! Dual-tree complex wavelet transform (forward/inverse, default 3 levels).
//!
//! Level 1 filters the image with odd-length biorthogonal filters without
//! decimating the lowpass; the three highpass products are quad-packed into
//! six oriented complex subbands at half resolution. Each deeper level runs
//! two phase-offset orthonormal trees (a 14-tap quarter-shift pair, tree b
//! the time-reverse of tree a) on the interleaved lowpass, decimating by two.
//! Boundaries are periodic, which keeps reconstruction exact to floating
//! point wherever every tree sees at least one full filter length
//! (min(H, W) >= 2^levels * 8 for the defaults, e.g. 64 at 3 levels).
//!
//! For an input `[C, H, W]` and 3 levels the pyramid holds six complex
//! subbands per level at `[C, 6, H/2^l, W/2^l]` plus a real lowpass at
//! `[C, H/4, W/4]` (the interleaved final-level tree lowpasses).
//!
//! Everything is linear; the tape integration below differentiates through
//! both directions.

mod filters;

use ndarray::{Array3, Array4, Axis, IxDyn};

use crate::error::{DrawError, Result};
use crate::tensor::{Arr, Scalar, Tape, Var};

use filters::{G0O, G1O, H0A, H0O, H1O};

/// Lowpass plus per-level complex subbands (stored as re/im pairs).
#[derive(Debug, Clone)]
pub struct WaveletPyramid<T: Scalar> {
    /// `[C, H/2^(levels-1), W/2^(levels-1)]`
    pub lowpass: Array3<T>,
    /// Per level `[C, 6, H/2^l, W/2^l]`, finest first.
    pub highpass_re: Vec<Array4<T>>,
    pub highpass_im: Vec<Array4<T>>,
}

impl<T: Scalar> WaveletPyramid<T> {
    pub fn levels(&self) -> usize {
        self.highpass_re.len()
    }
}

/// Tape handles for a decomposed batch.
///
/// `highpass[l]` has shape `[N, 12*C, H/2^(l+1), W/2^(l+1)]` with channel
/// layout `c*12 + band*2 + (0 = re, 1 = im)`; `lowpass` is
/// `[N, C, H/2^levels * 2, ...]` (interleaved tree lowpasses).
#[derive(Debug, Clone)]
pub struct DtcwtVars {
    pub lowpass: Var,
    pub highpass: Vec<Var>,
    pub channels: usize,
}

fn quarter_filters<T: Scalar>() -> ([T; 14], [T; 14], [T; 14], [T; 14]) {
    let mut h0a = [T::ZERO; 14];
    let mut h0b = [T::ZERO; 14];
    let mut h1a = [T::ZERO; 14];
    let mut h1b = [T::ZERO; 14];
    for n in 0..14 {
        h0a[n] = T::fromf64(H0A[n]);
        h0b[n] = T::fromf64(H0A[13 - n]);
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        h1a[n] = T::fromf64(sign * H0A[13 - n]);
        h1b[n] = T::fromf64(sign * H0A[n]);
    }
    (h0a, h0b, h1a, h1b)
}

fn to_t<T: Scalar>(f: &[f64]) -> Vec<T> {
    f.iter().map(|&v| T::fromf64(v)).collect()
}

// ---------------------------------------------------------------- tape ops

impl<T: Scalar> Tape<T> {
    /// Centered circular convolution along one spatial axis (2 = rows/H,
    /// 3 = cols/W).
    fn conv_circ_axis(&self, x: Var, taps: &[f64], axis: usize) -> Var {
        let tapsv: Vec<T> = to_t(taps);
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            (
                conv_circ_arr(&nodes[x.0].value, &tapsv, axis),
                nodes[x.0].needs_grad,
            )
        };
        let rev: Vec<f64> = taps.iter().rev().cloned().collect();
        let back = needs.then(|| {
            crate::tensor::boxed_back(
                move |up: &Arr<T>,
                      _ctx: &crate::tensor::BackCtx<'_, T>,
                      sink: &mut crate::tensor::GradSink<'_, T>| {
                    let revv: Vec<T> = to_t(&rev);
                    sink.add(x, conv_circ_arr(up, &revv, axis));
                },
            )
        });
        self.push(value, needs, back)
    }

    /// Dual-tree decimating stage along an axis: odd samples feed tree a
    /// (filter `fa`), even samples tree b (`fb`); outputs interleave at half
    /// length (tree a on odd indices).
    fn tree_down_axis(&self, x: Var, fa: &[f64], fb: &[f64], axis: usize) -> Var {
        let fav: Vec<T> = to_t(fa);
        let fbv: Vec<T> = to_t(fb);
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            (
                tree_down_arr(&nodes[x.0].value, &fav, &fbv, axis),
                nodes[x.0].needs_grad,
            )
        };
        let (fa2, fb2) = (fa.to_vec(), fb.to_vec());
        let back = needs.then(|| {
            crate::tensor::boxed_back(
                move |up: &Arr<T>,
                      _ctx: &crate::tensor::BackCtx<'_, T>,
                      sink: &mut crate::tensor::GradSink<'_, T>| {
                    let fav: Vec<T> = to_t(&fa2);
                    let fbv: Vec<T> = to_t(&fb2);
                    sink.add(x, tree_up_arr(up, &fav, &fbv, axis));
                },
            )
        });
        self.push(value, needs, back)
    }

    /// Transpose of [`Tape::tree_down_axis`] (the synthesis scatter).
    fn tree_up_axis(&self, y: Var, fa: &[f64], fb: &[f64], axis: usize) -> Var {
        let fav: Vec<T> = to_t(fa);
        let fbv: Vec<T> = to_t(fb);
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            (
                tree_up_arr(&nodes[y.0].value, &fav, &fbv, axis),
                nodes[y.0].needs_grad,
            )
        };
        let (fa2, fb2) = (fa.to_vec(), fb.to_vec());
        let back = needs.then(|| {
            crate::tensor::boxed_back(
                move |up: &Arr<T>,
                      _ctx: &crate::tensor::BackCtx<'_, T>,
                      sink: &mut crate::tensor::GradSink<'_, T>| {
                    let fav: Vec<T> = to_t(&fa2);
                    let fbv: Vec<T> = to_t(&fb2);
                    sink.add(y, tree_down_arr(up, &fav, &fbv, axis));
                },
            )
        });
        self.push(value, needs, back)
    }

    /// Quad-to-complex packing: `[N,C,H,W] -> [N,4C,H/2,W/2]` with per-channel
    /// planes `(re z1, im z1, re z2, im z2)`. Orthogonal, so the backward is
    /// the inverse packing.
    fn q2c(&self, x: Var) -> Var {
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            (q2c_arr(&nodes[x.0].value), nodes[x.0].needs_grad)
        };
        let back = needs.then(|| {
            crate::tensor::boxed_back(
                move |up: &Arr<T>,
                      _ctx: &crate::tensor::BackCtx<'_, T>,
                      sink: &mut crate::tensor::GradSink<'_, T>| {
                    sink.add(x, c2q_arr(up));
                },
            )
        });
        self.push(value, needs, back)
    }

    /// Inverse of [`Tape::q2c`].
    fn c2q(&self, x: Var) -> Var {
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            (c2q_arr(&nodes[x.0].value), nodes[x.0].needs_grad)
        };
        let back = needs.then(|| {
            crate::tensor::boxed_back(
                move |up: &Arr<T>,
                      _ctx: &crate::tensor::BackCtx<'_, T>,
                      sink: &mut crate::tensor::GradSink<'_, T>| {
                    sink.add(x, q2c_arr(up));
                },
            )
        });
        self.push(value, needs, back)
    }

    /// Channel gather: `out[k] = x[idx[k]]`.
    fn select_channels(&self, x: Var, idx: Vec<usize>) -> Var {
        let (value, needs, in_ch) = {
            let nodes = self.nodes.borrow();
            let v = &nodes[x.0].value;
            let shape = v.shape();
            let mut out_shape = shape.to_vec();
            out_shape[1] = idx.len();
            let mut out = Arr::zeros(IxDyn(&out_shape));
            for (k, &src) in idx.iter().enumerate() {
                out.index_axis_mut(Axis(1), k)
                    .assign(&v.index_axis(Axis(1), src));
            }
            (out, nodes[x.0].needs_grad, shape[1])
        };
        let back = needs.then(|| {
            crate::tensor::boxed_back(
                move |up: &Arr<T>,
                      _ctx: &crate::tensor::BackCtx<'_, T>,
                      sink: &mut crate::tensor::GradSink<'_, T>| {
                    let mut shape = up.shape().to_vec();
                    shape[1] = in_ch;
                    let mut g = Arr::zeros(IxDyn(&shape));
                    for (k, &src) in idx.iter().enumerate() {
                        let mut dst = g.index_axis_mut(Axis(1), src);
                        dst += &up.index_axis(Axis(1), k);
                    }
                    sink.add(x, g);
                },
            )
        });
        self.push(value, needs, back)
    }
}

// ------------------------------------------------------------- array kernels

fn conv_circ_arr<T: Scalar>(x: &Arr<T>, taps: &[T], axis: usize) -> Arr<T> {
    let shape = x.shape().to_vec();
    let n = shape[axis];
    let c = taps.len() / 2;
    let mut out = Arr::zeros(IxDyn(&shape));
    // out[j] = sum_i taps[i] * x[(j - (i - c)) mod n]
    for (i, &tv) in taps.iter().enumerate() {
        let shift = (i as isize - c as isize).rem_euclid(n as isize) as usize;
        // out[j] += tv * x[(j - shift) mod n]  == rolled x by +shift
        let lanes_out = out.lanes_mut(Axis(axis));
        let lanes_in = x.lanes(Axis(axis));
        for (mut lo, li) in lanes_out.into_iter().zip(lanes_in) {
            for j in 0..n {
                let src = (j + n - shift) % n;
                lo[j] += tv * li[src];
            }
        }
    }
    out
}

fn tree_down_arr<T: Scalar>(x: &Arr<T>, fa: &[T], fb: &[T], axis: usize) -> Arr<T> {
    let mut shape = x.shape().to_vec();
    let n = shape[axis];
    debug_assert!(n % 4 == 0, "tree stage needs length divisible by 4");
    shape[axis] = n / 2;
    let mut out = Arr::zeros(IxDyn(&shape));
    let m = fa.len();
    let half = n / 2;
    let lanes_out = out.lanes_mut(Axis(axis));
    let lanes_in = x.lanes(Axis(axis));
    for (mut lo, li) in lanes_out.into_iter().zip(lanes_in) {
        // tree a: odd input samples -> odd output slots
        // tree b: even input samples -> even output slots
        for i in 0..half / 2 {
            let mut acc_a = T::ZERO;
            let mut acc_b = T::ZERO;
            for (k, (&fav, &fbv)) in fa.iter().zip(fb.iter()).enumerate().take(m) {
                let src = ((2 * i + 1).wrapping_sub(k).wrapping_add(4 * half)) % half;
                // tree a input: x[2*src+1]; tree b input: x[2*src]
                acc_a += fav * li[2 * src + 1];
                acc_b += fbv * li[2 * src];
            }
            lo[2 * i + 1] = acc_a;
            lo[2 * i] = acc_b;
        }
    }
    out
}

fn tree_up_arr<T: Scalar>(y: &Arr<T>, fa: &[T], fb: &[T], axis: usize) -> Arr<T> {
    let mut shape = y.shape().to_vec();
    let half = shape[axis];
    shape[axis] = half * 2;
    let mut out = Arr::zeros(IxDyn(&shape));
    let m = fa.len();
    let lanes_out = out.lanes_mut(Axis(axis));
    let lanes_in = y.lanes(Axis(axis));
    for (mut lo, li) in lanes_out.into_iter().zip(lanes_in) {
        for i in 0..half / 2 {
            let va = li[2 * i + 1];
            let vb = li[2 * i];
            for (k, (&fav, &fbv)) in fa.iter().zip(fb.iter()).enumerate().take(m) {
                let src = ((2 * i + 1).wrapping_sub(k).wrapping_add(4 * half)) % half;
                lo[2 * src + 1] += fav * va;
                lo[2 * src] += fbv * vb;
            }
        }
    }
    out
}

fn q2c_arr<T: Scalar>(x: &Arr<T>) -> Arr<T> {
    let v = x
        .view()
        .into_dimensionality::<ndarray::Ix4>()
        .expect("q2c expects [N,C,H,W]");
    let (n, c, h, w) = v.dim();
    let s = T::fromf64(std::f64::consts::FRAC_1_SQRT_2);
    let mut out = Array4::zeros((n, 4 * c, h / 2, w / 2));
    for ni in 0..n {
        for ci in 0..c {
            for y in 0..h / 2 {
                for xx in 0..w / 2 {
                    let a = v[[ni, ci, 2 * y, 2 * xx]];
                    let b = v[[ni, ci, 2 * y, 2 * xx + 1]];
                    let cc = v[[ni, ci, 2 * y + 1, 2 * xx]];
                    let d = v[[ni, ci, 2 * y + 1, 2 * xx + 1]];
                    out[[ni, 4 * ci, y, xx]] = (a - d) * s;
                    out[[ni, 4 * ci + 1, y, xx]] = (b + cc) * s;
                    out[[ni, 4 * ci + 2, y, xx]] = (a + d) * s;
                    out[[ni, 4 * ci + 3, y, xx]] = (b - cc) * s;
                }
            }
        }
    }
    out.into_dyn()
}

fn c2q_arr<T: Scalar>(x: &Arr<T>) -> Arr<T> {
    let v = x
        .view()
        .into_dimensionality::<ndarray::Ix4>()
        .expect("c2q expects [N,4C,h,w]");
    let (n, c4, h, w) = v.dim();
    let c = c4 / 4;
    let s = T::fromf64(std::f64::consts::FRAC_1_SQRT_2);
    let mut out = Array4::zeros((n, c, h * 2, w * 2));
    for ni in 0..n {
        for ci in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let z1r = v[[ni, 4 * ci, y, xx]];
                    let z1i = v[[ni, 4 * ci + 1, y, xx]];
                    let z2r = v[[ni, 4 * ci + 2, y, xx]];
                    let z2i = v[[ni, 4 * ci + 3, y, xx]];
                    out[[ni, ci, 2 * y, 2 * xx]] = (z1r + z2r) * s;
                    out[[ni, ci, 2 * y, 2 * xx + 1]] = (z1i + z2i) * s;
                    out[[ni, ci, 2 * y + 1, 2 * xx]] = (z1i - z2i) * s;
                    out[[ni, ci, 2 * y + 1, 2 * xx + 1]] = (z2r - z1r) * s;
                }
            }
        }
    }
    out.into_dyn()
}

// --------------------------------------------------------------- transform

/// Canonical channel layout: for input channel `c` and band `b`,
/// `out[c*12 + b*2] = re`, `out[c*12 + b*2 + 1] = im`.
///
/// Band pairs per filter product: horizontal `(0,5)`, diagonal `(1,4)`,
/// vertical `(2,3)`.
fn band_gather_indices(c: usize) -> Vec<usize> {
    // sources are the concatenation [q2c(hilo) | q2c(lohi) | q2c(hihi)],
    // each of width 4c with per-channel planes (z1re, z1im, z2re, z2im)
    let base_hilo = 0;
    let base_lohi = 4 * c;
    let base_hihi = 8 * c;
    let mut idx = Vec::with_capacity(12 * c);
    for ci in 0..c {
        let hilo = base_hilo + 4 * ci;
        let lohi = base_lohi + 4 * ci;
        let hihi = base_hihi + 4 * ci;
        // band 0: hilo z1; band 1: hihi z1; band 2: lohi z1;
        // band 3: lohi z2; band 4: hihi z2; band 5: hilo z2
        idx.extend_from_slice(&[
            hilo,
            hilo + 1,
            hihi,
            hihi + 1,
            lohi,
            lohi + 1,
            lohi + 2,
            lohi + 3,
            hihi + 2,
            hihi + 3,
            hilo + 2,
            hilo + 3,
        ]);
    }
    idx
}

/// Inverse of [`band_gather_indices`]: scatter canonical channels back into
/// the `[hilo | lohi | hihi]` q2c packing.
fn band_scatter_indices(c: usize) -> Vec<usize> {
    let gather = band_gather_indices(c);
    let mut inv = vec![0usize; gather.len()];
    for (k, &src) in gather.iter().enumerate() {
        inv[src] = k;
    }
    inv
}

/// Decompose `[N, C, H, W]`; `H`, `W` must be divisible by `2^levels` and
/// `levels >= 1`.
pub fn forward_vars<T: Scalar>(tape: &Tape<T>, x: Var, levels: usize) -> Result<DtcwtVars> {
    let shape = tape.shape(x);
    if shape.len() != 4 {
        return Err(DrawError::Dimension("dtcwt expects [N,C,H,W]".into()));
    }
    let (c, h, w) = (shape[1], shape[2], shape[3]);
    if levels == 0 {
        return Err(DrawError::InvalidArgument("levels must be >= 1".into()));
    }
    let div = 1 << levels;
    if h % div != 0 || w % div != 0 {
        return Err(DrawError::Dimension(format!(
            "dtcwt needs H, W divisible by 2^levels = {div}, got {h}x{w}"
        )));
    }

    let (h0a, h0b, h1a, h1b) = quarter_filters::<f64>();
    let gather = band_gather_indices(c);

    let mut highpass = Vec::with_capacity(levels);
    // level 1: odd biorthogonal filters, undecimated
    let lo_c = tape.conv_circ_axis(x, &H0O, 2);
    let hi_c = tape.conv_circ_axis(x, &H1O, 2);
    let mut lolo = tape.conv_circ_axis(lo_c, &H0O, 3);
    let lohi = tape.conv_circ_axis(lo_c, &H1O, 3);
    let hilo = tape.conv_circ_axis(hi_c, &H0O, 3);
    let hihi = tape.conv_circ_axis(hi_c, &H1O, 3);
    let packs = [tape.q2c(hilo), tape.q2c(lohi), tape.q2c(hihi)];
    let stacked = tape.concat_ch(&packs);
    highpass.push(tape.select_channels(stacked, gather.clone()));

    for _level in 1..levels {
        let lo_stage = tape.tree_down_axis(lolo, &h0a, &h0b, 2);
        let hi_stage = tape.tree_down_axis(lolo, &h1a, &h1b, 2);
        let lolo1 = tape.tree_down_axis(lo_stage, &h0a, &h0b, 3);
        let lohi1 = tape.tree_down_axis(lo_stage, &h1a, &h1b, 3);
        let hilo1 = tape.tree_down_axis(hi_stage, &h0a, &h0b, 3);
        let hihi1 = tape.tree_down_axis(hi_stage, &h1a, &h1b, 3);
        let packs = [tape.q2c(hilo1), tape.q2c(lohi1), tape.q2c(hihi1)];
        let stacked = tape.concat_ch(&packs);
        highpass.push(tape.select_channels(stacked, gather.clone()));
        lolo = lolo1;
    }

    Ok(DtcwtVars {
        lowpass: lolo,
        highpass,
        channels: c,
    })
}

/// Reconstruct `[N, C, H, W]` from tape subbands.
pub fn inverse_vars<T: Scalar>(tape: &Tape<T>, pyr: &DtcwtVars) -> Var {
    let c = pyr.channels;
    let scatter = band_scatter_indices(c);
    let (h0a, h0b, h1a, h1b) = quarter_filters::<f64>();
    let levels = pyr.highpass.len();

    let unpack = |band_var: Var| -> (Var, Var, Var) {
        let packed = tape.select_channels(band_var, scatter.clone());
        let hilo = tape.slice_ch(packed, 0, 4 * c);
        let lohi = tape.slice_ch(packed, 4 * c, 8 * c);
        let hihi = tape.slice_ch(packed, 8 * c, 12 * c);
        (tape.c2q(hilo), tape.c2q(lohi), tape.c2q(hihi))
    };

    let mut lolo = pyr.lowpass;
    for level in (1..levels).rev() {
        let (hilo, lohi, hihi) = unpack(pyr.highpass[level]);
        let a = tape.tree_up_axis(lolo, &h0a, &h0b, 3);
        let b = tape.tree_up_axis(lohi, &h1a, &h1b, 3);
        let lo_stage = tape.add(a, b);
        let a = tape.tree_up_axis(hilo, &h0a, &h0b, 3);
        let b = tape.tree_up_axis(hihi, &h1a, &h1b, 3);
        let hi_stage = tape.add(a, b);
        let a = tape.tree_up_axis(lo_stage, &h0a, &h0b, 2);
        let b = tape.tree_up_axis(hi_stage, &h1a, &h1b, 2);
        lolo = tape.add(a, b);
    }
    let (hilo, lohi, hihi) = unpack(pyr.highpass[0]);
    let a = tape.conv_circ_axis(lolo, &G0O, 3);
    let b = tape.conv_circ_axis(lohi, &G1O, 3);
    let lo_c = tape.add(a, b);
    let a = tape.conv_circ_axis(hilo, &G0O, 3);
    let b = tape.conv_circ_axis(hihi, &G1O, 3);
    let hi_c = tape.add(a, b);
    let a = tape.conv_circ_axis(lo_c, &G0O, 2);
    let b = tape.conv_circ_axis(hi_c, &G1O, 2);
    tape.add(a, b)
}

/// Plain-array forward transform of `[C, H, W]`.
pub fn dtcwt_forward<T: Scalar>(image: &Array3<T>, levels: usize) -> Result<WaveletPyramid<T>> {
    let (c, h, w) = image.dim();
    let tape: Tape<T> = Tape::new();
    let x = tape.leaf(
        image
            .clone()
            .into_shape_with_order((1, c, h, w))
            .expect("contiguous")
            .into_dyn(),
        false,
    );
    let pyr = forward_vars(&tape, x, levels)?;
    let mut highpass_re = Vec::new();
    let mut highpass_im = Vec::new();
    for hv in &pyr.highpass {
        let v = tape.value(*hv);
        let v = v.into_dimensionality::<ndarray::Ix4>().expect("4d");
        let (_, _, hh, ww) = v.dim();
        let mut re = Array4::zeros((c, 6, hh, ww));
        let mut im = Array4::zeros((c, 6, hh, ww));
        for ci in 0..c {
            for b in 0..6 {
                for y in 0..hh {
                    for xx in 0..ww {
                        re[[ci, b, y, xx]] = v[[0, ci * 12 + b * 2, y, xx]];
                        im[[ci, b, y, xx]] = v[[0, ci * 12 + b * 2 + 1, y, xx]];
                    }
                }
            }
        }
        highpass_re.push(re);
        highpass_im.push(im);
    }
    let low = tape.value(pyr.lowpass);
    let low = low.into_dimensionality::<ndarray::Ix4>().expect("4d");
    let lowpass = low.index_axis(Axis(0), 0).to_owned();
    Ok(WaveletPyramid {
        lowpass,
        highpass_re,
        highpass_im,
    })
}

/// Plain-array inverse transform.
pub fn dtcwt_inverse<T: Scalar>(pyr: &WaveletPyramid<T>) -> Result<Array3<T>> {
    let levels = pyr.levels();
    if levels == 0 {
        return Err(DrawError::InvalidArgument("empty pyramid".into()));
    }
    let (c, lh, lw) = pyr.lowpass.dim();
    let tape: Tape<T> = Tape::new();
    let low = tape.leaf(
        pyr.lowpass
            .clone()
            .into_shape_with_order((1, c, lh, lw))
            .expect("contiguous")
            .into_dyn(),
        false,
    );
    let mut highpass = Vec::new();
    for (re, im) in pyr.highpass_re.iter().zip(&pyr.highpass_im) {
        let (c2, b6, hh, ww) = re.dim();
        if c2 != c || b6 != 6 || re.dim() != im.dim() {
            return Err(DrawError::Dimension(
                "pyramid subband shapes are inconsistent".into(),
            ));
        }
        let mut v = Array4::zeros((1, 12 * c, hh, ww));
        for ci in 0..c {
            for b in 0..6 {
                for y in 0..hh {
                    for xx in 0..ww {
                        v[[0, ci * 12 + b * 2, y, xx]] = re[[ci, b, y, xx]];
                        v[[0, ci * 12 + b * 2 + 1, y, xx]] = im[[ci, b, y, xx]];
                    }
                }
            }
        }
        highpass.push(tape.leaf(v.into_dyn(), false));
    }
    // shape consistency across levels: each level halves
    for l in 1..levels {
        let a = tape.shape(highpass[l - 1]);
        let b = tape.shape(highpass[l]);
        if a[2] != 2 * b[2] || a[3] != 2 * b[3] {
            return Err(DrawError::Dimension(
                "pyramid levels do not halve consistently".into(),
            ));
        }
    }
    let vars = DtcwtVars {
        lowpass: low,
        highpass,
        channels: c,
    };
    let y = inverse_vars(&tape, &vars);
    let out = tape.value(y).into_dimensionality::<ndarray::Ix4>().expect("4d");
    Ok(out.index_axis(Axis(0), 0).to_owned())
}
