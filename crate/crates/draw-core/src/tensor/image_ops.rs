//! Image-domain ops on the tape: Bayer mosaic/demosaic, color adjustments,
//! median filtering and replicate-border Gaussian blur.

use ndarray::Array4;

use super::conv::as4;
use super::{boxed_back, Arr, Scalar, Tape, Var};
use crate::imaging::BayerPattern;

/// Parity-preserving reflection onto same-channel sites (mirrors the
/// non-autodiff demosaic in `imaging`).
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i > n - 1 {
        i = 2 * (n - 1) - i;
    }
    i as usize
}

/// Bilinear-demosaic taps for output pixel `(c, y, x)`: up to 4 source sites
/// with weights summing to 1.
fn demosaic_taps(
    pattern: BayerPattern,
    c: usize,
    y: usize,
    x: usize,
    h: usize,
    w: usize,
) -> ([(usize, usize); 4], f64, usize) {
    let (yi, xi) = (y as isize, x as isize);
    if c == 1 {
        let (gr, gc) = match pattern {
            BayerPattern::Rggb | BayerPattern::Bggr => (0usize, 1usize),
            BayerPattern::Grbg | BayerPattern::Gbrg => (0, 0),
        };
        if (y + x) % 2 == (gr + gc) % 2 {
            ([(y, x); 4], 1.0, 1)
        } else {
            (
                [
                    (reflect(yi - 1, h), x),
                    (reflect(yi + 1, h), x),
                    (y, reflect(xi - 1, w)),
                    (y, reflect(xi + 1, w)),
                ],
                0.25,
                4,
            )
        }
    } else {
        let (r0, c0) = if c == 0 {
            pattern.red_offset()
        } else {
            pattern.blue_offset()
        };
        let dy = (y + 2 - r0) % 2;
        let dx = (x + 2 - c0) % 2;
        match (dy, dx) {
            (0, 0) => ([(y, x); 4], 1.0, 1),
            (0, 1) => (
                [(y, reflect(xi - 1, w)), (y, reflect(xi + 1, w)), (0, 0), (0, 0)],
                0.5,
                2,
            ),
            (1, 0) => (
                [(reflect(yi - 1, h), x), (reflect(yi + 1, h), x), (0, 0), (0, 0)],
                0.5,
                2,
            ),
            _ => (
                [
                    (reflect(yi - 1, h), reflect(xi - 1, w)),
                    (reflect(yi - 1, h), reflect(xi + 1, w)),
                    (reflect(yi + 1, h), reflect(xi - 1, w)),
                    (reflect(yi + 1, h), reflect(xi + 1, w)),
                ],
                0.25,
                4,
            ),
        }
    }
}

impl<T: Scalar> Tape<T> {
    /// Sample `[N,3,H,W]` down to a Bayer plane `[N,1,H,W]`.
    pub fn mosaic(&self, rgb: Var, pattern: BayerPattern) -> Var {
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            let xv = as4(&nodes[rgb.0].value);
            let (n, _, h, w) = xv.dim();
            let out = Array4::from_shape_fn((n, 1, h, w), |(ni, _, y, x)| {
                xv[[ni, pattern.channel_at(y, x), y, x]]
            });
            (out.into_dyn(), nodes[rgb.0].needs_grad)
        };
        let back = needs.then(|| {
            boxed_back(
                move |up: &Arr<T>, ctx: &super::BackCtx<'_, T>, sink: &mut super::GradSink<'_, T>| {
                    let upv = as4(up);
                    let (n, _, h, w) = upv.dim();
                    let _ = ctx;
                    let mut g = Array4::zeros((n, 3, h, w));
                    for ni in 0..n {
                        for y in 0..h {
                            for x in 0..w {
                                g[[ni, pattern.channel_at(y, x), y, x]] = upv[[ni, 0, y, x]];
                            }
                        }
                    }
                    sink.add(rgb, g.into_dyn());
                },
            )
        });
        self.push(value, needs, back)
    }

    /// Bilinear demosaic `[N,1,H,W] -> [N,3,H,W]`.
    pub fn demosaic(&self, raw: Var, pattern: BayerPattern) -> Var {
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            let xv = as4(&nodes[raw.0].value);
            let (n, _, h, w) = xv.dim();
            let mut out = Array4::zeros((n, 3, h, w));
            for ni in 0..n {
                for c in 0..3 {
                    for y in 0..h {
                        for x in 0..w {
                            let (taps, wgt, k) = demosaic_taps(pattern, c, y, x, h, w);
                            let mut acc = T::ZERO;
                            for t in taps.iter().take(k) {
                                acc += xv[[ni, 0, t.0, t.1]];
                            }
                            out[[ni, c, y, x]] = acc * T::fromf64(wgt);
                        }
                    }
                }
            }
            (out.into_dyn(), nodes[raw.0].needs_grad)
        };
        let back = needs.then(|| {
            boxed_back(
                move |up: &Arr<T>, _ctx: &super::BackCtx<'_, T>, sink: &mut super::GradSink<'_, T>| {
                    let upv = as4(up);
                    let (n, _, h, w) = upv.dim();
                    let mut g = Array4::zeros((n, 1, h, w));
                    for ni in 0..n {
                        for c in 0..3 {
                            for y in 0..h {
                                for x in 0..w {
                                    let (taps, wgt, k) = demosaic_taps(pattern, c, y, x, h, w);
                                    let gv = upv[[ni, c, y, x]] * T::fromf64(wgt);
                                    for t in taps.iter().take(k) {
                                        g[[ni, 0, t.0, t.1]] += gv;
                                    }
                                }
                            }
                        }
                    }
                    sink.add(raw, g.into_dyn());
                },
            )
        });
        self.push(value, needs, back)
    }

    /// Per-pixel luma blend: `out = luma + f*(x - luma)`. Gray inputs are
    /// fixed points for every factor.
    pub fn saturation_adjust(&self, x: Var, factor: f64) -> Var {
        const LW: [f64; 3] = [0.299, 0.587, 0.114];
        let f = T::fromf64(factor);
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            let xv = as4(&nodes[x.0].value);
            let (n, c, h, w) = xv.dim();
            debug_assert_eq!(c, 3);
            let mut out = Array4::zeros((n, 3, h, w));
            for ni in 0..n {
                for y in 0..h {
                    for xx in 0..w {
                        let l = T::fromf64(LW[0]) * xv[[ni, 0, y, xx]]
                            + T::fromf64(LW[1]) * xv[[ni, 1, y, xx]]
                            + T::fromf64(LW[2]) * xv[[ni, 2, y, xx]];
                        for ci in 0..3 {
                            out[[ni, ci, y, xx]] = l + f * (xv[[ni, ci, y, xx]] - l);
                        }
                    }
                }
            }
            (out.into_dyn(), nodes[x.0].needs_grad)
        };
        let back = needs.then(|| {
            boxed_back(
                move |up: &Arr<T>, _ctx: &super::BackCtx<'_, T>, sink: &mut super::GradSink<'_, T>| {
                    let upv = as4(up);
                    let (n, _, h, w) = upv.dim();
                    let mut g = Array4::zeros((n, 3, h, w));
                    for ni in 0..n {
                        for y in 0..h {
                            for xx in 0..w {
                                let gsum = upv[[ni, 0, y, xx]]
                                    + upv[[ni, 1, y, xx]]
                                    + upv[[ni, 2, y, xx]];
                                for ci in 0..3 {
                                    g[[ni, ci, y, xx]] = f * upv[[ni, ci, y, xx]]
                                        + (T::ONE - f) * T::fromf64(LW[ci]) * gsum;
                                }
                            }
                        }
                    }
                    sink.add(x, g.into_dyn());
                },
            )
        });
        self.push(value, needs, back)
    }

    /// Mean-anchored contrast: `out = m + f*(x - m)` with `m` the per-sample
    /// gray mean.
    pub fn contrast_adjust(&self, x: Var, factor: f64) -> Var {
        const LW: [f64; 3] = [0.299, 0.587, 0.114];
        let f = T::fromf64(factor);
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            let xv = as4(&nodes[x.0].value);
            let (n, _, h, w) = xv.dim();
            let inv = 1.0 / (h * w) as f64;
            let mut out = Array4::zeros((n, 3, h, w));
            for ni in 0..n {
                let mut m = T::ZERO;
                for y in 0..h {
                    for xx in 0..w {
                        m += T::fromf64(LW[0]) * xv[[ni, 0, y, xx]]
                            + T::fromf64(LW[1]) * xv[[ni, 1, y, xx]]
                            + T::fromf64(LW[2]) * xv[[ni, 2, y, xx]];
                    }
                }
                m = m * T::fromf64(inv);
                for ci in 0..3 {
                    for y in 0..h {
                        for xx in 0..w {
                            out[[ni, ci, y, xx]] = m + f * (xv[[ni, ci, y, xx]] - m);
                        }
                    }
                }
            }
            (out.into_dyn(), nodes[x.0].needs_grad)
        };
        let back = needs.then(|| {
            boxed_back(
                move |up: &Arr<T>, _ctx: &super::BackCtx<'_, T>, sink: &mut super::GradSink<'_, T>| {
                    let upv = as4(up);
                    let (n, _, h, w) = upv.dim();
                    let inv = T::fromf64(1.0 / (h * w) as f64);
                    let mut g = Array4::zeros((n, 3, h, w));
                    for ni in 0..n {
                        let mut gtot = T::ZERO;
                        for ci in 0..3 {
                            for y in 0..h {
                                for xx in 0..w {
                                    gtot += upv[[ni, ci, y, xx]];
                                }
                            }
                        }
                        let carry = (T::ONE - f) * gtot * inv;
                        for ci in 0..3 {
                            let lw = T::fromf64(LW[ci]);
                            for y in 0..h {
                                for xx in 0..w {
                                    g[[ni, ci, y, xx]] =
                                        f * upv[[ni, ci, y, xx]] + carry * lw;
                                }
                            }
                        }
                    }
                    sink.add(x, g.into_dyn());
                },
            )
        });
        self.push(value, needs, back)
    }

    /// Cyclic HSV hue rotation by `factor` (fraction of a full turn).
    pub fn hue_rotate(&self, x: Var, factor: f64) -> Var {
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            let xv = as4(&nodes[x.0].value);
            let (n, _, h, w) = xv.dim();
            let mut out = Array4::zeros((n, 3, h, w));
            for ni in 0..n {
                for y in 0..h {
                    for xx in 0..w {
                        let p = [
                            xv[[ni, 0, y, xx]].tof64(),
                            xv[[ni, 1, y, xx]].tof64(),
                            xv[[ni, 2, y, xx]].tof64(),
                        ];
                        let (o, _) = hue_rotate_pixel(p, factor);
                        for ci in 0..3 {
                            out[[ni, ci, y, xx]] = T::fromf64(o[ci]);
                        }
                    }
                }
            }
            (out.into_dyn(), nodes[x.0].needs_grad)
        };
        let back = needs.then(|| {
            boxed_back(
                move |up: &Arr<T>, ctx: &super::BackCtx<'_, T>, sink: &mut super::GradSink<'_, T>| {
                    let xv = as4(ctx.value(x));
                    let upv = as4(up);
                    let (n, _, h, w) = upv.dim();
                    let mut g = Array4::zeros((n, 3, h, w));
                    for ni in 0..n {
                        for y in 0..h {
                            for xx in 0..w {
                                let p = [
                                    xv[[ni, 0, y, xx]].tof64(),
                                    xv[[ni, 1, y, xx]].tof64(),
                                    xv[[ni, 2, y, xx]].tof64(),
                                ];
                                let (_, jac) = hue_rotate_pixel(p, factor);
                                let gu = [
                                    upv[[ni, 0, y, xx]].tof64(),
                                    upv[[ni, 1, y, xx]].tof64(),
                                    upv[[ni, 2, y, xx]].tof64(),
                                ];
                                for ci in 0..3 {
                                    let mut acc = 0.0;
                                    for oi in 0..3 {
                                        acc += gu[oi] * jac[oi][ci];
                                    }
                                    g[[ni, ci, y, xx]] = T::fromf64(acc);
                                }
                            }
                        }
                    }
                    sink.add(x, g.into_dyn());
                },
            )
        });
        self.push(value, needs, back)
    }

    /// k x k median filter with replicate borders; the gradient routes to the
    /// pixel selected as the median (ties keep the first in scan order).
    pub fn median_blur(&self, x: Var, k: usize) -> Var {
        debug_assert!(k % 2 == 1);
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            let xv = as4(&nodes[x.0].value);
            let (n, c, h, w) = xv.dim();
            let mut out = Array4::zeros((n, c, h, w));
            for ni in 0..n {
                for ci in 0..c {
                    for y in 0..h {
                        for xx in 0..w {
                            let (v, _, _) = median_at(&xv, ni, ci, y, xx, k);
                            out[[ni, ci, y, xx]] = v;
                        }
                    }
                }
            }
            (out.into_dyn(), nodes[x.0].needs_grad)
        };
        let back = needs.then(|| {
            boxed_back(
                move |up: &Arr<T>, ctx: &super::BackCtx<'_, T>, sink: &mut super::GradSink<'_, T>| {
                    let xv = as4(ctx.value(x));
                    let upv = as4(up);
                    let (n, c, h, w) = upv.dim();
                    let mut g = Array4::zeros((n, c, h, w));
                    for ni in 0..n {
                        for ci in 0..c {
                            for y in 0..h {
                                for xx in 0..w {
                                    let (_, my, mx) = median_at(&xv, ni, ci, y, xx, k);
                                    g[[ni, ci, my, mx]] += upv[[ni, ci, y, xx]];
                                }
                            }
                        }
                    }
                    sink.add(x, g.into_dyn());
                },
            )
        });
        self.push(value, needs, back)
    }

    /// Gaussian blur with replicate borders (a fixed linear map).
    pub fn gaussian_blur(&self, x: Var, k: usize, sigma: f64) -> Var {
        let kernel = gaussian_kernel::<T>(k, sigma);
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            (
                blur_replicate(&as4(&nodes[x.0].value).to_owned(), &kernel).into_dyn(),
                nodes[x.0].needs_grad,
            )
        };
        let back = needs.then(|| {
            boxed_back(
                move |up: &Arr<T>, _ctx: &super::BackCtx<'_, T>, sink: &mut super::GradSink<'_, T>| {
                    // adjoint: scatter with the same (symmetric) kernel
                    let upv = as4(up).to_owned();
                    let (n, c, h, w) = upv.dim();
                    let kk = kernel.len();
                    let pad = kk / 2;
                    let mut g = Array4::zeros((n, c, h, w));
                    for ni in 0..n {
                        for ci in 0..c {
                            for y in 0..h {
                                for xx in 0..w {
                                    let gv = upv[[ni, ci, y, xx]];
                                    for dy in 0..kk {
                                        let iy = (y + dy).saturating_sub(pad).min(h - 1);
                                        for dx in 0..kk {
                                            let ix = (xx + dx).saturating_sub(pad).min(w - 1);
                                            g[[ni, ci, iy, ix]] +=
                                                gv * kernel[dy] * kernel[dx];
                                        }
                                    }
                                }
                            }
                        }
                    }
                    sink.add(x, g.into_dyn());
                },
            )
        });
        self.push(value, needs, back)
    }
}

fn median_at<T: Scalar>(
    xv: &ndarray::ArrayView4<'_, T>,
    n: usize,
    c: usize,
    y: usize,
    x: usize,
    k: usize,
) -> (T, usize, usize) {
    let (_, _, h, w) = xv.dim();
    let pad = (k / 2) as isize;
    let mut vals: Vec<(T, usize, usize)> = Vec::with_capacity(k * k);
    for dy in -pad..=pad {
        let iy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
        for dx in -pad..=pad {
            let ix = (x as isize + dx).clamp(0, w as isize - 1) as usize;
            vals.push((xv[[n, c, iy, ix]], iy, ix));
        }
    }
    // stable selection: sort by value then coordinates for determinism
    vals.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    vals[vals.len() / 2]
}

pub(crate) fn gaussian_kernel<T: Scalar>(k: usize, sigma: f64) -> Vec<T> {
    let pad = (k / 2) as f64;
    let mut v: Vec<f64> = (0..k)
        .map(|i| (-(i as f64 - pad).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v.into_iter().map(T::fromf64).collect()
}

pub(crate) fn blur_replicate<T: Scalar>(x: &Array4<T>, kernel: &[T]) -> Array4<T> {
    let (n, c, h, w) = x.dim();
    let k = kernel.len();
    let pad = k / 2;
    // separable: rows then cols, replicate borders
    let mut tmp = Array4::zeros((n, c, h, w));
    for ni in 0..n {
        for ci in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = T::ZERO;
                    for d in 0..k {
                        let ix = (xx + d).saturating_sub(pad).min(w - 1);
                        acc += kernel[d] * x[[ni, ci, y, ix]];
                    }
                    tmp[[ni, ci, y, xx]] = acc;
                }
            }
        }
    }
    let mut out = Array4::zeros((n, c, h, w));
    for ni in 0..n {
        for ci in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = T::ZERO;
                    for d in 0..k {
                        let iy = (y + d).saturating_sub(pad).min(h - 1);
                        acc += kernel[d] * tmp[[ni, ci, iy, xx]];
                    }
                    out[[ni, ci, y, xx]] = acc;
                }
            }
        }
    }
    out
}

/// Hue rotation of one RGB pixel plus its 3x3 Jacobian.
pub(crate) fn hue_rotate_pixel(p: [f64; 3], factor: f64) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut im = 0usize;
    let mut jm = 0usize;
    for i in 1..3 {
        if p[i] > p[im] {
            im = i;
        }
        if p[i] < p[jm] {
            jm = i;
        }
    }
    let big = p[im];
    let small = p[jm];
    let c = big - small;
    if c <= 0.0 {
        // gray pixel: hue undefined, rotation is the identity
        let mut jac = [[0.0; 3]; 3];
        for (i, row) in jac.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        return (p, jac);
    }

    // hue in sixths plus the numerator u of the branch formula
    let (u, offset) = match im {
        0 => (p[1] - p[2], 0.0),
        1 => (p[2] - p[0], 2.0),
        _ => (p[0] - p[1], 4.0),
    };
    let h6 = u / c + offset; // in (-1, 5]
    let mut h6p = h6 + 6.0 * factor;
    h6p = h6p.rem_euclid(6.0);
    let k = (h6p.floor() as i64).clamp(0, 5) as usize;
    let t = h6p - k as f64;
    let (s, t_eff) = if k % 2 == 0 { (1.0, t) } else { (-1.0, 1.0 - t) };
    let x = c * t_eff;

    // positions of (max, mid, min) in the output per sector
    // sector: (c+m, x+m, m) permuted
    let perm: [[usize; 3]; 6] = [
        [0, 1, 2], // R=max G=mid B=min
        [1, 0, 2],
        [1, 2, 0],
        [2, 1, 0],
        [2, 0, 1],
        [0, 2, 1],
    ];
    let pos = perm[k];
    let mut out = [0.0; 3];
    out[pos[0]] = big;
    out[pos[1]] = small + x;
    out[pos[2]] = small;

    // partials of x = c * t_eff, with t_eff = s*(u/c + const):
    // dx/dv = t_eff * dc/dv + s*(du/dv - (u/c)*dc/dv)
    let mut du = [0.0; 3];
    match im {
        0 => {
            du[1] = 1.0;
            du[2] = -1.0;
        }
        1 => {
            du[2] = 1.0;
            du[0] = -1.0;
        }
        _ => {
            du[0] = 1.0;
            du[1] = -1.0;
        }
    }
    let mut dc = [0.0; 3];
    dc[im] += 1.0;
    dc[jm] -= 1.0;
    let uc = u / c;
    let mut dx = [0.0; 3];
    for v in 0..3 {
        dx[v] = t_eff * dc[v] + s * (du[v] - uc * dc[v]);
    }

    let mut jac = [[0.0; 3]; 3];
    // out[pos[0]] = max -> depends on input channel im
    jac[pos[0]][im] = 1.0;
    // out[pos[2]] = min -> input channel jm
    jac[pos[2]][jm] = 1.0;
    // out[pos[1]] = min + x
    jac[pos[1]][jm] += 1.0;
    for v in 0..3 {
        jac[pos[1]][v] += dx[v];
    }
    (out, jac)
}

#[cfg(test)]
mod tests {
    use super::super::{Arr, Tape};
    use super::*;
    use ndarray::IxDyn;

    #[test]
    fn mosaic_demosaic_match_imaging_kernels() {
        let t: Tape<f32> = Tape::new();
        let data = ndarray::Array3::from_shape_fn((3, 16, 16), |(c, y, x)| {
            ((c * 31 + y * 7 + x * 3) % 97) as f32 / 96.0
        });
        let rgb = crate::imaging::RgbImage::from_data(data.clone()).unwrap();
        for pattern in [
            BayerPattern::Rggb,
            BayerPattern::Bggr,
            BayerPattern::Grbg,
            BayerPattern::Gbrg,
        ] {
            let x = t.leaf(
                data.clone()
                    .into_shape_with_order((1, 3, 16, 16))
                    .unwrap()
                    .into_dyn(),
                false,
            );
            let m = t.mosaic(x, pattern);
            let raw_ref = crate::imaging::mosaic(&rgb, pattern).unwrap();
            let mv = t.value(m);
            for y in 0..16 {
                for xx in 0..16 {
                    assert_eq!(mv[[0, 0, y, xx]], raw_ref.data()[[y, xx]]);
                }
            }
            let d = t.demosaic(m, pattern);
            let demo_ref = crate::imaging::demosaic_bilinear(&raw_ref).unwrap();
            let dv = t.value(d);
            for c in 0..3 {
                for y in 0..16 {
                    for xx in 0..16 {
                        assert!((dv[[0, c, y, xx]] - demo_ref.data()[[c, y, xx]]).abs() < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn gray_pixels_are_saturation_fixed_points() {
        let t: Tape<f64> = Tape::new();
        let x = t.leaf(Arr::from_elem(IxDyn(&[1, 3, 4, 4]), 0.42), false);
        for f in [0.7, 1.0, 1.5] {
            let y = t.saturation_adjust(x, f);
            assert!(t.value(y).iter().all(|&v| (v - 0.42).abs() < 1e-12));
        }
    }

    #[test]
    fn contrast_identity_at_factor_one() {
        let t: Tape<f64> = Tape::new();
        let x = t.leaf(
            Arr::from_shape_fn(IxDyn(&[1, 3, 4, 4]), |ix| {
                (ix[1] as f64 * 0.2 + ix[2] as f64 * 0.07 + ix[3] as f64 * 0.03) % 1.0
            }),
            false,
        );
        let y = t.contrast_adjust(x, 1.0);
        let err = t
            .value(y)
            .iter()
            .zip(t.value(x).iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-12);
    }

    #[test]
    fn hue_rotation_by_full_turn_is_identity() {
        let p = [0.7, 0.3, 0.5];
        let (q, _) = hue_rotate_pixel(p, 1.0);
        for i in 0..3 {
            assert!((q[i] - p[i]).abs() < 1e-12, "{q:?}");
        }
        let (q0, _) = hue_rotate_pixel(p, 0.0);
        for i in 0..3 {
            assert!((q0[i] - p[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn hue_rotation_preserves_value_and_chroma() {
        let p = [0.8, 0.25, 0.4];
        let (q, _) = hue_rotate_pixel(p, 0.13);
        let max_p = p.iter().cloned().fold(f64::MIN, f64::max);
        let min_p = p.iter().cloned().fold(f64::MAX, f64::min);
        let max_q = q.iter().cloned().fold(f64::MIN, f64::max);
        let min_q = q.iter().cloned().fold(f64::MAX, f64::min);
        assert!((max_p - max_q).abs() < 1e-12);
        assert!((min_p - min_q).abs() < 1e-12);
    }

    #[test]
    fn hue_jacobian_matches_finite_differences() {
        let eps = 1e-7;
        for (p, f) in [
            ([0.7, 0.3, 0.5], 0.03),
            ([0.2, 0.9, 0.1], -0.04),
            ([0.5, 0.1, 0.8], 0.05),
        ] {
            let (_, jac) = hue_rotate_pixel(p, f);
            for v in 0..3 {
                let mut pp = p;
                pp[v] += eps;
                let (qp, _) = hue_rotate_pixel(pp, f);
                let mut pm = p;
                pm[v] -= eps;
                let (qm, _) = hue_rotate_pixel(pm, f);
                for o in 0..3 {
                    let fd = (qp[o] - qm[o]) / (2.0 * eps);
                    assert!(
                        (fd - jac[o][v]).abs() < 1e-5,
                        "pixel {p:?} d out[{o}]/d in[{v}]: fd {fd} vs {}",
                        jac[o][v]
                    );
                }
            }
        }
    }

    #[test]
    fn median_removes_salt_pixel() {
        let t: Tape<f64> = Tape::new();
        let mut x = Arr::zeros(IxDyn(&[1, 1, 5, 5]));
        x[[0, 0, 2, 2]] = 1.0;
        let xv = t.leaf(x, false);
        let y = t.median_blur(xv, 3);
        assert_eq!(t.value(y)[[0, 0, 2, 2]], 0.0);
    }
}
