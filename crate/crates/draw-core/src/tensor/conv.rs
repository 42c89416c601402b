//! Convolution kernels: im2col + GEMM for dense convolutions, direct loops
//! for depthwise. Parallelism is over batch samples / channels so gradient
//! accumulation order stays fixed regardless of thread count.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Array4, ArrayView2, ArrayView4, Axis};
use rayon::prelude::*;

use super::{boxed_back, Arr, Scalar, Tape, Var};

pub(crate) fn as4<T: Scalar>(a: &Arr<T>) -> ArrayView4<'_, T> {
    a.view().into_dimensionality::<ndarray::Ix4>().expect("4-d tensor")
}

fn out_dim(h: usize, k: usize, pad: usize, stride: usize) -> usize {
    (h + 2 * pad - k) / stride + 1
}

fn im2col<T: Scalar>(
    x: &ArrayView4<'_, T>,
    n: usize,
    k: usize,
    pad: usize,
    stride: usize,
) -> Array2<T> {
    let (_, c, h, w) = x.dim();
    let (ho, wo) = (out_dim(h, k, pad, stride), out_dim(w, k, pad, stride));
    let mut cols = Array2::zeros((c * k * k, ho * wo));
    for ci in 0..c {
        for dy in 0..k {
            for dx in 0..k {
                let row = (ci * k + dy) * k + dx;
                for oy in 0..ho {
                    let iy = (oy * stride + dy) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..wo {
                        let ix = (ox * stride + dx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        cols[[row, oy * wo + ox]] = x[[n, ci, iy as usize, ix as usize]];
                    }
                }
            }
        }
    }
    cols
}

fn col2im_add<T: Scalar>(
    cols: &ArrayView2<'_, T>,
    out: &mut ndarray::ArrayViewMut3<'_, T>,
    k: usize,
    pad: usize,
    stride: usize,
    ho: usize,
    wo: usize,
) {
    let (c, h, w) = out.dim();
    for ci in 0..c {
        for dy in 0..k {
            for dx in 0..k {
                let row = (ci * k + dy) * k + dx;
                for oy in 0..ho {
                    let iy = (oy * stride + dy) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..wo {
                        let ix = (ox * stride + dx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        out[[ci, iy as usize, ix as usize]] += cols[[row, oy * wo + ox]];
                    }
                }
            }
        }
    }
}

impl<T: Scalar> Tape<T> {
    /// Dense 2-D convolution: `x [N,Ci,H,W]`, `w [Co,Ci,k,k]`, `b [Co]`.
    pub fn conv2d(&self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Var {
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            let xv = as4(&nodes[x.0].value);
            let wv = as4(&nodes[w.0].value);
            let (n, ci, h, wd) = xv.dim();
            let (co, ci2, k, k2) = wv.dim();
            assert_eq!(ci, ci2, "conv2d: channel mismatch");
            assert_eq!(k, k2, "conv2d: square kernels only");
            let (ho, wo) = (out_dim(h, k, pad, stride), out_dim(wd, k, pad, stride));
            let wmat = wv
                .to_shape((co, ci * k * k))
                .expect("contiguous weights")
                .to_owned();
            let bias = b.map(|bv| nodes[bv.0].value.clone());
            let mut out = Array4::<T>::zeros((n, co, ho, wo));
            let outs: Vec<Array2<T>> = (0..n)
                .into_par_iter()
                .map(|ni| {
                    let cols = im2col(&xv, ni, k, pad, stride);
                    let mut o = Array2::zeros((co, ho * wo));
                    general_mat_mul(T::ONE, &wmat, &cols, T::ZERO, &mut o);
                    o
                })
                .collect();
            for (ni, o) in outs.into_iter().enumerate() {
                let mut slab = out.index_axis_mut(Axis(0), ni);
                let reshaped = o.into_shape_with_order((co, ho, wo)).expect("output shape");
                slab.assign(&reshaped);
                if let Some(bias) = &bias {
                    for c in 0..co {
                        let bc = bias[[c]];
                        slab.index_axis_mut(Axis(0), c).mapv_inplace(|v| v + bc);
                    }
                }
            }
            let needs = nodes[x.0].needs_grad
                || nodes[w.0].needs_grad
                || b.is_some_and(|bv| nodes[bv.0].needs_grad);
            (out.into_dyn(), needs)
        };
        let back = needs.then(|| {
            boxed_back(
                move |up: &Arr<T>, ctx: &super::BackCtx<'_, T>, sink: &mut super::GradSink<'_, T>| {
                    let upv = as4(up);
                    let xv = as4(ctx.value(x));
                    let wv = as4(ctx.value(w));
                    let (n, ci, h, wd) = xv.dim();
                    let (co, _, k, _) = wv.dim();
                    let (ho, wo) = (out_dim(h, k, pad, stride), out_dim(wd, k, pad, stride));
                    let wmat = wv.to_shape((co, ci * k * k)).expect("weights").to_owned();

                    if let Some(bv) = b {
                        if sink.wants(bv) {
                            let mut db = ndarray::Array1::<T>::zeros(co);
                            for c in 0..co {
                                db[c] = upv
                                    .index_axis(Axis(1), c)
                                    .iter()
                                    .fold(T::ZERO, |acc, &v| acc + v);
                            }
                            sink.add(bv, db.into_dyn());
                        }
                    }

                    let want_w = sink.wants(w);
                    let want_x = sink.wants(x);
                    if !want_w && !want_x {
                        return;
                    }
                    let per_sample: Vec<(Option<Array2<T>>, Option<ndarray::Array3<T>>)> = (0..n)
                        .into_par_iter()
                        .map(|ni| {
                            let up_mat = upv
                                .index_axis(Axis(0), ni)
                                .to_shape((co, ho * wo))
                                .expect("upstream")
                                .to_owned();
                            let dw = want_w.then(|| {
                                let cols = im2col(&xv, ni, k, pad, stride);
                                let mut dw = Array2::zeros((co, ci * k * k));
                                general_mat_mul(T::ONE, &up_mat, &cols.t(), T::ZERO, &mut dw);
                                dw
                            });
                            let dx = want_x.then(|| {
                                let mut dcols = Array2::zeros((ci * k * k, ho * wo));
                                general_mat_mul(T::ONE, &wmat.t(), &up_mat, T::ZERO, &mut dcols);
                                let mut dxi = ndarray::Array3::zeros((ci, h, wd));
                                col2im_add(
                                    &dcols.view(),
                                    &mut dxi.view_mut(),
                                    k,
                                    pad,
                                    stride,
                                    ho,
                                    wo,
                                );
                                dxi
                            });
                            (dw, dx)
                        })
                        .collect();

                    if want_w {
                        let mut dw_total = Array2::zeros((co, ci * k * k));
                        for (dw, _) in &per_sample {
                            dw_total += dw.as_ref().expect("dw");
                        }
                        sink.add(
                            w,
                            dw_total
                                .into_shape_with_order((co, ci, k, k))
                                .expect("dw shape")
                                .into_dyn(),
                        );
                    }
                    if want_x {
                        let mut dx = Array4::zeros((n, ci, h, wd));
                        for (ni, (_, dxi)) in per_sample.into_iter().enumerate() {
                            dx.index_axis_mut(Axis(0), ni)
                                .assign(&dxi.expect("dx"));
                        }
                        sink.add(x, dx.into_dyn());
                    }
                },
            )
        });
        self.push(value, needs, back)
    }

    /// Depthwise convolution: `x [N,C,H,W]`, `w [C,k,k]`, `b [C]`, stride 1,
    /// same padding.
    pub fn depthwise(&self, x: Var, w: Var, b: Option<Var>) -> Var {
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            let xv = as4(&nodes[x.0].value);
            let wv = nodes[w.0]
                .value
                .view()
                .into_dimensionality::<ndarray::Ix3>()
                .expect("depthwise weights [C,k,k]");
            let (n, c, h, wd) = xv.dim();
            let (c2, k, _) = wv.dim();
            assert_eq!(c, c2, "depthwise: channel mismatch");
            let pad = k / 2;
            let bias = b.map(|bv| nodes[bv.0].value.clone());
            let mut out = Array4::<T>::zeros((n, c, h, wd));
            let planes: Vec<ndarray::Array2<T>> = (0..n * c)
                .into_par_iter()
                .map(|idx| {
                    let (ni, ci) = (idx / c, idx % c);
                    let xp = xv.index_axis(Axis(0), ni);
                    let xp = xp.index_axis(Axis(0), ci);
                    let mut o = ndarray::Array2::zeros((h, wd));
                    for y in 0..h {
                        for xx in 0..wd {
                            let mut acc = T::ZERO;
                            for dy in 0..k {
                                let iy = y as isize + dy as isize - pad as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for dx in 0..k {
                                    let ix = xx as isize + dx as isize - pad as isize;
                                    if ix < 0 || ix >= wd as isize {
                                        continue;
                                    }
                                    acc += wv[[ci, dy, dx]] * xp[[iy as usize, ix as usize]];
                                }
                            }
                            if let Some(bias) = &bias {
                                acc += bias[[ci]];
                            }
                            o[[y, xx]] = acc;
                        }
                    }
                    o
                })
                .collect();
            for (idx, plane) in planes.into_iter().enumerate() {
                let (ni, ci) = (idx / c, idx % c);
                out.index_axis_mut(Axis(0), ni)
                    .index_axis_mut(Axis(0), ci)
                    .assign(&plane);
            }
            let needs = nodes[x.0].needs_grad
                || nodes[w.0].needs_grad
                || b.is_some_and(|bv| nodes[bv.0].needs_grad);
            (out.into_dyn(), needs)
        };
        let back = needs.then(|| {
            boxed_back(
                move |up: &Arr<T>, ctx: &super::BackCtx<'_, T>, sink: &mut super::GradSink<'_, T>| {
                    let upv = as4(up);
                    let xv = as4(ctx.value(x));
                    let wv = ctx
                        .value(w)
                        .view()
                        .into_dimensionality::<ndarray::Ix3>()
                        .expect("weights");
                    let (n, c, h, wd) = xv.dim();
                    let (_, k, _) = wv.dim();
                    let pad = k / 2;

                    if let Some(bv) = b {
                        if sink.wants(bv) {
                            let mut db = ndarray::Array1::<T>::zeros(c);
                            for ci in 0..c {
                                db[ci] = upv
                                    .index_axis(Axis(1), ci)
                                    .iter()
                                    .fold(T::ZERO, |acc, &v| acc + v);
                            }
                            sink.add(bv, db.into_dyn());
                        }
                    }
                    if sink.wants(w) {
                        let mut dw = ndarray::Array3::<T>::zeros((c, k, k));
                        for ni in 0..n {
                            for ci in 0..c {
                                for dy in 0..k {
                                    for dx in 0..k {
                                        let mut acc = T::ZERO;
                                        for y in 0..h {
                                            let iy = y as isize + dy as isize - pad as isize;
                                            if iy < 0 || iy >= h as isize {
                                                continue;
                                            }
                                            for xx in 0..wd {
                                                let ix =
                                                    xx as isize + dx as isize - pad as isize;
                                                if ix < 0 || ix >= wd as isize {
                                                    continue;
                                                }
                                                acc += upv[[ni, ci, y, xx]]
                                                    * xv[[ni, ci, iy as usize, ix as usize]];
                                            }
                                        }
                                        dw[[ci, dy, dx]] += acc;
                                    }
                                }
                            }
                        }
                        sink.add(w, dw.into_dyn());
                    }
                    if sink.wants(x) {
                        let mut dx = Array4::<T>::zeros((n, c, h, wd));
                        for ni in 0..n {
                            for ci in 0..c {
                                for y in 0..h {
                                    for xx in 0..wd {
                                        let g = upv[[ni, ci, y, xx]];
                                        for dy in 0..k {
                                            let iy = y as isize + dy as isize - pad as isize;
                                            if iy < 0 || iy >= h as isize {
                                                continue;
                                            }
                                            for dx2 in 0..k {
                                                let ix =
                                                    xx as isize + dx2 as isize - pad as isize;
                                                if ix < 0 || ix >= wd as isize {
                                                    continue;
                                                }
                                                dx[[ni, ci, iy as usize, ix as usize]] +=
                                                    g * wv[[ci, dy, dx2]];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                        sink.add(x, dx.into_dyn());
                    }
                },
            )
        });
        self.push(value, needs, back)
    }

    /// Fixed-kernel depthwise blur (same kernel every channel, no gradient to
    /// the kernel). Used for Gaussian blurring inside the attack layer.
    pub fn blur_fixed(&self, x: Var, kernel: &ndarray::Array2<T>) -> Var {
        let c = self.shape(x)[1];
        let k = kernel.dim().0;
        let mut w = ndarray::Array3::zeros((c, k, k));
        for ci in 0..c {
            w.index_axis_mut(Axis(0), ci).assign(kernel);
        }
        let wv = self.leaf(w.into_dyn(), false);
        self.depthwise(x, wv, None)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{Arr, Tape};
    use ndarray::IxDyn;

    #[test]
    fn conv2d_identity_kernel_preserves_input() {
        let t: Tape<f64> = Tape::new();
        let x = t.leaf(
            Arr::from_shape_fn(IxDyn(&[1, 2, 4, 4]), |ix| {
                (ix[1] * 16 + ix[2] * 4 + ix[3]) as f64 / 31.0
            }),
            false,
        );
        // 3x3 kernel with center 1 on the diagonal channel
        let mut w = ndarray::Array4::<f64>::zeros((2, 2, 3, 3));
        w[[0, 0, 1, 1]] = 1.0;
        w[[1, 1, 1, 1]] = 1.0;
        let wv = t.leaf(w.into_dyn(), false);
        let y = t.conv2d(x, wv, None, 1, 1);
        assert_eq!(t.value(y), t.value(x));
    }

    #[test]
    fn conv2d_stride_two_halves_resolution() {
        let t: Tape<f32> = Tape::new();
        let x = t.leaf(Arr::zeros(IxDyn(&[2, 3, 8, 8])), false);
        let w = t.leaf(Arr::zeros(IxDyn(&[5, 3, 3, 3])), false);
        let y = t.conv2d(x, w, None, 2, 1);
        assert_eq!(t.shape(y), vec![2, 5, 4, 4]);
    }
}
