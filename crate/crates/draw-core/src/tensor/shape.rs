//! Structural ops: concatenation, slicing, pooling, resizing, normalization.

use ndarray::{Array1, Array4, Axis, Slice};

use super::conv::as4;
use super::{boxed_back, Arr, Scalar, Tape, Var};

impl<T: Scalar> Tape<T> {
    /// Concatenate along the channel axis.
    pub fn concat_ch(&self, parts: &[Var]) -> Var {
        self.concat_axis(parts, 1)
    }

    /// Concatenate along the batch axis.
    pub fn concat_n(&self, parts: &[Var]) -> Var {
        self.concat_axis(parts, 0)
    }

    fn concat_axis(&self, parts: &[Var], axis: usize) -> Var {
        assert!(!parts.is_empty());
        let (value, needs, sizes) = {
            let nodes = self.nodes.borrow();
            let views: Vec<_> = parts.iter().map(|p| nodes[p.0].value.view()).collect();
            let value = ndarray::concatenate(Axis(axis), &views).expect("concat shapes");
            let needs = parts.iter().any(|p| nodes[p.0].needs_grad);
            let sizes: Vec<usize> = parts
                .iter()
                .map(|p| nodes[p.0].value.shape()[axis])
                .collect();
            (value, needs, sizes)
        };
        let parts = parts.to_vec();
        let back = needs.then(|| {
            boxed_back(
                move |up: &Arr<T>, _ctx: &super::BackCtx<'_, T>, sink: &mut super::GradSink<'_, T>| {
                    let mut off = 0;
                    for (p, sz) in parts.iter().zip(&sizes) {
                        let g = up
                            .slice_axis(Axis(axis), Slice::from(off..off + sz))
                            .to_owned();
                        sink.add(*p, g);
                        off += sz;
                    }
                },
            )
        });
        self.push(value, needs, back)
    }

    /// Channel range `[from, to)`.
    pub fn slice_ch(&self, x: Var, from: usize, to: usize) -> Var {
        self.slice_axis_op(x, 1, from, to)
    }

    /// Single-sample slice `[i, i+1)` along the batch axis.
    pub fn slice_n(&self, x: Var, i: usize) -> Var {
        self.slice_axis_op(x, 0, i, i + 1)
    }

    fn slice_axis_op(&self, x: Var, axis: usize, from: usize, to: usize) -> Var {
        let (value, needs, full) = {
            let nodes = self.nodes.borrow();
            let v = nodes[x.0]
                .value
                .slice_axis(Axis(axis), Slice::from(from..to))
                .to_owned();
            (v, nodes[x.0].needs_grad, nodes[x.0].value.raw_dim())
        };
        let back = needs.then(|| {
            boxed_back(
                move |up: &Arr<T>, _ctx: &super::BackCtx<'_, T>, sink: &mut super::GradSink<'_, T>| {
                    let mut g = Arr::zeros(full.clone());
                    g.slice_axis_mut(Axis(axis), Slice::from(from..to))
                        .assign(up);
                    sink.add(x, g);
                },
            )
        });
        self.push(value, needs, back)
    }

    /// Spatial crop `[y0..y0+h, x0..x0+w]`.
    pub fn crop_spatial(&self, x: Var, y0: usize, x0: usize, h: usize, w: usize) -> Var {
        let (value, needs, full) = {
            let nodes = self.nodes.borrow();
            let v = nodes[x.0]
                .value
                .slice_axis(Axis(2), Slice::from(y0..y0 + h))
                .slice_axis(Axis(3), Slice::from(x0..x0 + w))
                .to_owned();
            (v, nodes[x.0].needs_grad, nodes[x.0].value.raw_dim())
        };
        let back = needs.then(|| {
            boxed_back(
                move |up: &Arr<T>, _ctx: &super::BackCtx<'_, T>, sink: &mut super::GradSink<'_, T>| {
                    let mut g = Arr::zeros(full.clone());
                    g.slice_axis_mut(Axis(2), Slice::from(y0..y0 + h))
                        .slice_axis_mut(Axis(3), Slice::from(x0..x0 + w))
                        .assign(up);
                    sink.add(x, g);
                },
            )
        });
        self.push(value, needs, back)
    }

    /// 2x nearest-neighbor upsampling.
    pub fn upsample_nearest2(&self, x: Var) -> Var {
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            let xv = as4(&nodes[x.0].value);
            let (n, c, h, w) = xv.dim();
            let out = Array4::from_shape_fn((n, c, 2 * h, 2 * w), |(ni, ci, y, xx)| {
                xv[[ni, ci, y / 2, xx / 2]]
            });
            (out.into_dyn(), nodes[x.0].needs_grad)
        };
        let back = needs.then(|| {
            boxed_back(
                move |up: &Arr<T>, _ctx: &super::BackCtx<'_, T>, sink: &mut super::GradSink<'_, T>| {
                    let upv = as4(up);
                    let (n, c, h2, w2) = upv.dim();
                    let mut g = Array4::zeros((n, c, h2 / 2, w2 / 2));
                    for ni in 0..n {
                        for ci in 0..c {
                            for y in 0..h2 {
                                for xx in 0..w2 {
                                    g[[ni, ci, y / 2, xx / 2]] += upv[[ni, ci, y, xx]];
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

    /// 2x2 average pooling.
    pub fn avgpool2(&self, x: Var) -> Var {
        let quarter = T::fromf64(0.25);
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            let xv = as4(&nodes[x.0].value);
            let (n, c, h, w) = xv.dim();
            let out = Array4::from_shape_fn((n, c, h / 2, w / 2), |(ni, ci, y, xx)| {
                (xv[[ni, ci, 2 * y, 2 * xx]]
                    + xv[[ni, ci, 2 * y, 2 * xx + 1]]
                    + xv[[ni, ci, 2 * y + 1, 2 * xx]]
                    + xv[[ni, ci, 2 * y + 1, 2 * xx + 1]])
                    * quarter
            });
            (out.into_dyn(), nodes[x.0].needs_grad)
        };
        let back = needs.then(|| {
            boxed_back(
                move |up: &Arr<T>, _ctx: &super::BackCtx<'_, T>, sink: &mut super::GradSink<'_, T>| {
                    let upv = as4(up);
                    let (n, c, ho, wo) = upv.dim();
                    let mut g = Array4::zeros((n, c, ho * 2, wo * 2));
                    for ni in 0..n {
                        for ci in 0..c {
                            for y in 0..ho {
                                for xx in 0..wo {
                                    let gv = upv[[ni, ci, y, xx]] * quarter;
                                    for dy in 0..2 {
                                        for dx in 0..2 {
                                            g[[ni, ci, 2 * y + dy, 2 * xx + dx]] = gv;
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

    /// Bilinear resize to `(oh, ow)` with half-pixel sample centers.
    pub fn resize_bilinear(&self, x: Var, oh: usize, ow: usize) -> Var {
        {
            let shape = self.shape(x);
            if (shape[2], shape[3]) == (oh, ow) {
                return self.identity_passthrough(x);
            }
        }
        let (value, needs, dims) = {
            let nodes = self.nodes.borrow();
            let xv = as4(&nodes[x.0].value);
            let (n, c, h, w) = xv.dim();
            let taps_y = bilinear_taps(h, oh);
            let taps_x = bilinear_taps(w, ow);
            let mut out = Array4::zeros((n, c, oh, ow));
            for ni in 0..n {
                for ci in 0..c {
                    for oy in 0..oh {
                        let (y0, y1, wy) = taps_y[oy];
                        for ox in 0..ow {
                            let (x0, x1, wx) = taps_x[ox];
                            let a = xv[[ni, ci, y0, x0]];
                            let b = xv[[ni, ci, y0, x1]];
                            let cc = xv[[ni, ci, y1, x0]];
                            let d = xv[[ni, ci, y1, x1]];
                            let top = a + (b - a) * T::fromf64(wx);
                            let bot = cc + (d - cc) * T::fromf64(wx);
                            out[[ni, ci, oy, ox]] = top + (bot - top) * T::fromf64(wy);
                        }
                    }
                }
            }
            (out.into_dyn(), nodes[x.0].needs_grad, (n, c, h, w))
        };
        let back = needs.then(|| {
            boxed_back(
                move |up: &Arr<T>, _ctx: &super::BackCtx<'_, T>, sink: &mut super::GradSink<'_, T>| {
                    let (n, c, h, w) = dims;
                    let upv = as4(up);
                    let taps_y = bilinear_taps(h, oh);
                    let taps_x = bilinear_taps(w, ow);
                    let mut g = Array4::zeros((n, c, h, w));
                    for ni in 0..n {
                        for ci in 0..c {
                            for oy in 0..oh {
                                let (y0, y1, wy) = taps_y[oy];
                                for ox in 0..ow {
                                    let (x0, x1, wx) = taps_x[ox];
                                    let gv = upv[[ni, ci, oy, ox]];
                                    let wy1 = T::fromf64(wy);
                                    let wy0 = T::ONE - wy1;
                                    let wx1 = T::fromf64(wx);
                                    let wx0 = T::ONE - wx1;
                                    g[[ni, ci, y0, x0]] += gv * wy0 * wx0;
                                    g[[ni, ci, y0, x1]] += gv * wy0 * wx1;
                                    g[[ni, ci, y1, x0]] += gv * wy1 * wx0;
                                    g[[ni, ci, y1, x1]] += gv * wy1 * wx1;
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

    fn identity_passthrough(&self, x: Var) -> Var {
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            (nodes[x.0].value.clone(), nodes[x.0].needs_grad)
        };
        let back = needs.then(|| {
            boxed_back(
                move |up: &Arr<T>, _ctx: &super::BackCtx<'_, T>, sink: &mut super::GradSink<'_, T>| {
                    sink.add(x, up.clone());
                },
            )
        });
        self.push(value, needs, back)
    }

    /// Circular spatial shift by `(dy, dx)` (wraps around).
    pub fn circ_shift(&self, x: Var, dy: usize, dx: usize) -> Var {
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            let xv = as4(&nodes[x.0].value);
            let (n, c, h, w) = xv.dim();
            let out = Array4::from_shape_fn((n, c, h, w), |(ni, ci, y, xx)| {
                xv[[ni, ci, (y + h - dy % h) % h, (xx + w - dx % w) % w]]
            });
            (out.into_dyn(), nodes[x.0].needs_grad)
        };
        let back = needs.then(|| {
            boxed_back(
                move |up: &Arr<T>, _ctx: &super::BackCtx<'_, T>, sink: &mut super::GradSink<'_, T>| {
                    let upv = as4(up);
                    let (n, c, h, w) = upv.dim();
                    let g = Array4::from_shape_fn((n, c, h, w), |(ni, ci, y, xx)| {
                        upv[[ni, ci, (y + dy) % h, (xx + dx) % w]]
                    });
                    sink.add(x, g.into_dyn());
                },
            )
        });
        self.push(value, needs, back)
    }

    /// Layer normalization across the channel axis at every spatial position.
    pub fn layernorm_ch(&self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let epsv = T::fromf64(eps);
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            let xv = as4(&nodes[x.0].value);
            let gv = &nodes[gamma.0].value;
            let bv = &nodes[beta.0].value;
            let (n, c, h, w) = xv.dim();
            let inv_c = T::fromf64(1.0 / c as f64);
            let mut out = Array4::zeros((n, c, h, w));
            for ni in 0..n {
                for y in 0..h {
                    for xx in 0..w {
                        let mut mu = T::ZERO;
                        for ci in 0..c {
                            mu += xv[[ni, ci, y, xx]];
                        }
                        mu = mu * inv_c;
                        let mut var = T::ZERO;
                        for ci in 0..c {
                            let d = xv[[ni, ci, y, xx]] - mu;
                            var += d * d;
                        }
                        var = var * inv_c;
                        let inv_std = T::ONE / (var + epsv).sqrt();
                        for ci in 0..c {
                            let xhat = (xv[[ni, ci, y, xx]] - mu) * inv_std;
                            out[[ni, ci, y, xx]] = xhat * gv[[ci]] + bv[[ci]];
                        }
                    }
                }
            }
            let needs = nodes[x.0].needs_grad
                || nodes[gamma.0].needs_grad
                || nodes[beta.0].needs_grad;
            (out.into_dyn(), needs)
        };
        let back = needs.then(|| {
            boxed_back(
                move |up: &Arr<T>, ctx: &super::BackCtx<'_, T>, sink: &mut super::GradSink<'_, T>| {
                    let xv = as4(ctx.value(x));
                    let gv = ctx.value(gamma);
                    let upv = as4(up);
                    let (n, c, h, w) = xv.dim();
                    let inv_c = T::fromf64(1.0 / c as f64);
                    let mut dx = Array4::zeros((n, c, h, w));
                    let mut dgamma = Array1::<T>::zeros(c);
                    let mut dbeta = Array1::<T>::zeros(c);
                    let mut xhat = vec![T::ZERO; c];
                    for ni in 0..n {
                        for y in 0..h {
                            for xx in 0..w {
                                let mut mu = T::ZERO;
                                for ci in 0..c {
                                    mu += xv[[ni, ci, y, xx]];
                                }
                                mu = mu * inv_c;
                                let mut var = T::ZERO;
                                for ci in 0..c {
                                    let d = xv[[ni, ci, y, xx]] - mu;
                                    var += d * d;
                                }
                                var = var * inv_c;
                                let inv_std = T::ONE / (var + epsv).sqrt();
                                let mut sum_dxhat = T::ZERO;
                                let mut sum_dxhat_xhat = T::ZERO;
                                for ci in 0..c {
                                    xhat[ci] = (xv[[ni, ci, y, xx]] - mu) * inv_std;
                                    let g = upv[[ni, ci, y, xx]];
                                    dgamma[ci] += g * xhat[ci];
                                    dbeta[ci] += g;
                                    let dxh = g * gv[[ci]];
                                    sum_dxhat += dxh;
                                    sum_dxhat_xhat += dxh * xhat[ci];
                                }
                                for ci in 0..c {
                                    let dxh = upv[[ni, ci, y, xx]] * gv[[ci]];
                                    dx[[ni, ci, y, xx]] = inv_std
                                        * (dxh
                                            - sum_dxhat * inv_c
                                            - xhat[ci] * sum_dxhat_xhat * inv_c);
                                }
                            }
                        }
                    }
                    sink.add(x, dx.into_dyn());
                    sink.add(gamma, dgamma.into_dyn());
                    sink.add(beta, dbeta.into_dyn());
                },
            )
        });
        self.push(value, needs, back)
    }

    /// Global average pooling to `[N,C,1,1]`.
    pub fn gap(&self, x: Var) -> Var {
        let (value, needs, dims) = {
            let nodes = self.nodes.borrow();
            let xv = as4(&nodes[x.0].value);
            let (n, c, h, w) = xv.dim();
            let inv = T::fromf64(1.0 / (h * w) as f64);
            let mut out = Array4::zeros((n, c, 1, 1));
            for ni in 0..n {
                for ci in 0..c {
                    let s = xv
                        .index_axis(Axis(0), ni)
                        .index_axis(Axis(0), ci)
                        .iter()
                        .fold(T::ZERO, |acc, &v| acc + v);
                    out[[ni, ci, 0, 0]] = s * inv;
                }
            }
            (out.into_dyn(), nodes[x.0].needs_grad, (n, c, h, w))
        };
        let back = needs.then(|| {
            boxed_back(
                move |up: &Arr<T>, _ctx: &super::BackCtx<'_, T>, sink: &mut super::GradSink<'_, T>| {
                    let (n, c, h, w) = dims;
                    let upv = as4(up);
                    let inv = T::fromf64(1.0 / (h * w) as f64);
                    let mut g = Array4::zeros((n, c, h, w));
                    for ni in 0..n {
                        for ci in 0..c {
                            let gv = upv[[ni, ci, 0, 0]] * inv;
                            g.index_axis_mut(Axis(0), ni)
                                .index_axis_mut(Axis(0), ci)
                                .fill(gv);
                        }
                    }
                    sink.add(x, g.into_dyn());
                },
            )
        });
        self.push(value, needs, back)
    }

    /// Multiply `[N,C,H,W]` by a per-channel gate `[N,C,1,1]`.
    pub fn gate_mul(&self, x: Var, gate: Var) -> Var {
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            let xv = as4(&nodes[x.0].value);
            let gv = as4(&nodes[gate.0].value);
            let (n, c, _h, _w) = xv.dim();
            debug_assert_eq!(gv.dim(), (n, c, 1, 1));
            let mut out = xv.to_owned();
            for ni in 0..n {
                for ci in 0..c {
                    let g = gv[[ni, ci, 0, 0]];
                    out.index_axis_mut(Axis(0), ni)
                        .index_axis_mut(Axis(0), ci)
                        .mapv_inplace(|v| v * g);
                }
            }
            (
                out.into_dyn(),
                nodes[x.0].needs_grad || nodes[gate.0].needs_grad,
            )
        };
        let back = needs.then(|| {
            boxed_back(
                move |up: &Arr<T>, ctx: &super::BackCtx<'_, T>, sink: &mut super::GradSink<'_, T>| {
                    let xv = as4(ctx.value(x));
                    let gv = as4(ctx.value(gate));
                    let upv = as4(up);
                    let (n, c, _h, _w) = xv.dim();
                    if sink.wants(x) {
                        let mut dx = upv.to_owned();
                        for ni in 0..n {
                            for ci in 0..c {
                                let g = gv[[ni, ci, 0, 0]];
                                dx.index_axis_mut(Axis(0), ni)
                                    .index_axis_mut(Axis(0), ci)
                                    .mapv_inplace(|v| v * g);
                            }
                        }
                        sink.add(x, dx.into_dyn());
                    }
                    if sink.wants(gate) {
                        let mut dg = Array4::zeros((n, c, 1, 1));
                        for ni in 0..n {
                            for ci in 0..c {
                                let mut acc = T::ZERO;
                                let xi = xv.index_axis(Axis(0), ni);
                                let xi = xi.index_axis(Axis(0), ci);
                                let ui = upv.index_axis(Axis(0), ni);
                                let ui = ui.index_axis(Axis(0), ci);
                                for (a, b) in xi.iter().zip(ui.iter()) {
                                    acc += *a * *b;
                                }
                                dg[[ni, ci, 0, 0]] = acc;
                            }
                        }
                        sink.add(gate, dg.into_dyn());
                    }
                },
            )
        });
        self.push(value, needs, back)
    }
}

/// Source taps and interpolation weight for a bilinear resize with
/// half-pixel sample centers.
fn bilinear_taps(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    (0..n_out)
        .map(|o| {
            let s = (o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5;
            let s = s.clamp(0.0, (n_in - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::{Arr, Tape};
    use ndarray::IxDyn;

    #[test]
    fn resize_round_trip_shapes() {
        let t: Tape<f64> = Tape::new();
        let x = t.leaf(
            Arr::from_shape_fn(IxDyn(&[1, 2, 8, 8]), |ix| (ix[2] + ix[3]) as f64 / 14.0),
            false,
        );
        let y = t.resize_bilinear(x, 12, 5);
        assert_eq!(t.shape(y), vec![1, 2, 12, 5]);
        let z = t.resize_bilinear(y, 8, 8);
        assert_eq!(t.shape(z), vec![1, 2, 8, 8]);
    }

    #[test]
    fn resize_preserves_constants() {
        let t: Tape<f64> = Tape::new();
        let x = t.leaf(Arr::from_elem(IxDyn(&[1, 1, 6, 6]), 0.4), false);
        let y = t.resize_bilinear(x, 9, 4);
        assert!(t.value(y).iter().all(|&v| (v - 0.4).abs() < 1e-12));
    }

    #[test]
    fn concat_slice_inverse() {
        let t: Tape<f64> = Tape::new();
        let a = t.leaf(Arr::from_elem(IxDyn(&[1, 2, 4, 4]), 1.0), false);
        let b = t.leaf(Arr::from_elem(IxDyn(&[1, 3, 4, 4]), 2.0), false);
        let c = t.concat_ch(&[a, b]);
        assert_eq!(t.shape(c), vec![1, 5, 4, 4]);
        let a2 = t.slice_ch(c, 0, 2);
        let b2 = t.slice_ch(c, 2, 5);
        assert_eq!(t.value(a2), t.value(a));
        assert_eq!(t.value(b2), t.value(b));
    }
}
