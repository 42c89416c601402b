//! Spectral ops: orthonormal 2-D FFT with stacked real/imaginary channels
//! (the global branch of the Fourier convolution) and blockwise 8x8 DCT for
//! the differentiable JPEG path.
//!
//! With orthonormal scaling the stack/unstack maps are mutual adjoints, so
//! each op's backward is simply its counterpart applied to the gradient.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use ndarray::{Array4, Array2};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::conv::as4;
use super::{boxed_back, Arr, Scalar, Tape, Var};

pub(crate) struct FftCache<T: Scalar> {
    planner: RefCell<FftPlanner<T>>,
    plans: RefCell<HashMap<(usize, bool), Arc<dyn Fft<T>>>>,
}

impl<T: Scalar> FftCache<T> {
    pub fn new() -> Self {
        Self {
            planner: RefCell::new(FftPlanner::new()),
            plans: RefCell::new(HashMap::new()),
        }
    }

    fn plan(&self, len: usize, inverse: bool) -> Arc<dyn Fft<T>> {
        let mut plans = self.plans.borrow_mut();
        plans
            .entry((len, inverse))
            .or_insert_with(|| {
                let mut planner = self.planner.borrow_mut();
                if inverse {
                    planner.plan_fft_inverse(len)
                } else {
                    planner.plan_fft_forward(len)
                }
            })
            .clone()
    }

    /// In-place 2-D FFT over the trailing two axes of a complex buffer laid
    /// out row-major `[h][w]`, orthonormal scaling.
    fn fft2(&self, buf: &mut [Complex<T>], h: usize, w: usize, inverse: bool) {
        let row_plan = self.plan(w, inverse);
        for row in buf.chunks_exact_mut(w) {
            row_plan.process(row);
        }
        let col_plan = self.plan(h, inverse);
        let mut col = vec![Complex::new(T::ZERO, T::ZERO); h];
        for x in 0..w {
            for y in 0..h {
                col[y] = buf[y * w + x];
            }
            col_plan.process(&mut col);
            for y in 0..h {
                buf[y * w + x] = col[y];
            }
        }
        let scale = T::fromf64(1.0 / ((h * w) as f64).sqrt());
        for v in buf.iter_mut() {
            v.re = v.re * scale;
            v.im = v.im * scale;
        }
    }
}

fn fft2_stack_arr<T: Scalar>(cache: &FftCache<T>, x: &Arr<T>) -> Arr<T> {
    let xv = as4(x);
    let (n, c, h, w) = xv.dim();
    let mut out = Array4::zeros((n, 2 * c, h, w));
    let mut buf = vec![Complex::new(T::ZERO, T::ZERO); h * w];
    for ni in 0..n {
        for ci in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    buf[y * w + xx] = Complex::new(xv[[ni, ci, y, xx]], T::ZERO);
                }
            }
            cache.fft2(&mut buf, h, w, false);
            for y in 0..h {
                for xx in 0..w {
                    out[[ni, ci, y, xx]] = buf[y * w + xx].re;
                    out[[ni, c + ci, y, xx]] = buf[y * w + xx].im;
                }
            }
        }
    }
    out.into_dyn()
}

fn ifft2_unstack_arr<T: Scalar>(cache: &FftCache<T>, a: &Arr<T>) -> Arr<T> {
    let av = as4(a);
    let (n, c2, h, w) = av.dim();
    let c = c2 / 2;
    let mut out = Array4::zeros((n, c, h, w));
    let mut buf = vec![Complex::new(T::ZERO, T::ZERO); h * w];
    for ni in 0..n {
        for ci in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    buf[y * w + xx] =
                        Complex::new(av[[ni, ci, y, xx]], av[[ni, c + ci, y, xx]]);
                }
            }
            cache.fft2(&mut buf, h, w, true);
            for y in 0..h {
                for xx in 0..w {
                    out[[ni, ci, y, xx]] = buf[y * w + xx].re;
                }
            }
        }
    }
    out.into_dyn()
}

impl<T: Scalar> Tape<T> {
    /// 2-D FFT of each channel; output stacks real parts then imaginary
    /// parts along the channel axis: `[N,C,H,W] -> [N,2C,H,W]`.
    pub fn fft2_stack(&self, x: Var) -> Var {
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            (
                fft2_stack_arr(&self.fft_cache, &nodes[x.0].value),
                nodes[x.0].needs_grad,
            )
        };
        let back = needs.then(|| {
            boxed_back(
                move |up: &Arr<T>, _ctx: &super::BackCtx<'_, T>, sink: &mut super::GradSink<'_, T>| {
                    // adjoint of stack = unstack (orthonormal scaling)
                    let cache = FftCache::new();
                    sink.add(x, ifft2_unstack_arr(&cache, up));
                },
            )
        });
        self.push(value, needs, back)
    }

    /// Inverse of [`Tape::fft2_stack`]: `[N,2C,H,W] -> [N,C,H,W]`, keeping
    /// the real part.
    pub fn ifft2_unstack(&self, a: Var) -> Var {
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            (
                ifft2_unstack_arr(&self.fft_cache, &nodes[a.0].value),
                nodes[a.0].needs_grad,
            )
        };
        let back = needs.then(|| {
            boxed_back(
                move |up: &Arr<T>, _ctx: &super::BackCtx<'_, T>, sink: &mut super::GradSink<'_, T>| {
                    let cache = FftCache::new();
                    sink.add(a, fft2_stack_arr(&cache, up));
                },
            )
        });
        self.push(value, needs, back)
    }
}

/// Orthonormal 8x8 DCT-II basis.
pub struct Dct8Basis<T: Scalar> {
    d: Array2<T>,
}

impl<T: Scalar> Default for Dct8Basis<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Dct8Basis<T> {
    pub fn new() -> Self {
        let mut d = Array2::zeros((8, 8));
        for k in 0..8 {
            let s = if k == 0 {
                (1.0f64 / 8.0).sqrt()
            } else {
                (2.0f64 / 8.0).sqrt()
            };
            for n in 0..8 {
                let v = s * ((std::f64::consts::PI * (2.0 * n as f64 + 1.0) * k as f64) / 16.0)
                    .cos();
                d[[k, n]] = T::fromf64(v);
            }
        }
        Self { d }
    }

    /// Blockwise `D X D^T` (forward DCT) on every 8x8 tile.
    fn apply(&self, x: &Arr<T>, inverse: bool) -> Arr<T> {
        let xv = as4(x);
        let (n, c, h, w) = xv.dim();
        debug_assert!(h % 8 == 0 && w % 8 == 0, "dct8: dims must be multiples of 8");
        let mut out = Array4::zeros((n, c, h, w));
        let d = &self.d;
        let mut tmp = [[T::ZERO; 8]; 8];
        for ni in 0..n {
            for ci in 0..c {
                for by in (0..h).step_by(8) {
                    for bx in (0..w).step_by(8) {
                        // tmp = M X^T ; out = M tmp^T, with M = D or D^T
                        for i in 0..8 {
                            for j in 0..8 {
                                let mut acc = T::ZERO;
                                for k in 0..8 {
                                    let m = if inverse { d[[k, i]] } else { d[[i, k]] };
                                    acc += m * xv[[ni, ci, by + k, bx + j]];
                                }
                                tmp[i][j] = acc;
                            }
                        }
                        for i in 0..8 {
                            for j in 0..8 {
                                let mut acc = T::ZERO;
                                for k in 0..8 {
                                    let m = if inverse { d[[k, j]] } else { d[[j, k]] };
                                    acc += tmp[i][k] * m;
                                }
                                out[[ni, ci, by + i, bx + j]] = acc;
                            }
                        }
                    }
                }
            }
        }
        out.into_dyn()
    }
}

fn dct8_apply<T: Scalar>(x: &Arr<T>, inverse: bool) -> Arr<T> {
    Dct8Basis::<T>::new().apply(x, inverse)
}

impl<T: Scalar> Tape<T> {
    /// Blockwise orthonormal 8x8 DCT.
    pub fn dct8(&self, x: Var) -> Var {
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            (dct8_apply(&nodes[x.0].value, false), nodes[x.0].needs_grad)
        };
        let back = needs.then(|| {
            boxed_back(
                move |up: &Arr<T>, _ctx: &super::BackCtx<'_, T>, sink: &mut super::GradSink<'_, T>| {
                    sink.add(x, dct8_apply(up, true));
                },
            )
        });
        self.push(value, needs, back)
    }

    /// Blockwise inverse 8x8 DCT.
    pub fn idct8(&self, x: Var) -> Var {
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            (dct8_apply(&nodes[x.0].value, true), nodes[x.0].needs_grad)
        };
        let back = needs.then(|| {
            boxed_back(
                move |up: &Arr<T>, _ctx: &super::BackCtx<'_, T>, sink: &mut super::GradSink<'_, T>| {
                    sink.add(x, dct8_apply(up, false));
                },
            )
        });
        self.push(value, needs, back)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{Arr, Tape};
    use ndarray::IxDyn;

    #[test]
    fn fft_round_trip_identity() {
        let t: Tape<f64> = Tape::new();
        let x = t.leaf(
            Arr::from_shape_fn(IxDyn(&[1, 3, 8, 8]), |ix| {
                ((ix[1] * 64 + ix[2] * 8 + ix[3]) as f64 * 0.37).sin()
            }),
            false,
        );
        let spec = t.fft2_stack(x);
        assert_eq!(t.shape(spec), vec![1, 6, 8, 8]);
        let back = t.ifft2_unstack(spec);
        let err = t
            .value(back)
            .iter()
            .zip(t.value(x).iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "err {err}");
    }

    #[test]
    fn dct_round_trip_identity() {
        let t: Tape<f64> = Tape::new();
        let x = t.leaf(
            Arr::from_shape_fn(IxDyn(&[1, 1, 16, 16]), |ix| {
                ((ix[2] * 16 + ix[3]) as f64 * 0.11).cos()
            }),
            false,
        );
        let y = t.idct8(t.dct8(x));
        let err = t
            .value(y)
            .iter()
            .zip(t.value(x).iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "err {err}");
    }

    #[test]
    fn dct_of_constant_concentrates_at_dc() {
        let t: Tape<f64> = Tape::new();
        let x = t.leaf(Arr::from_elem(IxDyn(&[1, 1, 8, 8]), 1.0), false);
        let y = t.value(t.dct8(x));
        assert!((y[[0, 0, 0, 0]] - 8.0).abs() < 1e-12);
        let off_dc: f64 = y.iter().skip(1).map(|v| v.abs()).sum();
        assert!(off_dc < 1e-10);
    }
}
