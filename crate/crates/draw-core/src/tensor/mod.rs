//! Minimal reverse-mode autodiff over dynamic-dimension `ndarray` tensors.
//!
//! A [`Tape`] is built per forward pass; operations push nodes holding the
//! forward value plus a backward closure. Parameters enter as leaves with
//! `needs_grad = true` and [`Tape::backward`] returns one gradient slot per
//! node. Activations use layout `[N, C, H, W]` throughout; losses are 0-d.
//!
//! Everything is deterministic: no op reorders floating-point accumulation
//! based on thread count (parallel kernels split work per output element).

mod conv;
mod fft;
mod image_ops;
mod shape;

pub use fft::Dct8Basis;

use std::cell::RefCell;

use ndarray::{ArrayD, IxDyn};

/// Element type of the engine: `f32` for training, `f64` for oracles.
pub trait Scalar:
    ndarray::LinalgScalar
    + rustfft::FftNum
    + PartialOrd
    + std::ops::Neg<Output = Self>
    + std::ops::AddAssign
    + std::fmt::Display
{
    const ZERO: Self;
    const ONE: Self;
    fn fromf64(v: f64) -> Self;
    fn tof64(self) -> f64;
    fn abs(self) -> Self;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    fn round(self) -> Self;
    fn maxv(self, other: Self) -> Self;
    fn minv(self, other: Self) -> Self;
    fn is_finite(self) -> bool;
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            #[inline]
            fn fromf64(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn tof64(self) -> f64 {
                self as f64
            }
            #[inline]
            fn abs(self) -> Self {
                <$t>::abs(self)
            }
            #[inline]
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            #[inline]
            fn exp(self) -> Self {
                <$t>::exp(self)
            }
            #[inline]
            fn ln(self) -> Self {
                <$t>::ln(self)
            }
            #[inline]
            fn tanh(self) -> Self {
                <$t>::tanh(self)
            }
            #[inline]
            fn round(self) -> Self {
                <$t>::round(self)
            }
            #[inline]
            fn maxv(self, other: Self) -> Self {
                <$t>::max(self, other)
            }
            #[inline]
            fn minv(self, other: Self) -> Self {
                <$t>::min(self, other)
            }
            #[inline]
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }
        }
    };
}
impl_scalar!(f32);
impl_scalar!(f64);

pub type Arr<T> = ArrayD<T>;

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

pub(crate) struct Node<T: Scalar> {
    pub value: Arr<T>,
    pub needs_grad: bool,
    pub back: Option<Box<dyn BackwardOp<T>>>,
}

pub(crate) trait BackwardOp<T: Scalar> {
    fn backward(&self, upstream: &Arr<T>, ctx: &BackCtx<'_, T>, sink: &mut GradSink<'_, T>);
}

pub(crate) struct BackCtx<'a, T: Scalar> {
    nodes: &'a [Node<T>],
}

impl<'a, T: Scalar> BackCtx<'a, T> {
    pub fn value(&self, v: Var) -> &Arr<T> {
        &self.nodes[v.0].value
    }
}

pub(crate) struct GradSink<'a, T: Scalar> {
    grads: &'a mut [Option<Arr<T>>],
    needs: &'a [bool],
}

impl<'a, T: Scalar> GradSink<'a, T> {
    /// Accumulate a gradient contribution into a parent slot.
    pub fn add(&mut self, v: Var, g: Arr<T>) {
        if !self.needs[v.0] {
            return;
        }
        match &mut self.grads[v.0] {
            Some(acc) => *acc += &g,
            slot @ None => *slot = Some(g),
        }
    }

    pub fn wants(&self, v: Var) -> bool {
        self.needs[v.0]
    }
}

/// Boxes a closure as a backward op.
pub(crate) struct ClosureBack<T: Scalar, F>(pub F, pub std::marker::PhantomData<T>)
where
    F: Fn(&Arr<T>, &BackCtx<'_, T>, &mut GradSink<'_, T>);

impl<T: Scalar, F> BackwardOp<T> for ClosureBack<T, F>
where
    F: Fn(&Arr<T>, &BackCtx<'_, T>, &mut GradSink<'_, T>),
{
    fn backward(&self, upstream: &Arr<T>, ctx: &BackCtx<'_, T>, sink: &mut GradSink<'_, T>) {
        (self.0)(upstream, ctx, sink)
    }
}

/// Define-by-run gradient tape.
pub struct Tape<T: Scalar> {
    pub(crate) nodes: RefCell<Vec<Node<T>>>,
    pub(crate) fft_cache: fft::FftCache<T>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            fft_cache: fft::FftCache::new(),
        }
    }

    pub(crate) fn push(
        &self,
        value: Arr<T>,
        needs_grad: bool,
        back: Option<Box<dyn BackwardOp<T>>>,
    ) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            needs_grad,
            back,
        });
        Var(nodes.len() - 1)
    }

    pub fn leaf(&self, value: Arr<T>, needs_grad: bool) -> Var {
        self.push(value, needs_grad, None)
    }

    pub fn constant(&self, value: Arr<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].needs_grad
    }

    /// Clone a node's forward value out of the tape.
    pub fn value(&self, v: Var) -> Arr<T> {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    pub fn scalar_value(&self, v: Var) -> T {
        let nodes = self.nodes.borrow();
        let a = &nodes[v.0].value;
        debug_assert_eq!(a.len(), 1);
        *a.iter().next().expect("scalar node")
    }


    /// Reverse pass from a scalar loss. Returns one gradient slot per node
    /// (the slot is populated for every node with `needs_grad` reachable from
    /// the loss).
    pub fn backward(&self, loss: Var) -> Vec<Option<Arr<T>>> {
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Arr<T>>> = (0..nodes.len()).map(|_| None).collect();
        let seed = Arr::from_elem(nodes[loss.0].value.raw_dim(), T::ONE);
        grads[loss.0] = Some(seed);
        let needs: Vec<bool> = nodes.iter().map(|n| n.needs_grad).collect();
        for i in (0..=loss.0).rev() {
            if grads[i].is_none() || !needs[i] {
                continue;
            }
            if let Some(back) = &nodes[i].back {
                // Detach the slot while its node propagates.
                let g = grads[i].take().expect("grad present");
                {
                    let ctx = BackCtx { nodes: &nodes };
                    let mut sink = GradSink {
                        grads: &mut grads,
                        needs: &needs,
                    };
                    back.backward(&g, &ctx, &mut sink);
                }
                grads[i] = Some(g);
            }
        }
        grads
    }

    // ----------------------------------------------------------------- ops

    fn binary_same_shape(&self, a: Var, b: Var, name: &str) {
        let nodes = self.nodes.borrow();
        debug_assert_eq!(
            nodes[a.0].value.shape(),
            nodes[b.0].value.shape(),
            "{name}: shape mismatch"
        );
    }

    pub fn add(&self, a: Var, b: Var) -> Var {
        self.binary_same_shape(a, b, "add");
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            (
                &nodes[a.0].value + &nodes[b.0].value,
                nodes[a.0].needs_grad || nodes[b.0].needs_grad,
            )
        };
        let back = needs.then(|| {
            boxed_back(move |up: &Arr<T>, _ctx: &BackCtx<'_, T>, sink: &mut GradSink<'_, T>| {
                sink.add(a, up.clone());
                sink.add(b, up.clone());
            })
        });
        self.push(value, needs, back)
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        self.binary_same_shape(a, b, "sub");
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            (
                &nodes[a.0].value - &nodes[b.0].value,
                nodes[a.0].needs_grad || nodes[b.0].needs_grad,
            )
        };
        let back = needs.then(|| {
            boxed_back(move |up: &Arr<T>, _ctx: &BackCtx<'_, T>, sink: &mut GradSink<'_, T>| {
                sink.add(a, up.clone());
                sink.add(b, up.mapv(|v| -v));
            })
        });
        self.push(value, needs, back)
    }

    pub fn mul(&self, a: Var, b: Var) -> Var {
        self.binary_same_shape(a, b, "mul");
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            (
                &nodes[a.0].value * &nodes[b.0].value,
                nodes[a.0].needs_grad || nodes[b.0].needs_grad,
            )
        };
        let back = needs.then(|| {
            boxed_back(move |up: &Arr<T>, ctx: &BackCtx<'_, T>, sink: &mut GradSink<'_, T>| {
                if sink.wants(a) {
                    sink.add(a, up * ctx.value(b));
                }
                if sink.wants(b) {
                    sink.add(b, up * ctx.value(a));
                }
            })
        });
        self.push(value, needs, back)
    }

    pub fn scale(&self, a: Var, c: f32) -> Var {
        let c = T::fromf64(f64::from(c));
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            (nodes[a.0].value.mapv(|v| v * c), nodes[a.0].needs_grad)
        };
        let back = needs.then(|| {
            boxed_back(move |up: &Arr<T>, _ctx: &BackCtx<'_, T>, sink: &mut GradSink<'_, T>| {
                sink.add(a, up.mapv(|v| v * c));
            })
        });
        self.push(value, needs, back)
    }

    pub fn add_scalar(&self, a: Var, c: f32) -> Var {
        let c = T::fromf64(f64::from(c));
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            (nodes[a.0].value.mapv(|v| v + c), nodes[a.0].needs_grad)
        };
        let back = needs.then(|| {
            boxed_back(move |up: &Arr<T>, _ctx: &BackCtx<'_, T>, sink: &mut GradSink<'_, T>| {
                sink.add(a, up.clone());
            })
        });
        self.push(value, needs, back)
    }

    /// Elementwise multiplication by a constant array.
    pub fn mul_const(&self, a: Var, c: &Arr<T>) -> Var {
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            debug_assert_eq!(nodes[a.0].value.shape(), c.shape());
            (&nodes[a.0].value * c, nodes[a.0].needs_grad)
        };
        let back = needs.then(|| {
            let c = c.clone();
            boxed_back(move |up: &Arr<T>, _ctx: &BackCtx<'_, T>, sink: &mut GradSink<'_, T>| {
                sink.add(a, up * &c);
            })
        });
        self.push(value, needs, back)
    }

    pub fn add_const(&self, a: Var, c: &Arr<T>) -> Var {
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            debug_assert_eq!(nodes[a.0].value.shape(), c.shape());
            (&nodes[a.0].value + c, nodes[a.0].needs_grad)
        };
        let back = needs.then(|| {
            boxed_back(move |up: &Arr<T>, _ctx: &BackCtx<'_, T>, sink: &mut GradSink<'_, T>| {
                sink.add(a, up.clone());
            })
        });
        self.push(value, needs, back)
    }

    pub fn sum_all(&self, a: Var) -> Var {
        let (value, needs, shape) = {
            let nodes = self.nodes.borrow();
            let s: T = nodes[a.0].value.iter().fold(T::ZERO, |acc, &v| acc + v);
            (
                Arr::from_elem(IxDyn(&[]), s),
                nodes[a.0].needs_grad,
                nodes[a.0].value.raw_dim(),
            )
        };
        let back = needs.then(|| {
            boxed_back(move |up: &Arr<T>, _ctx: &BackCtx<'_, T>, sink: &mut GradSink<'_, T>| {
                let g = *up.iter().next().expect("scalar upstream");
                sink.add(a, Arr::from_elem(shape.clone(), g));
            })
        });
        self.push(value, needs, back)
    }

    pub fn mean_all(&self, a: Var) -> Var {
        let n = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.len()
        };
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n as f32)
    }

    /// Mean absolute difference to a constant target.
    pub fn l1_to_const(&self, a: Var, target: &Arr<T>) -> Var {
        let (value, needs, n) = {
            let nodes = self.nodes.borrow();
            let v = &nodes[a.0].value;
            debug_assert_eq!(v.shape(), target.shape());
            let n = v.len();
            let s = v
                .iter()
                .zip(target.iter())
                .fold(T::ZERO, |acc, (&x, &t)| acc + (x - t).abs());
            (
                Arr::from_elem(IxDyn(&[]), s * T::fromf64(1.0 / n as f64)),
                nodes[a.0].needs_grad,
                n,
            )
        };
        let back = needs.then(|| {
            let target = target.clone();
            boxed_back(move |up: &Arr<T>, ctx: &BackCtx<'_, T>, sink: &mut GradSink<'_, T>| {
                let g = *up.iter().next().expect("scalar upstream");
                let scale = g * T::fromf64(1.0 / n as f64);
                let x = ctx.value(a);
                let mut grad = x.clone();
                grad.zip_mut_with(&target, |xv, &tv| {
                    *xv = if *xv > tv {
                        scale
                    } else if *xv < tv {
                        -scale
                    } else {
                        T::ZERO
                    };
                });
                sink.add(a, grad);
            })
        });
        self.push(value, needs, back)
    }

    /// Mean absolute difference between two variables.
    pub fn l1_diff(&self, a: Var, b: Var) -> Var {
        let d = self.sub(a, b);
        let absd = self.abs(d);
        self.mean_all(absd)
    }

    pub fn abs(&self, a: Var) -> Var {
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            (nodes[a.0].value.mapv(|v| v.abs()), nodes[a.0].needs_grad)
        };
        let back = needs.then(|| {
            boxed_back(move |up: &Arr<T>, ctx: &BackCtx<'_, T>, sink: &mut GradSink<'_, T>| {
                let x = ctx.value(a);
                let mut g = up.clone();
                g.zip_mut_with(x, |gv, &xv| {
                    if xv < T::ZERO {
                        *gv = -*gv;
                    } else if xv == T::ZERO {
                        *gv = T::ZERO;
                    }
                });
                sink.add(a, g);
            })
        });
        self.push(value, needs, back)
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            (
                nodes[a.0].value.mapv(|v| sigmoid_scalar(v)),
                nodes[a.0].needs_grad,
            )
        };
        let out_value = value.clone();
        let back = needs.then(|| {
            boxed_back(move |up: &Arr<T>, _ctx: &BackCtx<'_, T>, sink: &mut GradSink<'_, T>| {
                let mut g = up.clone();
                g.zip_mut_with(&out_value, |gv, &y| {
                    *gv = *gv * y * (T::ONE - y);
                });
                sink.add(a, g);
            })
        });
        self.push(value, needs, back)
    }

    pub fn relu(&self, a: Var) -> Var {
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            (
                nodes[a.0].value.mapv(|v| v.maxv(T::ZERO)),
                nodes[a.0].needs_grad,
            )
        };
        let back = needs.then(|| {
            boxed_back(move |up: &Arr<T>, ctx: &BackCtx<'_, T>, sink: &mut GradSink<'_, T>| {
                let x = ctx.value(a);
                let mut g = up.clone();
                g.zip_mut_with(x, |gv, &xv| {
                    if xv <= T::ZERO {
                        *gv = T::ZERO;
                    }
                });
                sink.add(a, g);
            })
        });
        self.push(value, needs, back)
    }

    /// GELU with the tanh approximation (`GELU(0) = 0` exactly).
    pub fn gelu(&self, a: Var) -> Var {
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            (
                nodes[a.0].value.mapv(|v| gelu_scalar(v)),
                nodes[a.0].needs_grad,
            )
        };
        let back = needs.then(|| {
            boxed_back(move |up: &Arr<T>, ctx: &BackCtx<'_, T>, sink: &mut GradSink<'_, T>| {
                let x = ctx.value(a);
                let mut g = up.clone();
                g.zip_mut_with(x, |gv, &xv| {
                    *gv = *gv * gelu_grad_scalar(xv);
                });
                sink.add(a, g);
            })
        });
        self.push(value, needs, back)
    }

    /// Clamp to `[0,1]`; gradient passes inside the interval (inclusive).
    pub fn clamp01(&self, a: Var) -> Var {
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            (
                nodes[a.0].value.mapv(|v| v.maxv(T::ZERO).minv(T::ONE)),
                nodes[a.0].needs_grad,
            )
        };
        let back = needs.then(|| {
            boxed_back(move |up: &Arr<T>, ctx: &BackCtx<'_, T>, sink: &mut GradSink<'_, T>| {
                let x = ctx.value(a);
                let mut g = up.clone();
                g.zip_mut_with(x, |gv, &xv| {
                    if xv < T::ZERO || xv > T::ONE {
                        *gv = T::ZERO;
                    }
                });
                sink.add(a, g);
            })
        });
        self.push(value, needs, back)
    }

    /// Forward = `real_value`, backward = identity into `syn`: the
    /// stop-gradient bridge `syn + sg(real - syn)`.
    pub fn bridge(&self, syn: Var, real_value: Arr<T>) -> Var {
        let needs = {
            let nodes = self.nodes.borrow();
            debug_assert_eq!(nodes[syn.0].value.shape(), real_value.shape());
            nodes[syn.0].needs_grad
        };
        let back = needs.then(|| {
            boxed_back(move |up: &Arr<T>, _ctx: &BackCtx<'_, T>, sink: &mut GradSink<'_, T>| {
                sink.add(syn, up.clone());
            })
        });
        self.push(real_value, needs, back)
    }

    /// Straight-through rounding to `levels` uniform steps on [0,1]:
    /// forward `round(x * levels) / levels`, backward identity.
    pub fn round_ste(&self, a: Var, levels: f32) -> Var {
        let l = T::fromf64(f64::from(levels));
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            (
                nodes[a.0].value.mapv(|v| (v * l).round() / l),
                nodes[a.0].needs_grad,
            )
        };
        let back = needs.then(|| {
            boxed_back(move |up: &Arr<T>, _ctx: &BackCtx<'_, T>, sink: &mut GradSink<'_, T>| {
                sink.add(a, up.clone());
            })
        });
        self.push(value, needs, back)
    }

    /// Mean binary cross entropy of `sigmoid(logits)` against a constant
    /// binary target, computed in the numerically stable logits form.
    pub fn bce_with_logits(&self, logits: Var, target: &Arr<T>) -> Var {
        let (value, needs, n) = {
            let nodes = self.nodes.borrow();
            let l = &nodes[logits.0].value;
            debug_assert_eq!(l.shape(), target.shape());
            let n = l.len();
            let s = l.iter().zip(target.iter()).fold(T::ZERO, |acc, (&x, &t)| {
                // max(x,0) - x*t + ln(1 + exp(-|x|))
                let hinge = x.maxv(T::ZERO) - x * t;
                acc + hinge + (T::ONE + (-x.abs()).exp()).ln()
            });
            (
                Arr::from_elem(IxDyn(&[]), s * T::fromf64(1.0 / n as f64)),
                nodes[logits.0].needs_grad,
                n,
            )
        };
        let back = needs.then(|| {
            let target = target.clone();
            boxed_back(move |up: &Arr<T>, ctx: &BackCtx<'_, T>, sink: &mut GradSink<'_, T>| {
                let g = *up.iter().next().expect("scalar upstream");
                let scale = g * T::fromf64(1.0 / n as f64);
                let l = ctx.value(logits);
                let mut grad = l.clone();
                grad.zip_mut_with(&target, |lv, &tv| {
                    *lv = (sigmoid_scalar(*lv) - tv) * scale;
                });
                sink.add(logits, grad);
            })
        });
        self.push(value, needs, back)
    }
}

#[inline]
fn sigmoid_scalar<T: Scalar>(x: T) -> T {
    if x >= T::ZERO {
        T::ONE / (T::ONE + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::ONE + e)
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

#[inline]
fn gelu_scalar<T: Scalar>(x: T) -> T {
    let c = T::fromf64(GELU_C);
    let a = T::fromf64(GELU_A);
    let half = T::fromf64(0.5);
    let u = c * (x + a * x * x * x);
    half * x * (T::ONE + u.tanh())
}

#[inline]
fn gelu_grad_scalar<T: Scalar>(x: T) -> T {
    let c = T::fromf64(GELU_C);
    let a = T::fromf64(GELU_A);
    let half = T::fromf64(0.5);
    let three = T::fromf64(3.0);
    let u = c * (x + a * x * x * x);
    let t = u.tanh();
    let sech2 = T::ONE - t * t;
    half * (T::ONE + t) + half * x * sech2 * c * (T::ONE + three * a * x * x)
}

pub(crate) fn boxed_back<T, F>(f: F) -> Box<dyn BackwardOp<T>>
where
    T: Scalar,
    F: Fn(&Arr<T>, &BackCtx<'_, T>, &mut GradSink<'_, T>) + 'static,
{
    Box::new(ClosureBack(f, std::marker::PhantomData))
}

pub mod check;

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::IxDyn;

    fn arr(vals: &[f64], shape: &[usize]) -> Arr<f64> {
        Arr::from_shape_vec(IxDyn(shape), vals.to_vec()).unwrap()
    }

    #[test]
    fn add_mul_backward() {
        let t: Tape<f64> = Tape::new();
        let a = t.leaf(arr(&[1.0, 2.0, 3.0], &[3]), true);
        let b = t.leaf(arr(&[4.0, 5.0, 6.0], &[3]), true);
        let y = t.mul(t.add(a, b), b);
        let loss = t.sum_all(y);
        let grads = t.backward(loss);
        // d/da (a+b)*b = b ; d/db = a + 2b
        let ga = grads[a.0].as_ref().unwrap();
        let gb = grads[b.0].as_ref().unwrap();
        assert_eq!(ga.as_slice().unwrap(), &[4.0, 5.0, 6.0]);
        assert_eq!(gb.as_slice().unwrap(), &[9.0, 12.0, 15.0]);
    }

    #[test]
    fn bce_at_zero_logits_is_ln2() {
        let t: Tape<f64> = Tape::new();
        let l = t.leaf(Arr::zeros(IxDyn(&[4, 1, 2, 2])), true);
        let target = Arr::from_elem(IxDyn(&[4, 1, 2, 2]), 1.0);
        let loss = t.bce_with_logits(l, &target);
        assert!((t.scalar_value(loss) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn bridge_forward_real_backward_identity() {
        let t: Tape<f64> = Tape::new();
        let syn = t.leaf(arr(&[0.3, 0.8], &[2]), true);
        let real = arr(&[0.25, 0.75], &[2]);
        let y = t.bridge(syn, real.clone());
        assert_eq!(t.value(y), real);
        let loss = t.sum_all(y);
        let grads = t.backward(loss);
        assert_eq!(
            grads[syn.0].as_ref().unwrap().as_slice().unwrap(),
            &[1.0, 1.0]
        );
    }

    #[test]
    fn gelu_zero_maps_to_zero() {
        let t: Tape<f64> = Tape::new();
        let a = t.leaf(Arr::zeros(IxDyn(&[2, 2])), false);
        let y = t.gelu(a);
        assert!(t.value(y).iter().all(|&v| v == 0.0));
    }
}
