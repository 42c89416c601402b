//! Trainable-layer building blocks over the tape: a parameter store plus
//! convolution, depthwise-separable stem, layer norm and channel attention.

use ndarray::{Array1, Array3, Array4, IxDyn};
use rand::Rng;

use crate::tensor::{Arr, Scalar, Tape, Var};

/// Flat, named parameter storage. Layers hold indices into it; each training
/// step lifts all parameters onto a fresh tape.
#[derive(Debug, Clone)]
pub struct ParamStore<T: Scalar> {
    names: Vec<String>,
    values: Vec<Arr<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Arr<T>) -> usize {
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn value(&self, i: usize) -> &Arr<T> {
        &self.values[i]
    }

    pub fn value_mut(&mut self, i: usize) -> &mut Arr<T> {
        &mut self.values[i]
    }

    /// Total number of learnable scalars.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Lift all parameters as trainable leaves.
    pub fn lift(&self, tape: &Tape<T>) -> Vec<Var> {
        self.values
            .iter()
            .map(|v| tape.leaf(v.clone(), true))
            .collect()
    }

    /// Lift all parameters frozen (no gradient).
    pub fn lift_constants(&self, tape: &Tape<T>) -> Vec<Var> {
        self.values
            .iter()
            .map(|v| tape.leaf(v.clone(), false))
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Arr<T>)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.values.iter())
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Init {
    /// Kaiming-uniform fan-in bound, matching common conv initialization.
    Kaiming,
    Zeros,
}

fn kaiming<T: Scalar>(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Arr<T> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Arr::from_shape_fn(IxDyn(shape), |_| {
        T::fromf64(rng.gen_range(-bound..bound))
    })
}

/// Dense 2-D convolution layer.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub w: usize,
    pub b: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
        init: Init,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = c_in * k * k;
        let w = match init {
            Init::Kaiming => kaiming(&[c_out, c_in, k, k], fan_in, rng),
            Init::Zeros => Array4::<T>::zeros((c_out, c_in, k, k)).into_dyn(),
        };
        let b = match init {
            Init::Kaiming => kaiming(&[c_out], fan_in, rng),
            Init::Zeros => Array1::<T>::zeros(c_out).into_dyn(),
        };
        Self {
            w: store.add(format!("{name}.w"), w),
            b: store.add(format!("{name}.b"), b),
            stride,
            pad,
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &Tape<T>, params: &[Var], x: Var) -> Var {
        tape.conv2d(x, params[self.w], Some(params[self.b]), self.stride, self.pad)
    }
}

/// Depthwise 3x3 followed by pointwise 1x1 (depthwise-separable convolution).
#[derive(Debug, Clone)]
pub struct DsConv {
    pub dw: usize,
    pub dwb: usize,
    pub pw: usize,
    pub pwb: usize,
}

impl DsConv {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        init: Init,
        rng: &mut impl Rng,
    ) -> Self {
        let dw = match init {
            Init::Kaiming => kaiming(&[c_in, 3, 3], 9, rng),
            Init::Zeros => Array3::<T>::zeros((c_in, 3, 3)).into_dyn(),
        };
        let dwb = Array1::<T>::zeros(c_in).into_dyn();
        let pw = match init {
            Init::Kaiming => kaiming(&[c_out, c_in, 1, 1], c_in, rng),
            Init::Zeros => Array4::<T>::zeros((c_out, c_in, 1, 1)).into_dyn(),
        };
        let pwb = Array1::<T>::zeros(c_out).into_dyn();
        Self {
            dw: store.add(format!("{name}.dw"), dw),
            dwb: store.add(format!("{name}.dwb"), dwb),
            pw: store.add(format!("{name}.pw"), pw),
            pwb: store.add(format!("{name}.pwb"), pwb),
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &Tape<T>, params: &[Var], x: Var) -> Var {
        let y = tape.depthwise(x, params[self.dw], Some(params[self.dwb]));
        tape.conv2d(y, params[self.pw], Some(params[self.pwb]), 1, 0)
    }
}

/// "DSConv-LN-GELU" stem.
#[derive(Debug, Clone)]
pub struct DsConvLnGelu {
    pub conv: DsConv,
    pub gamma: usize,
    pub beta: usize,
}

impl DsConvLnGelu {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let conv = DsConv::new(store, &format!("{name}.ds"), c_in, c_out, Init::Kaiming, rng);
        let gamma = store.add(
            format!("{name}.ln.g"),
            Arr::from_elem(IxDyn(&[c_out]), T::ONE),
        );
        let beta = store.add(format!("{name}.ln.b"), Arr::zeros(IxDyn(&[c_out])));
        Self { conv, gamma, beta }
    }

    pub fn forward<T: Scalar>(&self, tape: &Tape<T>, params: &[Var], x: Var) -> Var {
        let y = self.conv.forward(tape, params, x);
        let y = tape.layernorm_ch(y, params[self.gamma], params[self.beta], 1e-5);
        tape.gelu(y)
    }
}

/// Squeeze-style channel attention: GAP, 1x1 bottleneck (c -> c/4 -> c),
/// sigmoid gate applied multiplicatively.
#[derive(Debug, Clone)]
pub struct ChannelAttention {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

impl ChannelAttention {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        c: usize,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(c >= 2, "channel attention needs c >= 2");
        let mid = (c / 4).max(1);
        Self {
            w1: store.add(format!("{name}.w1"), kaiming(&[mid, c, 1, 1], c, rng)),
            b1: store.add(format!("{name}.b1"), Arr::zeros(IxDyn(&[mid]))),
            w2: store.add(format!("{name}.w2"), kaiming(&[c, mid, 1, 1], mid, rng)),
            b2: store.add(format!("{name}.b2"), Arr::zeros(IxDyn(&[c]))),
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &Tape<T>, params: &[Var], x: Var) -> Var {
        let pooled = tape.gap(x);
        let h = tape.conv2d(pooled, params[self.w1], Some(params[self.b1]), 1, 0);
        let h = tape.relu(h);
        let h = tape.conv2d(h, params[self.w2], Some(params[self.b2]), 1, 0);
        let gate = tape.sigmoid(h);
        tape.gate_mul(x, gate)
    }
}
