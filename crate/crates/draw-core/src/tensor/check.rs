//! Finite-difference gradient checking used by the test suites.

use super::{Arr, Tape, Var};

/// Result of a finite-difference comparison.
#[derive(Debug)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub checked: usize,
}

/// Compares analytic gradients of `f` (a scalar-valued tape program over the
/// given leaf inputs) against central finite differences.
///
/// `probe_stride` subsamples coordinates (1 = every element). Relative error
/// uses `|a-n| / max(|a|, |n|, floor)`.
pub fn grad_check<F>(inputs: &[Arr<f64>], eps: f64, probe_stride: usize, f: F) -> GradCheck
where
    F: Fn(&Tape<f64>, &[Var]) -> Var,
{
    let tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|a| tape.leaf(a.clone(), true))
        .collect();
    let loss = f(&tape, &vars);
    assert_eq!(tape.value(loss).len(), 1, "grad_check needs a scalar loss");
    let grads = tape.backward(loss);

    let mut max_rel_err: f64 = 0.0;
    let mut checked = 0usize;
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads[vars[i].0]
            .as_ref()
            .unwrap_or_else(|| panic!("no gradient for input {i}"));
        let flat_len = input.len();
        let mut idx = 0usize;
        while idx < flat_len {
            let mut plus = inputs.to_vec();
            let mut minus = inputs.to_vec();
            {
                let p = plus[i].as_slice_mut().expect("contiguous");
                p[idx] += eps;
                let m = minus[i].as_slice_mut().expect("contiguous");
                m[idx] -= eps;
            }
            let lp = eval_scalar(&plus, &f);
            let lm = eval_scalar(&minus, &f);
            let numeric = (lp - lm) / (2.0 * eps);
            let a = analytic.as_slice().expect("contiguous")[idx];
            let denom = a.abs().max(numeric.abs()).max(1e-4);
            let rel = (a - numeric).abs() / denom;
            max_rel_err = max_rel_err.max(rel);
            checked += 1;
            idx += probe_stride;
        }
    }
    GradCheck {
        max_rel_err,
        checked,
    }
}

fn eval_scalar<F>(inputs: &[Arr<f64>], f: &F) -> f64
where
    F: Fn(&Tape<f64>, &[Var]) -> Var,
{
    let tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|a| tape.leaf(a.clone(), true))
        .collect();
    let loss = f(&tape, &vars);
    tape.scalar_value(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::IxDyn;

    #[test]
    fn elementwise_chain_passes() {
        let x = Arr::from_shape_fn(IxDyn(&[2, 3]), |ix| 0.1 + 0.3 * (ix[0] * 3 + ix[1]) as f64);
        let r = grad_check(&[x], 1e-6, 1, |t, v| {
            let y = t.gelu(v[0]);
            let z = t.sigmoid(y);
            t.mean_all(z)
        });
        assert!(r.max_rel_err < 1e-6, "{r:?}");
    }

    #[test]
    fn conv_depthwise_layernorm_pass() {
        let x = Arr::from_shape_fn(IxDyn(&[1, 4, 6, 6]), |ix| {
            ((ix[1] * 36 + ix[2] * 6 + ix[3]) as f64 * 0.619).sin() * 0.5
        });
        let w = Arr::from_shape_fn(IxDyn(&[3, 4, 3, 3]), |ix| {
            ((ix[0] * 36 + ix[1] * 9 + ix[2] * 3 + ix[3]) as f64 * 0.37).cos() * 0.3
        });
        let b = Arr::from_shape_fn(IxDyn(&[3]), |ix| 0.05 * ix[0] as f64);
        let r = grad_check(&[x, w, b], 1e-6, 3, |t, v| {
            let y = t.conv2d(v[0], v[1], Some(v[2]), 1, 1);
            let z = t.gelu(y);
            t.mean_all(z)
        });
        assert!(r.max_rel_err < 1e-6, "{r:?}");

        let x = Arr::from_shape_fn(IxDyn(&[2, 3, 5, 5]), |ix| {
            ((ix[0] * 75 + ix[1] * 25 + ix[2] * 5 + ix[3]) as f64 * 0.17).sin()
        });
        let dw = Arr::from_shape_fn(IxDyn(&[3, 3, 3]), |ix| {
            ((ix[0] * 9 + ix[1] * 3 + ix[2]) as f64 * 0.23).cos() * 0.4
        });
        let db = Arr::from_shape_fn(IxDyn(&[3]), |ix| 0.02 * (ix[0] + 1) as f64);
        let gamma = Arr::from_elem(IxDyn(&[3]), 1.1);
        let beta = Arr::from_elem(IxDyn(&[3]), -0.05);
        let r = grad_check(&[x, dw, db, gamma, beta], 1e-6, 2, |t, v| {
            let y = t.depthwise(v[0], v[1], Some(v[2]));
            let z = t.layernorm_ch(y, v[3], v[4], 1e-5);
            let s = t.sigmoid(z);
            t.mean_all(s)
        });
        assert!(r.max_rel_err < 1e-5, "{r:?}");
    }

    #[test]
    fn fft_resize_gate_pass() {
        let x = Arr::from_shape_fn(IxDyn(&[1, 2, 8, 8]), |ix| {
            ((ix[1] * 64 + ix[2] * 8 + ix[3]) as f64 * 0.77).sin() * 0.4 + 0.5
        });
        let r = grad_check(&[x.clone()], 1e-6, 5, |t, v| {
            let s = t.fft2_stack(v[0]);
            let y = t.ifft2_unstack(s);
            let z = t.resize_bilinear(y, 5, 7);
            t.mean_all(z)
        });
        assert!(r.max_rel_err < 1e-6, "{r:?}");

        let r = grad_check(&[x], 1e-6, 5, |t, v| {
            let g = t.gap(v[0]);
            let y = t.gate_mul(v[0], g);
            t.mean_all(y)
        });
        assert!(r.max_rel_err < 1e-6, "{r:?}");
    }

    #[test]
    fn image_ops_pass() {
        let x = Arr::from_shape_fn(IxDyn(&[1, 3, 4, 4]), |ix| {
            0.1 + 0.8 * (((ix[1] * 16 + ix[2] * 4 + ix[3]) as f64 * 0.634).sin() * 0.5 + 0.5)
        });
        let r = grad_check(&[x.clone()], 1e-7, 1, |t, v| {
            let m = t.mosaic(v[0], crate::imaging::BayerPattern::Rggb);
            let d = t.demosaic(m, crate::imaging::BayerPattern::Rggb);
            t.mean_all(d)
        });
        assert!(r.max_rel_err < 1e-6, "{r:?}");

        let r = grad_check(&[x.clone()], 1e-7, 1, |t, v| {
            let y = t.hue_rotate(v[0], 0.04);
            let z = t.saturation_adjust(y, 1.3);
            let w = t.contrast_adjust(z, 0.8);
            t.mean_all(w)
        });
        assert!(r.max_rel_err < 1e-5, "{r:?}");

        let r = grad_check(&[x], 1e-6, 1, |t, v| {
            let y = t.gaussian_blur(v[0], 3, 1.0);
            t.mean_all(y)
        });
        assert!(r.max_rel_err < 1e-6, "{r:?}");
    }
}
