//! Adam optimizer with global-norm gradient clipping.

use ndarray::ArrayD;

use crate::nn::ParamStore;
use crate::tensor::{Arr, Var};

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub clip_norm: Option<f32>,
    pub t: u64,
    m: Vec<Option<ArrayD<f32>>>,
    v: Vec<Option<ArrayD<f32>>>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StepInfo {
    pub grad_norm: f64,
    pub clipped: bool,
}

impl Adam {
    pub fn new(lr: f32, n_params: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(1.0),
            t: 0,
            m: vec![None; n_params],
            v: vec![None; n_params],
        }
    }

    /// One update over every parameter in `store` whose lifted var received a
    /// gradient. Gradients are jointly rescaled when the global norm exceeds
    /// `clip_norm`.
    pub fn step(
        &mut self,
        store: &mut ParamStore<f32>,
        lifted: &[Var],
        grads: &[Option<Arr<f32>>],
    ) -> StepInfo {
        self.step_groups(&mut [(store, lifted)], grads)
    }

    /// Joint update over several stores sharing one optimizer (one learning
    /// rate, one global-norm clip, moments indexed across all groups in
    /// order).
    pub fn step_groups(
        &mut self,
        groups: &mut [(&mut ParamStore<f32>, &[Var])],
        grads: &[Option<Arr<f32>>],
    ) -> StepInfo {
        self.t += 1;
        let mut info = StepInfo::default();
        let mut sq = 0.0f64;
        for (_, lifted) in groups.iter() {
            for var in lifted.iter() {
                if let Some(g) = &grads[var.0] {
                    sq += g.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>();
                }
            }
        }
        info.grad_norm = sq.sqrt();
        let mut scale = 1.0f32;
        if let Some(limit) = self.clip_norm {
            if info.grad_norm > f64::from(limit) && info.grad_norm > 0.0 {
                scale = (f64::from(limit) / info.grad_norm) as f32;
                info.clipped = true;
            }
        }

        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut flat = 0usize;
        for (store, lifted) in groups.iter_mut() {
            for (i, var) in lifted.iter().enumerate() {
                let slot = flat + i;
                let Some(g) = &grads[var.0] else { continue };
                if self.m[slot].is_none() {
                    self.m[slot] = Some(ArrayD::zeros(g.raw_dim()));
                    self.v[slot] = Some(ArrayD::zeros(g.raw_dim()));
                }
                let m = self.m[slot].as_mut().expect("moment m");
                let v = self.v[slot].as_mut().expect("moment v");
                let p = store.value_mut(i);
                ndarray::Zip::from(p)
                    .and(m)
                    .and(v)
                    .and(g)
                    .for_each(|p, m, v, &graw| {
                        let g = graw * scale;
                        *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                        *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                        let mhat = *m / bc1;
                        let vhat = *v / bc2;
                        *p -= self.lr * mhat / (vhat.sqrt() + self.eps);
                    });
            }
            flat += lifted.len();
        }
        info
    }

    /// Serializes optimizer moments for checkpointing.
    pub fn moments(&self) -> (&[Option<ArrayD<f32>>], &[Option<ArrayD<f32>>]) {
        (&self.m, &self.v)
    }

    pub fn restore_moments(
        &mut self,
        t: u64,
        m: Vec<Option<ArrayD<f32>>>,
        v: Vec<Option<ArrayD<f32>>>,
    ) {
        self.t = t;
        self.m = m;
        self.v = v;
    }
}
