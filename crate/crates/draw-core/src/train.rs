//! Joint training of the protection and localization networks through the
//! full pipeline (render, attack, detect), plus the two baseline modes.
//!
//! One Adam instance spans both parameter stores with a shared learning rate
//! and a global-norm clip. Per-step randomness (batch choice, omega, attack
//! plans) derives from `(seed, purpose, step/sample)` streams, so training is
//! reproducible and checkpoint resume is bit-exact.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array4, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adam::Adam;
use crate::attack::{apply_plan, sample_plan, AttackConfig};
use crate::ckpt;
use crate::detector::{loss_authentic, loss_tampered, Detector, DEFAULT_ARCH};
use crate::error::{DrawError, Result};
use crate::imaging::{BayerPattern, RawImage};
use crate::isp::{conventional_isp_plane, mix_render, pretrain_learnable_isp, IspParams, LearnableIsp};
use crate::metrics::{psnr_arr, seg_metrics};
use crate::mpf::{MpfConfig, MpfNet};
use crate::rng::stream;
use crate::tensor::{Arr, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Draw,
    RobustOnly,
    RgbProtect,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub steps: u64,
    pub seed: u64,
    pub n_isp_surrogates: usize,
    pub ckpt_every: u64,
    pub detector_arch: String,
    pub isp_pretrain_steps: usize,
    pub isp_pretrain_lr: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Draw,
            alpha: 10.0,
            beta: 1.0,
            gamma: 0.02,
            epsilon: 0.01,
            lr: 1e-4,
            batch_size: 4,
            steps: 2000,
            seed: 0,
            n_isp_surrogates: 2,
            ckpt_every: 500,
            detector_arch: DEFAULT_ARCH.to_string(),
            isp_pretrain_steps: 600,
            isp_pretrain_lr: 1e-3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 {
            return Err(DrawError::InvalidArgument("lr must be > 0".into()));
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("epsilon", self.epsilon),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(DrawError::InvalidArgument(format!(
                    "loss weight {name} must be >= 0"
                )));
            }
        }
        if self.batch_size < 2 {
            return Err(DrawError::InvalidArgument(
                "batch_size must be >= 2 (half tampered, half authentic)".into(),
            ));
        }
        if self.n_isp_surrogates == 0 {
            return Err(DrawError::InvalidArgument(
                "need at least one ISP surrogate".into(),
            ));
        }
        Ok(())
    }

    /// Mode-resolved loss weights. The RGB-protection baseline drops the RAW
    /// term and runs with beta = 1, gamma = 0.01, epsilon = 0.005; pure
    /// robust training keeps only the localization terms.
    pub fn weights(&self) -> LossWeights {
        match self.mode {
            TrainMode::Draw => LossWeights {
                alpha: self.alpha,
                beta: self.beta,
                gamma: self.gamma,
                epsilon: self.epsilon,
            },
            TrainMode::RobustOnly => LossWeights {
                alpha: 0.0,
                beta: 0.0,
                gamma: self.gamma,
                epsilon: self.epsilon,
            },
            TrainMode::RgbProtect => LossWeights {
                alpha: 0.0,
                beta: 1.0,
                gamma: 0.01,
                epsilon: 0.005,
            },
        }
    }
}

/// `alpha*L_raw + beta*L_rgb + gamma*L_dt + epsilon*L_dnt`.
pub fn total_loss(l_raw: f64, l_rgb: f64, l_dt: f64, l_dnt: f64, w: &LossWeights) -> Result<f64> {
    let parts = [l_raw, l_rgb, l_dt, l_dnt];
    if parts.iter().any(|v| !v.is_finite()) {
        return Err(DrawError::NonFiniteLoss {
            step: 0,
            detail: format!("components {parts:?}"),
        });
    }
    Ok(w.alpha * l_raw + w.beta * l_rgb + w.gamma * l_dt + w.epsilon * l_dnt)
}

/// RAW- and RGB-domain fidelity terms (mean l1).
pub fn fidelity_losses(
    tape: &Tape<f32>,
    raw_ref: &Arr<f32>,
    raw_hat: Var,
    rgb_ref: Var,
    rgb_hat: Var,
) -> (Var, Var) {
    (
        tape.l1_to_const(raw_hat, raw_ref),
        tape.l1_diff(rgb_hat, rgb_ref),
    )
}

/// Everything the trainer owns.
pub struct TrainState {
    pub mpf: Option<MpfNet<f32>>,
    pub detector: Detector<f32>,
    pub surrogates: Vec<LearnableIsp>,
    pub adam: Adam,
    pub step: u64,
}

impl TrainState {
    pub fn new(
        cfg: &TrainConfig,
        mpf_cfg: &MpfConfig,
        surrogates: Vec<LearnableIsp>,
    ) -> Result<Self> {
        cfg.validate()?;
        let mpf = match cfg.mode {
            TrainMode::RobustOnly => None,
            _ => Some(MpfNet::new(mpf_cfg.clone(), cfg.seed)?),
        };
        let detector = Detector::new(&cfg.detector_arch, cfg.seed ^ 0x5a5a)?;
        let n_params =
            mpf.as_ref().map_or(0, |m| m.store.len()) + detector.store.len();
        Ok(Self {
            mpf,
            detector,
            surrogates,
            adam: Adam::new(cfg.lr as f32, n_params),
            step: 0,
        })
    }

    pub fn protection_param_count(&self) -> usize {
        self.mpf.as_ref().map_or(0, |m| m.count_parameters())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StepMetrics {
    pub step: u64,
    pub total: f64,
    pub l_raw: f64,
    pub l_rgb: f64,
    pub l_dt: f64,
    pub l_dnt: f64,
    /// PSNR between reference and protected renders, averaged over the batch.
    pub psnr_render: f64,
    /// Mean F1 of thresholded predictions on the tampered half.
    pub f1: f64,
    pub grad_norm: f64,
    pub clipped: bool,
    pub p_params: usize,
}

fn batch_to_array(batch: &[RawImage]) -> Result<(Array4<f32>, BayerPattern)> {
    let pattern = batch[0].pattern;
    let (h, w) = (batch[0].height(), batch[0].width());
    for r in batch {
        if r.pattern != pattern || r.height() != h || r.width() != w {
            return Err(DrawError::InvalidArgument(
                "batch must share pattern and dimensions".into(),
            ));
        }
    }
    let mut out = Array4::zeros((batch.len(), 1, h, w));
    for (i, r) in batch.iter().enumerate() {
        out.index_axis_mut(Axis(0), i)
            .index_axis_mut(Axis(0), 0)
            .assign(&r.data());
    }
    Ok((out, pattern))
}

fn plane_of(v: &Arr<f32>) -> Array2<f32> {
    let v4 = v
        .view()
        .into_dimensionality::<ndarray::Ix4>()
        .expect("[1,1,H,W]");
    let (_, _, h, w) = v4.dim();
    Array2::from_shape_fn((h, w), |(y, x)| v4[[0, 0, y, x]])
}

fn rgb_of(v: &Arr<f32>) -> ndarray::Array3<f32> {
    let v4 = v
        .view()
        .into_dimensionality::<ndarray::Ix4>()
        .expect("[1,3,H,W]");
    let (_, c, h, w) = v4.dim();
    ndarray::Array3::from_shape_fn((c, h, w), |(ci, y, x)| v4[[0, ci, y, x]])
}

/// One optimization step. The first half of the batch is given tampered
/// targets, the second half authentic ones.
pub fn train_step(
    state: &mut TrainState,
    batch: &[RawImage],
    cfg: &TrainConfig,
    isp_params: &IspParams,
    attack_cfg: &AttackConfig,
) -> Result<StepMetrics> {
    let step = state.step;
    let n = batch.len();
    let n_tampered = n / 2;
    let (raw_batch, pattern) = batch_to_array(batch)?;
    let (h, w) = (raw_batch.dim().2, raw_batch.dim().3);
    let weights = cfg.weights();

    let tape: Tape<f32> = Tape::new();
    let p_params: Option<Vec<Var>> = state.mpf.as_ref().map(|m| m.store.lift(&tape));
    let d_params = state.detector.store.lift(&tape);
    let surrogate = &state.surrogates[(step as usize) % state.surrogates.len()];
    let s_params = surrogate.store.lift_constants(&tape);

    let raw_const = tape.leaf(raw_batch.clone().into_dyn(), false);

    // --- protection + rendering ---------------------------------------
    let mut protected_renders: Vec<Var> = Vec::with_capacity(n);
    let mut reference_values: Vec<ndarray::Array3<f32>> = Vec::with_capacity(n);
    let mut l_raw = tape.constant(Arr::zeros(ndarray::IxDyn(&[])));
    let mut l_rgb = tape.constant(Arr::zeros(ndarray::IxDyn(&[])));

    match cfg.mode {
        TrainMode::Draw | TrainMode::RobustOnly => {
            let raw_hat = if let (Some(mpf), Some(pp)) = (&state.mpf, &p_params) {
                let demos = tape.demosaic(raw_const, pattern);
                let protected = mpf.forward(&tape, pp, demos)?;
                let remosaic = tape.mosaic(protected, pattern);
                tape.clamp01(remosaic)
            } else {
                raw_const
            };
            if state.mpf.is_some() {
                l_raw = tape.l1_to_const(raw_hat, &raw_batch.clone().into_dyn());
            }

            let mut rgb_terms = Vec::with_capacity(n);
            for i in 0..n {
                let mut omega_rng = stream(cfg.seed, "omega", step * n as u64 + i as u64);
                let omega: f64 = omega_rng.gen_range(0.0..=1.0);

                let raw_hat_i = tape.slice_n(raw_hat, i);
                let conv_hat = conventional_isp_plane(
                    plane_of(&tape.value(raw_hat_i)).view(),
                    pattern,
                    isp_params,
                );
                let rendered =
                    mix_render(&tape, surrogate, &s_params, raw_hat_i, conv_hat.view(), pattern, omega)?;

                let raw_i = tape.slice_n(raw_const, i);
                let conv_ref = conventional_isp_plane(
                    plane_of(&tape.value(raw_i)).view(),
                    pattern,
                    isp_params,
                );
                let reference =
                    mix_render(&tape, surrogate, &s_params, raw_i, conv_ref.view(), pattern, omega)?;

                if state.mpf.is_some() {
                    rgb_terms.push(tape.l1_diff(rendered, reference));
                }
                reference_values.push(rgb_of(&tape.value(reference)));
                protected_renders.push(rendered);
            }
            if !rgb_terms.is_empty() {
                let mut acc = rgb_terms[0];
                for t in &rgb_terms[1..] {
                    acc = tape.add(acc, *t);
                }
                l_rgb = tape.scale(acc, 1.0 / rgb_terms.len() as f32);
            }
        }
        TrainMode::RgbProtect => {
            // the imaging pipeline is ruled out: protect rendered RGBs directly
            let mpf = state.mpf.as_ref().expect("rgb_protect trains P");
            let pp = p_params.as_ref().expect("params lifted");
            let mut refs = Array4::zeros((n, 3, h, w));
            for i in 0..n {
                let rgb = conventional_isp_plane(
                    raw_batch.index_axis(Axis(0), i).index_axis(Axis(0), 0),
                    pattern,
                    isp_params,
                );
                refs.index_axis_mut(Axis(0), i).assign(&rgb);
                reference_values.push(rgb);
            }
            let refs_const = tape.leaf(refs.clone().into_dyn(), false);
            let protected = mpf.forward(&tape, pp, refs_const)?;
            let protected = tape.clamp01(protected);
            l_rgb = tape.l1_to_const(protected, &refs.into_dyn());
            for i in 0..n {
                protected_renders.push(tape.slice_n(protected, i));
            }
        }
    }

    // --- attacks --------------------------------------------------------
    let mut attacked: Vec<Var> = Vec::with_capacity(n);
    let mut gt_masks: Vec<Array2<f32>> = Vec::with_capacity(n);
    for i in 0..n {
        let force = Some(i < n_tampered);
        let mut rng = stream(cfg.seed, "attack-plan", step * n as u64 + i as u64);
        let tamper_round = step * n_tampered as u64 + (i as u64).min(n_tampered as u64);
        let plan = sample_plan(
            attack_cfg,
            h,
            w,
            n - 1,
            n - 1,
            tamper_round,
            force,
            &mut rng,
        )?;
        let pool: Vec<Var> = (0..n)
            .filter(|&j| j != i)
            .map(|j| protected_renders[j])
            .collect();
        let splice_pool: Vec<ndarray::Array3<f32>> = (0..n)
            .filter(|&j| j != i)
            .map(|j| reference_values[j].clone())
            .collect();
        let (out, gt) = apply_plan(&tape, protected_renders[i], &pool, &splice_pool, &plan)?;
        attacked.push(out);
        gt_masks.push(gt);
    }

    // --- detection ------------------------------------------------------
    let det_in = tape.concat_n(&attacked);
    let logits = state.detector.forward(&tape, &d_params, det_in)?;
    let mut lt_terms = Vec::new();
    let mut lnt_terms = Vec::new();
    for i in 0..n {
        let li = tape.slice_n(logits, i);
        if i < n_tampered {
            lt_terms.push(loss_tampered(&tape, li, &gt_masks[i])?);
        } else {
            lnt_terms.push(loss_authentic(&tape, li));
        }
    }
    let mean_of = |terms: &[Var]| -> Var {
        let mut acc = terms[0];
        for t in &terms[1..] {
            acc = tape.add(acc, *t);
        }
        tape.scale(acc, 1.0 / terms.len() as f32)
    };
    let l_dt = mean_of(&lt_terms);
    let l_dnt = mean_of(&lnt_terms);

    // --- combine, check, update -----------------------------------------
    let mut total = tape.scale(l_raw, weights.alpha as f32);
    total = tape.add(total, tape.scale(l_rgb, weights.beta as f32));
    total = tape.add(total, tape.scale(l_dt, weights.gamma as f32));
    total = tape.add(total, tape.scale(l_dnt, weights.epsilon as f32));

    let total_value = f64::from(tape.scalar_value(total));
    if !total_value.is_finite() {
        return Err(DrawError::NonFiniteLoss {
            step,
            detail: format!(
                "raw {} rgb {} dt {} dnt {}",
                tape.scalar_value(l_raw),
                tape.scalar_value(l_rgb),
                tape.scalar_value(l_dt),
                tape.scalar_value(l_dnt)
            ),
        });
    }

    let grads = tape.backward(total);
    let info = {
        let d_store = &mut state.detector.store;
        if let (Some(mpf), Some(pp)) = (state.mpf.as_mut(), p_params.as_ref()) {
            state.adam.step_groups(
                &mut [(&mut mpf.store, pp), (d_store, &d_params)],
                &grads,
            )
        } else {
            state.adam.step_groups(&mut [(d_store, &d_params)], &grads)
        }
    };

    // --- metrics ----------------------------------------------------------
    let mut psnr_sum = 0.0;
    for i in 0..n {
        let rendered = rgb_of(&tape.value(protected_renders[i]));
        psnr_sum += psnr_arr(reference_values[i].view(), rendered.view()).unwrap_or(0.0);
    }
    let mut f1_sum = 0.0;
    let logits_v = tape.value(logits);
    let logits_v = logits_v
        .view()
        .into_dimensionality::<ndarray::Ix4>()
        .expect("4d");
    for (i, gt) in gt_masks.iter().enumerate().take(n_tampered) {
        let pred = Array2::from_shape_fn((h, w), |(y, x)| {
            f32::from(u8::from(logits_v[[i, 0, y, x]] >= 0.0))
        });
        let (_, f1, _) = seg_metrics(
            &crate::imaging::BinaryMask::from_data(pred)?,
            &crate::imaging::BinaryMask::from_data(gt.clone())?,
            0.5,
        )?;
        f1_sum += f1;
    }

    state.step += 1;
    Ok(StepMetrics {
        step,
        total: total_value,
        l_raw: f64::from(tape.scalar_value(l_raw)),
        l_rgb: f64::from(tape.scalar_value(l_rgb)),
        l_dt: f64::from(tape.scalar_value(l_dt)),
        l_dnt: f64::from(tape.scalar_value(l_dnt)),
        psnr_render: psnr_sum / n as f64,
        f1: if n_tampered > 0 {
            f1_sum / n_tampered as f64
        } else {
            0.0
        },
        grad_norm: info.grad_norm,
        clipped: info.clipped,
        p_params: state.protection_param_count(),
    })
}

/// Prepares surrogates: loads from `cache_dir` when present, otherwise
/// pretrains against the conventional pipeline and caches.
pub fn prepare_surrogates(
    dataset: &[RawImage],
    isp_params: &IspParams,
    cfg: &TrainConfig,
    cache_dir: Option<&Path>,
) -> Result<Vec<LearnableIsp>> {
    if let Some(dir) = cache_dir {
        if dir.join("isp.manifest.json").exists() {
            let loaded = ckpt::load_isp_surrogates(dir)?;
            if loaded.len() >= cfg.n_isp_surrogates {
                return Ok(loaded.into_iter().take(cfg.n_isp_surrogates).collect());
            }
        }
    }
    let mut out = Vec::with_capacity(cfg.n_isp_surrogates);
    for k in 0..cfg.n_isp_surrogates {
        let (s, _l1) = pretrain_learnable_isp(
            dataset,
            isp_params,
            cfg.isp_pretrain_steps,
            cfg.isp_pretrain_lr,
            crate::rng::stream_key(cfg.seed, "isp-surrogate-seed", k as u64),
        )?;
        out.push(s);
    }
    if let Some(dir) = cache_dir {
        ckpt::save_isp_surrogates(&out, dir)?;
    }
    Ok(out)
}

fn checkpoint_dir(out_dir: &Path, step: u64) -> PathBuf {
    out_dir.join(format!("ckpt-{step}"))
}

pub fn save_train_state(state: &TrainState, cfg: &TrainConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    if let Some(mpf) = &state.mpf {
        ckpt::save_mpf(mpf, dir)?;
    }
    ckpt::save_detector(&state.detector, dir)?;
    ckpt::save_isp_surrogates(&state.surrogates, dir)?;
    let (m, v) = state.adam.moments();
    let mut entries = Vec::new();
    for (i, slot) in m.iter().enumerate() {
        if let Some(a) = slot {
            entries.push((format!("m.{i}"), a.clone()));
        }
    }
    for (i, slot) in v.iter().enumerate() {
        if let Some(a) = slot {
            entries.push((format!("v.{i}"), a.clone()));
        }
    }
    ckpt::write_blob(&dir.join("adam.bin"), &entries)?;
    let manifest = serde_json::json!({
        "step": state.step,
        "adam_t": state.adam.t,
        "mode": cfg.mode,
        "seed": cfg.seed,
        "n_momenta": m.len(),
    });
    fs::write(
        dir.join("train.manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    Ok(())
}

pub fn load_train_state(dir: &Path, cfg: &TrainConfig) -> Result<TrainState> {
    let text = fs::read_to_string(dir.join("train.manifest.json"))
        .map_err(|e| DrawError::Checkpoint(format!("missing train manifest: {e}")))?;
    let manifest: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| DrawError::Checkpoint(format!("bad train manifest: {e}")))?;
    let step = manifest["step"].as_u64().unwrap_or(0);
    let adam_t = manifest["adam_t"].as_u64().unwrap_or(0);
    let n_momenta = manifest["n_momenta"].as_u64().unwrap_or(0) as usize;

    let mpf = if dir.join("mpf.manifest.json").exists() {
        Some(ckpt::load_mpf(dir)?)
    } else {
        None
    };
    let detector = ckpt::load_detector(dir)?;
    let surrogates = ckpt::load_isp_surrogates(dir)?;
    let mut adam = Adam::new(cfg.lr as f32, n_momenta);
    let entries = ckpt::read_blob(&dir.join("adam.bin"))?;
    let mut m = vec![None; n_momenta];
    let mut v = vec![None; n_momenta];
    for (name, arr) in entries {
        if let Some(idx) = name.strip_prefix("m.") {
            let idx: usize = idx
                .parse()
                .map_err(|_| DrawError::Checkpoint("bad moment name".into()))?;
            m[idx] = Some(arr);
        } else if let Some(idx) = name.strip_prefix("v.") {
            let idx: usize = idx
                .parse()
                .map_err(|_| DrawError::Checkpoint("bad moment name".into()))?;
            v[idx] = Some(arr);
        }
    }
    adam.restore_moments(adam_t, m, v);
    Ok(TrainState {
        mpf,
        detector,
        surrogates,
        adam,
        step,
    })
}

pub struct TrainOutput {
    pub final_ckpt: PathBuf,
    pub metrics_path: PathBuf,
}

/// Full training loop: pretrained surrogates, `cfg.steps` optimizer steps,
/// per-step metrics appended to `metrics.jsonl`, checkpoints under
/// `out_dir/ckpt-<step>`.
pub fn train(
    cfg: &TrainConfig,
    mpf_cfg: &MpfConfig,
    isp_params: &IspParams,
    attack_cfg: &AttackConfig,
    dataset: &[RawImage],
    out_dir: &Path,
    cache_dir: Option<&Path>,
) -> Result<TrainOutput> {
    cfg.validate()?;
    attack_cfg.validate()?;
    if dataset.len() < cfg.batch_size.max(8) {
        return Err(DrawError::EmptyDataset(format!(
            "training needs at least {} raws, got {}",
            cfg.batch_size.max(8),
            dataset.len()
        )));
    }
    fs::create_dir_all(out_dir)?;
    let surrogates = prepare_surrogates(dataset, isp_params, cfg, cache_dir)?;
    let mut state = TrainState::new(cfg, mpf_cfg, surrogates)?;

    let metrics_path = out_dir.join("metrics.jsonl");
    let mut metrics_file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&metrics_path)?;

    while state.step < cfg.steps {
        let batch = draw_batch(dataset, cfg.batch_size, cfg.seed, state.step);
        let metrics = train_step(&mut state, &batch, cfg, isp_params, attack_cfg)?;
        writeln!(
            metrics_file,
            "{}",
            serde_json::to_string(&metrics).expect("metrics serialize")
        )?;
        if cfg.ckpt_every > 0 && state.step % cfg.ckpt_every == 0 {
            save_train_state(&state, cfg, &checkpoint_dir(out_dir, state.step))?;
        }
    }
    let final_dir = checkpoint_dir(out_dir, state.step);
    save_train_state(&state, cfg, &final_dir)?;
    Ok(TrainOutput {
        final_ckpt: final_dir,
        metrics_path,
    })
}

/// Deterministic without-replacement batch pick for a step.
pub fn draw_batch(dataset: &[RawImage], batch_size: usize, seed: u64, step: u64) -> Vec<RawImage> {
    let mut rng = stream(seed, "batch", step);
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    // partial Fisher-Yates
    for i in 0..batch_size.min(dataset.len()) {
        let j = rng.gen_range(i..indices.len());
        indices.swap(i, j);
    }
    indices
        .into_iter()
        .take(batch_size)
        .map(|i| dataset[i].clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::mosaic;
    use crate::synth;

    fn tiny_dataset(n: usize, size: usize, seed: u64) -> Vec<RawImage> {
        synth::corpus(n, size, size, seed)
            .iter()
            .map(|img| {
                crate::isp::synthesize_raw(img, &IspParams::default(), BayerPattern::Rggb)
                    .unwrap()
            })
            .collect()
    }

    fn tiny_cfg(mode: TrainMode, seed: u64) -> (TrainConfig, MpfConfig) {
        let cfg = TrainConfig {
            mode,
            batch_size: 2,
            steps: 2,
            seed,
            n_isp_surrogates: 1,
            isp_pretrain_steps: 30,
            ..TrainConfig::default()
        };
        let mpf = MpfConfig {
            c_f: 8,
            n_blocks: 1,
            ..MpfConfig::default()
        };
        (cfg, mpf)
    }

    #[test]
    fn loss_arithmetic_matches_paper_constants() {
        let w = TrainConfig::default().weights();
        let v = total_loss(0.1, 0.2, 0.5, 0.3, &w).unwrap();
        assert!((v - 1.213).abs() < 1e-12, "{v}");
        let w_rgb = TrainConfig {
            mode: TrainMode::RgbProtect,
            ..TrainConfig::default()
        }
        .weights();
        let v = total_loss(0.0, 0.2, 0.5, 0.3, &w_rgb).unwrap();
        assert!((v - 0.2065).abs() < 1e-12, "{v}");
        assert_eq!(total_loss(0.0, 0.0, 0.0, 0.0, &w).unwrap(), 0.0);
        assert!(total_loss(f64::NAN, 0.0, 0.0, 0.0, &w).is_err());
    }

    #[test]
    fn scaling_one_component_scales_its_contribution_exactly() {
        let w = TrainConfig::default().weights();
        let base = total_loss(0.1, 0.2, 0.5, 0.3, &w).unwrap();
        let bumped = total_loss(0.1, 0.2, 1.0, 0.3, &w).unwrap();
        assert!((bumped - base - w.gamma * 0.5).abs() < 1e-12);
    }

    #[test]
    fn step_zero_fidelity_is_exact_zero_in_draw_mode() {
        let dataset = tiny_dataset(8, 32, 100);
        let (mut cfg, mpf_cfg) = tiny_cfg(TrainMode::Draw, 5);
        cfg.gamma = 0.0;
        cfg.epsilon = 0.0;
        let surrogates = vec![LearnableIsp::new(1)];
        let mut state = TrainState::new(&cfg, &mpf_cfg, surrogates).unwrap();
        let batch = draw_batch(&dataset, 2, cfg.seed, 0);
        let m = train_step(
            &mut state,
            &batch,
            &cfg,
            &IspParams::default(),
            &AttackConfig::default(),
        )
        .unwrap();
        assert_eq!(m.l_raw, 0.0, "raw fidelity must be exactly zero at init");
        assert_eq!(m.l_rgb, 0.0, "rgb fidelity must be exactly zero at init");
        assert_eq!(m.total, 0.0);
    }

    #[test]
    fn robust_only_has_no_protection_params() {
        let dataset = tiny_dataset(8, 32, 101);
        let (cfg, mpf_cfg) = tiny_cfg(TrainMode::RobustOnly, 6);
        let surrogates = vec![LearnableIsp::new(2)];
        let mut state = TrainState::new(&cfg, &mpf_cfg, surrogates).unwrap();
        let batch = draw_batch(&dataset, 2, cfg.seed, 0);
        let m = train_step(
            &mut state,
            &batch,
            &cfg,
            &IspParams::default(),
            &AttackConfig::default(),
        )
        .unwrap();
        assert_eq!(m.p_params, 0);
        assert_eq!(m.l_raw, 0.0);
    }

    #[test]
    fn protection_gradient_reaches_p_through_the_bridge() {
        // with tamper and distortion active and omega < 1, the protection
        // network must receive a nonzero gradient
        let dataset = tiny_dataset(8, 32, 102);
        let (cfg, mpf_cfg) = tiny_cfg(TrainMode::Draw, 7);
        let surrogates = vec![LearnableIsp::new(3)];
        let mut state = TrainState::new(&cfg, &mpf_cfg, surrogates).unwrap();
        let before: Vec<_> = state
            .mpf
            .as_ref()
            .unwrap()
            .store
            .iter()
            .map(|(_, v)| v.clone())
            .collect();
        let batch = draw_batch(&dataset, 2, cfg.seed, 0);
        let _ = train_step(
            &mut state,
            &batch,
            &cfg,
            &IspParams::default(),
            &AttackConfig::default(),
        )
        .unwrap();
        let after = &state.mpf.as_ref().unwrap().store;
        let changed = before
            .iter()
            .enumerate()
            .any(|(i, b)| after.value(i) != b);
        assert!(changed, "P parameters did not move");
    }

    #[test]
    fn repeated_batch_overfit_smoke() {
        // one step should reduce the loss on a repeated fixed batch for most
        // seeds (detector-only mode keeps this test fast)
        let dataset = tiny_dataset(8, 32, 103);
        let mut wins = 0;
        for seed in 0..10u64 {
            let (mut cfg, mpf_cfg) = tiny_cfg(TrainMode::RobustOnly, seed);
            cfg.lr = 3e-4;
            let surrogates = vec![LearnableIsp::new(seed)];
            let mut state = TrainState::new(&cfg, &mpf_cfg, surrogates).unwrap();
            let batch = draw_batch(&dataset, 2, cfg.seed, 0);
            let m0 = train_step(
                &mut state,
                &batch,
                &cfg,
                &IspParams::default(),
                &AttackConfig::default(),
            )
            .unwrap();
            // replay the same step rng by resetting the counter
            state.step = 0;
            let m1 = train_step(
                &mut state,
                &batch,
                &cfg,
                &IspParams::default(),
                &AttackConfig::default(),
            )
            .unwrap();
            if m1.total < m0.total {
                wins += 1;
            }
        }
        assert!(wins >= 8, "loss decreased in only {wins}/10 seeds");
    }

    #[test]
    fn resume_reproduces_next_step_bit_exactly() {
        let dataset = tiny_dataset(8, 32, 104);
        let (cfg, mpf_cfg) = tiny_cfg(TrainMode::Draw, 11);
        let surrogates = vec![LearnableIsp::new(4)];
        let mut state = TrainState::new(&cfg, &mpf_cfg, surrogates).unwrap();
        let b0 = draw_batch(&dataset, 2, cfg.seed, 0);
        let _ = train_step(&mut state, &b0, &cfg, &IspParams::default(), &AttackConfig::default())
            .unwrap();

        let dir = tempfile::tempdir().unwrap();
        save_train_state(&state, &cfg, dir.path()).unwrap();
        let mut restored = load_train_state(dir.path(), &cfg).unwrap();
        assert_eq!(restored.step, state.step);

        let b1 = draw_batch(&dataset, 2, cfg.seed, state.step);
        let m_direct = train_step(
            &mut state,
            &b1,
            &cfg,
            &IspParams::default(),
            &AttackConfig::default(),
        )
        .unwrap();
        let m_resumed = train_step(
            &mut restored,
            &b1,
            &cfg,
            &IspParams::default(),
            &AttackConfig::default(),
        )
        .unwrap();
        assert_eq!(m_direct.total, m_resumed.total);
        assert_eq!(m_direct.l_dt, m_resumed.l_dt);
        assert_eq!(m_direct.grad_norm, m_resumed.grad_norm);
    }

    #[test]
    fn mosaic_of_protected_render_matches_spec_path() {
        // the protected raw is mosaic(P(demosaic(R))): check the plumbing via
        // the identity network (fresh P) on a real raw
        let dataset = tiny_dataset(8, 32, 105);
        let raw = &dataset[0];
        let mpf: MpfNet<f32> = MpfNet::new(
            MpfConfig {
                c_f: 8,
                n_blocks: 1,
                ..MpfConfig::default()
            },
            0,
        )
        .unwrap();
        let demo = crate::imaging::demosaic_bilinear(raw).unwrap();
        let protected = mpf.protect_image(&demo.data().to_owned()).unwrap();
        let protected_img = crate::imaging::RgbImage::from_data(protected).unwrap();
        let remosaic = mosaic(&protected_img, raw.pattern).unwrap();
        let err = remosaic
            .data()
            .iter()
            .zip(raw.data().iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(err < 1e-6, "identity protection must preserve the raw ({err})");
    }
}
