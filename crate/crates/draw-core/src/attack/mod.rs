//! Hybrid attack layer: tamper mask generation, tampering, color
//! adjustments, distortions, cropping, stochastic scheduling and the
//! stop-gradient bridge to real (quantized / codec-exact) attacks.
//!
//! Every attack run is described by a sampled [`AttackPlan`]. One tape-based
//! interpreter serves both training (gradients flowing, distortions bridged
//! to their real counterparts) and plain evaluation (constants-only tape),
//! so replaying a plan is bit-identical across both uses.

mod inpaint;
mod jpeg;
mod mask;

pub use inpaint::naive_inpaint;
pub use jpeg::{diff_jpeg, diff_jpeg_arr, mean_abs_diff, quant_table, quantize255, real_jpeg};
pub use mask::generate_freeform_mask;

use ndarray::{Array2, Array3, IxDyn};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DrawError, Result};
use crate::imaging::{BinaryMask, RgbImage};
use crate::rng::stream;
use crate::tensor::{Arr, Scalar, Tape, Var};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackConfig {
    pub p_activate: f64,
    pub area_range: (f64, f64),
    pub rescale_range: (f64, f64),
    pub median_kernels: Vec<usize>,
    pub awgn_sigma_range: (f64, f64),
    pub gblur_kernels: Vec<usize>,
    pub gblur_sigma_range: (f64, f64),
    pub jpeg_quality_range: (u8, u8),
    pub hue_range: (f64, f64),
    pub contrast_range: (f64, f64),
    pub saturation_range: (f64, f64),
    pub brightness_range: (f64, f64),
    pub crop_survival_range: (f64, f64),
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            p_activate: 0.85,
            area_range: (0.0, 0.3),
            rescale_range: (0.5, 1.5),
            median_kernels: vec![3, 5],
            awgn_sigma_range: (0.0, 3.0 / 255.0),
            gblur_kernels: vec![3, 5],
            gblur_sigma_range: (0.8, 1.6),
            jpeg_quality_range: (50, 95),
            hue_range: (-0.05, 0.05),
            contrast_range: (0.7, 1.5),
            saturation_range: (0.7, 1.5),
            brightness_range: (0.7, 1.5),
            crop_survival_range: (0.49, 1.0),
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_activate) {
            return Err(DrawError::InvalidArgument(
                "p_activate must lie in [0,1]".into(),
            ));
        }
        let ranges = [
            ("area", self.area_range),
            ("rescale", self.rescale_range),
            ("awgn_sigma", self.awgn_sigma_range),
            ("gblur_sigma", self.gblur_sigma_range),
            ("hue", self.hue_range),
            ("contrast", self.contrast_range),
            ("saturation", self.saturation_range),
            ("brightness", self.brightness_range),
            ("crop_survival", self.crop_survival_range),
        ];
        for (name, (lo, hi)) in ranges {
            if lo > hi || !lo.is_finite() || !hi.is_finite() {
                return Err(DrawError::InvalidArgument(format!(
                    "{name} range [{lo}, {hi}] is not well ordered"
                )));
            }
        }
        if self.jpeg_quality_range.0 == 0
            || self.jpeg_quality_range.1 > 100
            || self.jpeg_quality_range.0 > self.jpeg_quality_range.1
        {
            return Err(DrawError::InvalidArgument(
                "jpeg quality range must lie within 1..=100".into(),
            ));
        }
        if self.crop_survival_range.0 < 0.49 - 1e-9 || self.crop_survival_range.1 > 1.0 {
            return Err(DrawError::InvalidArgument(
                "crop survival must lie in [0.49, 1]".into(),
            ));
        }
        if self.median_kernels.iter().any(|&k| k % 2 == 0 || k < 3)
            || self.gblur_kernels.iter().any(|&k| k % 2 == 0 || k < 3)
        {
            return Err(DrawError::InvalidArgument(
                "blur kernels must be odd and >= 3".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TamperKind {
    Splice,
    CoincidentSplice,
    CopyMove,
    Inpaint,
}

pub const TAMPER_ROTATION: [TamperKind; 4] = [
    TamperKind::Splice,
    TamperKind::CoincidentSplice,
    TamperKind::CopyMove,
    TamperKind::Inpaint,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorKind {
    Hue,
    Contrast,
    Saturation,
    Brightness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DistortPlan {
    Rescale { rate: f64 },
    MedianBlur { k: usize },
    GaussianBlur { k: usize, sigma: f64 },
    Awgn { sigma: f64, noise_key: u64 },
    Jpeg { quality: u8 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "module")]
pub enum ModulePlan {
    Tamper {
        kind: TamperKind,
        source_index: usize,
        offset: (usize, usize),
    },
    Color {
        kind: ColorKind,
        factor: f64,
    },
    Distort(DistortPlan),
    Crop {
        y0: usize,
        x0: usize,
        ch: usize,
        cw: usize,
        survival: f64,
    },
}

/// Everything needed to replay one attack run deterministically.
#[derive(Debug, Clone)]
pub struct AttackPlan {
    pub modules: Vec<ModulePlan>,
    pub tampered: bool,
    pub mask: Option<Array2<f32>>,
}

impl AttackPlan {
    pub fn provenance(&self) -> serde_json::Value {
        serde_json::json!({
            "tampered": self.tampered,
            "mask_area": self.mask.as_ref().map(|m| f64::from(m.sum()) / m.len() as f64),
            "modules": self.modules,
        })
    }
}

/// Attacked image plus ground truth and provenance.
#[derive(Debug, Clone)]
pub struct AttackedSample {
    pub image: RgbImage,
    pub gt_mask: BinaryMask,
    pub tampered: bool,
    pub applied: Vec<ModulePlan>,
}

/// Samples a plan. `tamper_round` drives the even rotation over tamper kinds;
/// `force_tamper` overrides the stochastic activation of the tamper module
/// (the trainer uses it to split batches half/half).
#[allow(clippy::too_many_arguments)]
pub fn sample_plan(
    cfg: &AttackConfig,
    h: usize,
    w: usize,
    protected_pool_len: usize,
    splice_pool_len: usize,
    tamper_round: u64,
    force_tamper: Option<bool>,
    rng: &mut impl Rng,
) -> Result<AttackPlan> {
    cfg.validate()?;
    let tamper_on = force_tamper.unwrap_or_else(|| rng.gen_bool(cfg.p_activate));
    let color_on = rng.gen_bool(cfg.p_activate);
    let distort_on = rng.gen_bool(cfg.p_activate);
    let crop_on = rng.gen_bool(cfg.p_activate);

    let mut mask = None;
    let mut modules = Vec::new();
    if tamper_on {
        let kind = TAMPER_ROTATION[(tamper_round % 4) as usize];
        let kind = match kind {
            TamperKind::CoincidentSplice if protected_pool_len == 0 => TamperKind::CopyMove,
            TamperKind::Splice if splice_pool_len == 0 => TamperKind::CopyMove,
            other => other,
        };
        let m = mask::generate_freeform_mask(h, w, cfg.area_range, rng)?;
        let source_index = match kind {
            TamperKind::Splice => rng.gen_range(0..splice_pool_len.max(1)),
            TamperKind::CoincidentSplice => rng.gen_range(0..protected_pool_len.max(1)),
            _ => 0,
        };
        let max_off = (h / 2).max(17);
        let offset = (
            rng.gen_range(16..max_off),
            rng.gen_range(16..(w / 2).max(17)),
        );
        mask = Some(m.into_data());
        modules.push(ModulePlan::Tamper {
            kind,
            source_index,
            offset,
        });
    }
    if color_on {
        let kind = *[
            ColorKind::Hue,
            ColorKind::Contrast,
            ColorKind::Saturation,
            ColorKind::Brightness,
        ]
        .choose(rng)
        .expect("non-empty");
        let factor = match kind {
            ColorKind::Hue => rng.gen_range(cfg.hue_range.0..=cfg.hue_range.1),
            ColorKind::Contrast => rng.gen_range(cfg.contrast_range.0..=cfg.contrast_range.1),
            ColorKind::Saturation => {
                rng.gen_range(cfg.saturation_range.0..=cfg.saturation_range.1)
            }
            ColorKind::Brightness => {
                rng.gen_range(cfg.brightness_range.0..=cfg.brightness_range.1)
            }
        };
        modules.push(ModulePlan::Color { kind, factor });
    }
    if distort_on {
        let pick = rng.gen_range(0..5);
        let plan = match pick {
            0 => DistortPlan::Rescale {
                rate: rng.gen_range(cfg.rescale_range.0..=cfg.rescale_range.1),
            },
            1 => DistortPlan::MedianBlur {
                k: *cfg.median_kernels.choose(rng).expect("non-empty"),
            },
            2 => DistortPlan::GaussianBlur {
                k: *cfg.gblur_kernels.choose(rng).expect("non-empty"),
                sigma: rng.gen_range(cfg.gblur_sigma_range.0..=cfg.gblur_sigma_range.1),
            },
            3 => DistortPlan::Awgn {
                sigma: rng.gen_range(cfg.awgn_sigma_range.0..=cfg.awgn_sigma_range.1),
                noise_key: rng.gen(),
            },
            _ => DistortPlan::Jpeg {
                quality: rng
                    .gen_range(cfg.jpeg_quality_range.0..=cfg.jpeg_quality_range.1),
            },
        };
        modules.push(ModulePlan::Distort(plan));
    }
    if crop_on {
        let survival =
            rng.gen_range(cfg.crop_survival_range.0..=cfg.crop_survival_range.1);
        let f = survival.sqrt();
        let ch = ((h as f64 * f).round() as usize).clamp(8, h);
        let cw = ((w as f64 * f).round() as usize).clamp(8, w);
        let y0 = rng.gen_range(0..=h - ch);
        let x0 = rng.gen_range(0..=w - cw);
        modules.push(ModulePlan::Crop {
            y0,
            x0,
            ch,
            cw,
            survival,
        });
    }

    // uniformly random application order; crop stays last while a tamper
    // mask is in play so ground-truth bookkeeping needs only one transform
    modules.shuffle(rng);
    if tamper_on {
        if let Some(pos) = modules
            .iter()
            .position(|m| matches!(m, ModulePlan::Crop { .. }))
        {
            let crop = modules.remove(pos);
            modules.push(crop);
        }
    }

    Ok(AttackPlan {
        modules,
        tampered: tamper_on,
        mask,
    })
}

fn mask3<T: Scalar>(mask: &Array2<f32>, invert: bool) -> Arr<T> {
    let (h, w) = mask.dim();
    Arr::from_shape_fn(IxDyn(&[1, 3, h, w]), |ix| {
        let m = f64::from(mask[[ix[2], ix[3]]]);
        T::fromf64(if invert { 1.0 - m } else { m })
    })
}

fn as_f32_image<T: Scalar>(v: &Arr<T>) -> Array3<f32> {
    let v4 = v
        .view()
        .into_dimensionality::<ndarray::Ix4>()
        .expect("[1,3,H,W]");
    let (_, c, h, w) = v4.dim();
    Array3::from_shape_fn((c, h, w), |(ci, y, x)| v4[[0, ci, y, x]].tof64() as f32)
}

fn from_f32_image<T: Scalar>(img: &Array3<f32>) -> Arr<T> {
    let (c, h, w) = img.dim();
    Arr::from_shape_fn(IxDyn(&[1, c, h, w]), |ix| {
        T::fromf64(f64::from(img[[ix[1], ix[2], ix[3]]]))
    })
}

fn apply_syn_distort<T: Scalar>(tape: &Tape<T>, x: Var, plan: &DistortPlan) -> Result<Var> {
    let shape = tape.shape(x);
    let (h, w) = (shape[2], shape[3]);
    Ok(match plan {
        DistortPlan::Rescale { rate } => {
            let nh = ((h as f64 * rate).round() as usize).max(8);
            let nw = ((w as f64 * rate).round() as usize).max(8);
            let down = tape.resize_bilinear(x, nh, nw);
            tape.resize_bilinear(down, h, w)
        }
        DistortPlan::MedianBlur { k } => tape.median_blur(x, *k),
        DistortPlan::GaussianBlur { k, sigma } => tape.gaussian_blur(x, *k, *sigma),
        DistortPlan::Awgn { sigma, noise_key } => {
            let mut rng = stream(*noise_key, "awgn", 0);
            let noise = Arr::from_shape_fn(IxDyn(&shape), |_| {
                // Box-Muller
                let u1: f64 = rng.gen_range(1e-12..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                let g = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
                T::fromf64(g * sigma)
            });
            let y = tape.add_const(x, &noise);
            tape.clamp01(y)
        }
        DistortPlan::Jpeg { quality } => diff_jpeg(tape, x, *quality)?,
    })
}

/// Forward value of the real-world counterpart: the current (detached) image
/// is quantized to 8 bits, attacked with reference routines (the actual codec
/// for JPEG), and re-quantized.
fn real_distort_value(plan: &DistortPlan, input: &Array3<f32>) -> Result<Array3<f32>> {
    let q_in = quantize255(input);
    let out = match plan {
        DistortPlan::Jpeg { quality } => real_jpeg(&q_in, *quality)?,
        other => {
            let tape: Tape<f32> = Tape::new();
            let x = tape.leaf(from_f32_image::<f32>(&q_in), false);
            let y = apply_syn_distort(&tape, x, other)?;
            let y = tape.clamp01(y);
            quantize255(&as_f32_image(&tape.value(y)))
        }
    };
    Ok(out)
}

fn nearest_resize_mask(mask: &Array2<f32>, oh: usize, ow: usize) -> Array2<f32> {
    let (h, w) = mask.dim();
    Array2::from_shape_fn((oh, ow), |(y, x)| {
        let sy = (((y as f64 + 0.5) * h as f64 / oh as f64 - 0.5).round())
            .clamp(0.0, h as f64 - 1.0) as usize;
        let sx = (((x as f64 + 0.5) * w as f64 / ow as f64 - 0.5).round())
            .clamp(0.0, w as f64 - 1.0) as usize;
        mask[[sy, sx]]
    })
}

/// Applies one module to a tape variable, tracking the ground-truth mask.
fn apply_module<T: Scalar>(
    tape: &Tape<T>,
    cur: Var,
    gt: &mut Array2<f32>,
    module: &ModulePlan,
    plan_mask: Option<&Array2<f32>>,
    protected_pool: &[Var],
    splice_pool: &[Array3<f32>],
) -> Result<Var> {
    Ok(match module {
        ModulePlan::Tamper {
            kind,
            source_index,
            offset,
        } => {
            let m = plan_mask.ok_or_else(|| {
                DrawError::InvalidArgument("tamper module without a mask".into())
            })?;
            let source = match kind {
                TamperKind::Splice => {
                    let src = splice_pool.get(*source_index).ok_or_else(|| {
                        DrawError::InvalidArgument("splice source out of range".into())
                    })?;
                    tape.leaf(from_f32_image::<T>(src), false)
                }
                TamperKind::CoincidentSplice => *protected_pool
                    .get(*source_index)
                    .ok_or_else(|| {
                        DrawError::InvalidArgument("protected pool index out of range".into())
                    })?,
                TamperKind::CopyMove => tape.circ_shift(cur, offset.0, offset.1),
                TamperKind::Inpaint => {
                    let img = as_f32_image(&tape.value(cur));
                    let filled = naive_inpaint(&img, m)?;
                    tape.leaf(from_f32_image::<T>(&filled), false)
                }
            };
            let keep = tape.mul_const(cur, &mask3::<T>(m, true));
            let put = tape.mul_const(source, &mask3::<T>(m, false));
            *gt = m.clone();
            tape.add(keep, put)
        }
        ModulePlan::Color { kind, factor } => {
            let y = match kind {
                ColorKind::Hue => tape.hue_rotate(cur, *factor),
                ColorKind::Contrast => tape.contrast_adjust(cur, *factor),
                ColorKind::Saturation => tape.saturation_adjust(cur, *factor),
                ColorKind::Brightness => tape.scale(cur, *factor as f32),
            };
            tape.clamp01(y)
        }
        ModulePlan::Distort(d) => {
            let syn = apply_syn_distort(tape, cur, d)?;
            let syn = tape.clamp01(syn);
            let real = real_distort_value(d, &as_f32_image(&tape.value(cur)))?;
            tape.bridge(syn, from_f32_image::<T>(&real))
        }
        ModulePlan::Crop {
            y0,
            x0,
            ch,
            cw,
            survival: _,
        } => {
            let shape = tape.shape(cur);
            let (h, w) = (shape[2], shape[3]);
            let cropped = tape.crop_spatial(cur, *y0, *x0, *ch, *cw);
            let resized = tape.resize_bilinear(cropped, h, w);
            let gcrop = Array2::from_shape_fn((*ch, *cw), |(y, x)| gt[[y0 + y, x0 + x]]);
            *gt = nearest_resize_mask(&gcrop, h, w);
            resized
        }
    })
}

/// Interprets a plan on the tape. Returns the attacked variable (forward
/// value 8-bit quantized via the final bridge) and the transformed ground
/// truth. `protected_pool` feeds coincident splicing, `splice_pool` ordinary
/// splicing.
pub fn apply_plan<T: Scalar>(
    tape: &Tape<T>,
    img: Var,
    protected_pool: &[Var],
    splice_pool: &[Array3<f32>],
    plan: &AttackPlan,
) -> Result<(Var, Array2<f32>)> {
    let shape = tape.shape(img);
    if shape.len() != 4 || shape[0] != 1 || shape[1] != 3 {
        return Err(DrawError::Dimension(
            "attack pipeline operates on [1,3,H,W] samples".into(),
        ));
    }
    let mut gt = Array2::zeros((shape[2], shape[3]));
    let mut cur = img;
    for module in &plan.modules {
        cur = apply_module(
            tape,
            cur,
            &mut gt,
            module,
            plan.mask.as_ref(),
            protected_pool,
            splice_pool,
        )?;
    }
    // the delivered image is always 8-bit; backward is the identity
    let clamped = tape.clamp01(cur);
    let quantized = quantize255(&as_f32_image(&tape.value(clamped)));
    let out = tape.bridge(clamped, from_f32_image::<T>(&quantized));
    Ok((out, gt))
}

/// Plain (non-training) pipeline on an image: samples a plan from
/// `(seed, index)` and replays it on a constants-only tape.
pub fn attack_pipeline(
    img: &RgbImage,
    protected_pool: &[RgbImage],
    splice_pool: &[RgbImage],
    cfg: &AttackConfig,
    seed: u64,
    index: u64,
    force_tamper: Option<bool>,
) -> Result<AttackedSample> {
    let mut rng = stream(seed, "attack-plan", index);
    let plan = sample_plan(
        cfg,
        img.height(),
        img.width(),
        protected_pool.len(),
        splice_pool.len(),
        index,
        force_tamper,
        &mut rng,
    )?;
    attack_with_plan(img, protected_pool, splice_pool, &plan)
}

/// Replays an explicit plan (used by the CLI `tamper` command and tests).
pub fn attack_with_plan(
    img: &RgbImage,
    protected_pool: &[RgbImage],
    splice_pool: &[RgbImage],
    plan: &AttackPlan,
) -> Result<AttackedSample> {
    let tape: Tape<f32> = Tape::new();
    let x = tape.leaf(from_f32_image::<f32>(&img.data().to_owned()), false);
    let pool_vars: Vec<Var> = protected_pool
        .iter()
        .map(|p| tape.leaf(from_f32_image::<f32>(&p.data().to_owned()), false))
        .collect();
    let splice_arrays: Vec<Array3<f32>> =
        splice_pool.iter().map(|p| p.data().to_owned()).collect();
    let (out, gt) = apply_plan(&tape, x, &pool_vars, &splice_arrays, plan)?;
    let image = RgbImage::from_data(as_f32_image(&tape.value(out)))?;
    let tampered = plan.tampered && gt.iter().any(|&v| v > 0.0);
    Ok(AttackedSample {
        image,
        gt_mask: BinaryMask::from_data(gt)?,
        tampered,
        applied: plan.modules.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::smooth_rgb;

    fn quantized_image(seed: u64) -> RgbImage {
        RgbImage::from_data(quantize255(&smooth_rgb(64, 64, seed))).unwrap()
    }

    fn off_config() -> AttackConfig {
        AttackConfig {
            p_activate: 0.0,
            ..AttackConfig::default()
        }
    }

    #[test]
    fn all_modules_off_is_identity_on_quantized_input() {
        let img = quantized_image(1);
        let s = attack_pipeline(&img, &[], &[], &off_config(), 5, 0, None).unwrap();
        assert_eq!(s.image.data(), img.data());
        assert!(!s.tampered);
        assert!(!s.gt_mask.any());
    }

    #[test]
    fn tamper_only_satisfies_compositing_identity() {
        let img = quantized_image(2);
        let src = quantized_image(3);
        // rotation index 0 = splice
        let s = attack_pipeline(&img, &[], &[src.clone()], &off_config(), 9, 0, Some(true))
            .unwrap();
        assert!(s.tampered);
        let m = s.gt_mask.data();
        for c in 0..3 {
            for y in 0..64 {
                for x in 0..64 {
                    let expect = if m[[y, x]] >= 0.5 {
                        src.data()[[c, y, x]]
                    } else {
                        img.data()[[c, y, x]]
                    };
                    assert_eq!(s.image.data()[[c, y, x]], expect, "at {c},{y},{x}");
                }
            }
        }
    }

    #[test]
    fn copy_move_uses_circular_shift_of_itself() {
        let img = quantized_image(4);
        // rotation index 2 = copy-move
        let s = attack_pipeline(&img, &[], &[], &off_config(), 11, 2, Some(true)).unwrap();
        let offset = s
            .applied
            .iter()
            .find_map(|m| match m {
                ModulePlan::Tamper {
                    kind: TamperKind::CopyMove,
                    offset,
                    ..
                } => Some(*offset),
                _ => None,
            })
            .expect("copy-move fired");
        let m = s.gt_mask.data();
        for y in 0..64 {
            for x in 0..64 {
                if m[[y, x]] >= 0.5 {
                    for c in 0..3 {
                        let sy = (y + 64 - offset.0 % 64) % 64;
                        let sx = (x + 64 - offset.1 % 64) % 64;
                        assert_eq!(s.image.data()[[c, y, x]], img.data()[[c, sy, sx]]);
                    }
                }
            }
        }
    }

    #[test]
    fn deterministic_replay_bytes() {
        let img = quantized_image(5);
        let pool = vec![quantized_image(6)];
        let spl = vec![quantized_image(7)];
        let cfg = AttackConfig::default();
        let a = attack_pipeline(&img, &pool, &spl, &cfg, 42, 3, None).unwrap();
        let b = attack_pipeline(&img, &pool, &spl, &cfg, 42, 3, None).unwrap();
        assert_eq!(a.image.data(), b.image.data());
        assert_eq!(a.gt_mask.data(), b.gt_mask.data());
        assert_eq!(a.applied, b.applied);
    }

    #[test]
    fn activation_rates_match_config() {
        let cfg = AttackConfig::default();
        let mut counts = [0usize; 4]; // tamper, color, distort, crop
        let n = 1000;
        for i in 0..n {
            let mut rng = stream(77, "attack-plan", i);
            let plan = sample_plan(&cfg, 64, 64, 1, 1, i, None, &mut rng).unwrap();
            if plan.tampered {
                counts[0] += 1;
            }
            for m in &plan.modules {
                match m {
                    ModulePlan::Color { .. } => counts[1] += 1,
                    ModulePlan::Distort(_) => counts[2] += 1,
                    ModulePlan::Crop { .. } => counts[3] += 1,
                    ModulePlan::Tamper { .. } => {}
                }
            }
        }
        for (i, c) in counts.iter().enumerate() {
            let rate = *c as f64 / n as f64;
            assert!(
                (0.82..=0.88).contains(&rate),
                "module {i} activation rate {rate}"
            );
        }
    }

    #[test]
    fn distort_identities() {
        let img = quantized_image(8);
        let tape: Tape<f32> = Tape::new();
        let x = tape.leaf(from_f32_image::<f32>(&img.data().to_owned()), false);
        // rescale at rate 1 is the identity
        let y = apply_syn_distort(&tape, x, &DistortPlan::Rescale { rate: 1.0 }).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
        // awgn with sigma 0 is the identity
        let y = apply_syn_distort(
            &tape,
            x,
            &DistortPlan::Awgn {
                sigma: 0.0,
                noise_key: 1,
            },
        )
        .unwrap();
        assert_eq!(tape.value(y), tape.value(x));
    }

    #[test]
    fn outputs_stay_in_unit_range_and_shape() {
        let img = quantized_image(9);
        let pool = vec![quantized_image(10)];
        let spl = vec![quantized_image(11)];
        let cfg = AttackConfig::default();
        for i in 0..24 {
            let s = attack_pipeline(&img, &pool, &spl, &cfg, 1234, i, None).unwrap();
            assert_eq!(s.image.height(), 64);
            assert_eq!(s.image.width(), 64);
            assert!(s
                .image
                .data()
                .iter()
                .all(|&v| (0.0..=1.0).contains(&v)));
            assert_eq!(s.tampered, s.gt_mask.any());
        }
    }

    #[test]
    fn crop_survival_one_is_identity() {
        let img = quantized_image(12);
        let plan = AttackPlan {
            modules: vec![ModulePlan::Crop {
                y0: 0,
                x0: 0,
                ch: 64,
                cw: 64,
                survival: 1.0,
            }],
            tampered: false,
            mask: None,
        };
        let s = attack_with_plan(&img, &[], &[], &plan).unwrap();
        assert_eq!(s.image.data(), img.data());
    }

    #[test]
    fn crop_scales_mask_area_by_inverse_survival() {
        let img = quantized_image(13);
        // build a tampered plan with a central square mask fully inside crop
        let mut mask = Array2::zeros((64, 64));
        for y in 24..40 {
            for x in 24..40 {
                mask[[y, x]] = 1.0;
            }
        }
        let survival: f64 = 0.64;
        let plan = AttackPlan {
            modules: vec![
                ModulePlan::Tamper {
                    kind: TamperKind::CopyMove,
                    source_index: 0,
                    offset: (16, 16),
                },
                ModulePlan::Crop {
                    y0: 6,
                    x0: 6,
                    ch: 51,
                    cw: 51,
                    survival,
                },
            ],
            tampered: true,
            mask: Some(mask.clone()),
        };
        let s = attack_with_plan(&img, &[], &[], &plan).unwrap();
        let orig_area = f64::from(mask.sum()) / (64.0 * 64.0);
        let got = s.gt_mask.area();
        let expect = orig_area * (64.0 * 64.0) / (51.0 * 51.0);
        assert!(
            (got - expect).abs() < 0.02 * expect + 0.003,
            "area {got} vs {expect}"
        );
    }

    #[test]
    fn tamper_then_crop_keeps_mask_aligned() {
        // compositing before crop equals compositing after crop on the
        // cropped grid when both use nearest lookups
        let img = quantized_image(14);
        let src = quantized_image(15);
        let mut mask = Array2::zeros((64, 64));
        for y in 10..30 {
            for x in 20..50 {
                mask[[y, x]] = 1.0;
            }
        }
        let plan = AttackPlan {
            modules: vec![
                ModulePlan::Tamper {
                    kind: TamperKind::Splice,
                    source_index: 0,
                    offset: (16, 16),
                },
                ModulePlan::Crop {
                    y0: 8,
                    x0: 4,
                    ch: 48,
                    cw: 48,
                    survival: 0.5625,
                },
            ],
            tampered: true,
            mask: Some(mask),
        };
        let s = attack_with_plan(&img, &[], &[src.clone()], &plan).unwrap();
        // wherever the resized gt mask is on, the nearest source pixel in the
        // crop window must come from the splice source
        let m = s.gt_mask.data();
        let mut checked = 0;
        for y in 0..64 {
            for x in 0..64 {
                let sy = ((y as f64 + 0.5) * 48.0 / 64.0 - 0.5).round().clamp(0.0, 47.0) as usize;
                let sx = ((x as f64 + 0.5) * 48.0 / 64.0 - 0.5).round().clamp(0.0, 47.0) as usize;
                // strict interior to avoid bilinear blending across the seam
                let interior = (2..46).contains(&sy) && (2..46).contains(&sx);
                if m[[y, x]] >= 0.5 && interior {
                    checked += 1;
                }
            }
        }
        assert!(checked > 100, "mask survived the crop ({checked} px)");
        assert!(s.tampered);
    }

    #[test]
    fn real_bridge_quantize_forward_and_identity_backward() {
        let tape: Tape<f64> = Tape::new();
        // values chosen away from exact half-ulp quantization boundaries
        let x = Arr::from_shape_fn(IxDyn(&[1, 3, 8, 8]), |ix| {
            ((ix[1] * 64 + ix[2] * 8 + ix[3]) as f64 * 0.004 + 0.0007).min(1.0)
        });
        let v = tape.leaf(x.clone(), true);
        let q = quantize255(&as_f32_image(&x));
        let expected = from_f32_image::<f64>(&q);
        let out = tape.bridge(v, expected.clone());
        // forward equals the 8-bit-quantized image exactly
        assert_eq!(tape.value(out), expected);
        for (a, b) in expected.iter().zip(x.iter()) {
            assert!((a - (b * 255.0).round() / 255.0).abs() < 1e-3);
        }
        // backward is the identity Jacobian
        let loss = tape.sum_all(out);
        let grads = tape.backward(loss);
        assert!(grads[v.0]
            .as_ref()
            .unwrap()
            .iter()
            .all(|&g| (g - 1.0).abs() < 1e-12));
    }

    #[test]
    fn jpeg_bridge_forward_equals_codec_round_trip() {
        let img = quantized_image(16);
        let plan = AttackPlan {
            modules: vec![ModulePlan::Distort(DistortPlan::Jpeg { quality: 80 })],
            tampered: false,
            mask: None,
        };
        let s = attack_with_plan(&img, &[], &[], &plan).unwrap();
        let direct = real_jpeg(&img.data().to_owned(), 80).unwrap();
        let expect = quantize255(&direct);
        assert_eq!(s.image.data().to_owned(), expect);
    }
}
