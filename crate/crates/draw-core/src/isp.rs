//! Conventional ISP pipeline, its deterministic inverse, learnable ISP
//! surrogates and the mixed (stop-gradient) render.

use ndarray::{Array2, Array3, ArrayView3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DrawError, Result};
use crate::imaging::{demosaic_plane, mosaic_plane, BayerPattern, RawImage, RgbImage};
use crate::nn::{Conv2d, Init, ParamStore};
use crate::rng::stream;
use crate::tensor::{Tape, Var};

/// Transfer function applied as the last conventional-ISP stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "exponent")]
pub enum Gamma {
    Srgb,
    Power(f64),
}

impl Gamma {
    pub fn encode(self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match self {
            Gamma::Srgb => {
                if x <= 0.0031308 {
                    12.92 * x
                } else {
                    1.055 * x.powf(1.0 / 2.4) - 0.055
                }
            }
            Gamma::Power(g) => x.powf(1.0 / g),
        }
    }

    pub fn decode(self, y: f64) -> f64 {
        let y = y.clamp(0.0, 1.0);
        match self {
            Gamma::Srgb => {
                if y <= 0.04045 {
                    y / 12.92
                } else {
                    ((y + 0.055) / 1.055).powf(2.4)
                }
            }
            Gamma::Power(g) => y.powf(g),
        }
    }
}

/// White-balance gains, color-correction matrix and transfer function.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IspParams {
    pub wb_gains: [f64; 3],
    /// Rows sum to 1 (white-point preserving).
    pub ccm: [[f64; 3]; 3],
    pub gamma: Gamma,
}

impl Default for IspParams {
    fn default() -> Self {
        // Fixed desk constants: warm white balance and a mild row-normalized
        // color matrix, sRGB transfer.
        Self {
            wb_gains: [2.0, 1.0, 1.6],
            ccm: [[0.9, 0.075, 0.025], [0.05, 0.9, 0.05], [0.025, 0.075, 0.9]],
            gamma: Gamma::Srgb,
        }
    }
}

impl IspParams {
    pub fn identity() -> Self {
        Self {
            wb_gains: [1.0, 1.0, 1.0],
            ccm: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            gamma: Gamma::Power(1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.wb_gains.iter().any(|&g| g <= 0.0 || !g.is_finite()) {
            return Err(DrawError::InvalidArgument(
                "white-balance gains must be positive".into(),
            ));
        }
        for row in &self.ccm {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-6 {
                return Err(DrawError::InvalidArgument(format!(
                    "ccm rows must sum to 1, got {s}"
                )));
            }
        }
        if let Gamma::Power(g) = self.gamma {
            if g <= 0.0 {
                return Err(DrawError::InvalidArgument("gamma exponent must be > 0".into()));
            }
        }
        Ok(())
    }

    /// "Unseen pipeline" evaluation variant: white balance scaled by up to
    /// +/-20% and the transfer exponent by +/-10%.
    pub fn perturbed(&self, rng: &mut impl Rng) -> Self {
        let mut p = self.clone();
        for g in &mut p.wb_gains {
            *g *= 1.0 + rng.gen_range(-0.2..=0.2);
        }
        p.gamma = match p.gamma {
            // sRGB is approximately a 2.2 power curve; perturb around that.
            Gamma::Srgb => Gamma::Power(2.2 * (1.0 + rng.gen_range(-0.1..=0.1))),
            Gamma::Power(g) => Gamma::Power(g * (1.0 + rng.gen_range(-0.1..=0.1))),
        };
        p
    }

    fn inverse_ccm(&self) -> Result<[[f64; 3]; 3]> {
        let m = &self.ccm;
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        if det.abs() < 1e-12 {
            return Err(DrawError::SingularMatrix);
        }
        let inv = [
            [
                (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det,
                (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det,
                (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det,
            ],
            [
                (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det,
                (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det,
                (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det,
            ],
            [
                (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det,
                (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det,
                (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det,
            ],
        ];
        Ok(inv)
    }
}

/// White balance -> bilinear demosaic -> color matrix -> transfer -> clamp.
pub fn conventional_isp(raw: &RawImage, params: &IspParams) -> Result<RgbImage> {
    params.validate()?;
    let rgb = conventional_isp_plane(raw.data().view(), raw.pattern, params);
    RgbImage::from_data(rgb)
}

/// Conventional pipeline on a bare plane; output is clamped but unvalidated.
pub fn conventional_isp_plane(
    raw: ndarray::ArrayView2<'_, f32>,
    pattern: BayerPattern,
    params: &IspParams,
) -> Array3<f32> {
    let (h, w) = raw.dim();
    let mut balanced = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let g = params.wb_gains[pattern.channel_at(y, x)];
            balanced[[y, x]] = (f64::from(raw[[y, x]]) * g).min(1.0) as f32;
        }
    }
    let rgb = demosaic_plane(balanced.view(), pattern);
    let mut out = Array3::zeros((3, h, w));
    for y in 0..h {
        for x in 0..w {
            let v = [
                f64::from(rgb[[0, y, x]]),
                f64::from(rgb[[1, y, x]]),
                f64::from(rgb[[2, y, x]]),
            ];
            for c in 0..3 {
                let m = &params.ccm[c];
                let lin = (m[0] * v[0] + m[1] * v[1] + m[2] * v[2]).clamp(0.0, 1.0);
                out[[c, y, x]] = params.gamma.encode(lin).clamp(0.0, 1.0) as f32;
            }
        }
    }
    out
}

/// Deterministic inverse of [`conventional_isp`]: inverse transfer, inverse
/// color matrix, inverse gains, clamp, then mosaic.
pub fn synthesize_raw(rgb: &RgbImage, params: &IspParams, pattern: BayerPattern) -> Result<RawImage> {
    params.validate()?;
    let inv_ccm = params.inverse_ccm()?;
    let data = rgb.data();
    let (_, h, w) = data.dim();
    let mut linear = Array3::zeros((3, h, w));
    for y in 0..h {
        for x in 0..w {
            let v = [
                params.gamma.decode(f64::from(data[[0, y, x]])),
                params.gamma.decode(f64::from(data[[1, y, x]])),
                params.gamma.decode(f64::from(data[[2, y, x]])),
            ];
            for c in 0..3 {
                let m = &inv_ccm[c];
                let lin = m[0] * v[0] + m[1] * v[1] + m[2] * v[2];
                linear[[c, y, x]] = (lin / params.wb_gains[c]).clamp(0.0, 1.0) as f32;
            }
        }
    }
    let plane = mosaic_plane(linear.view(), pattern);
    RawImage::from_data(plane, pattern, 0, 65535)
}

/// Compact learnable refiner on top of the demosaiced image, standing in for
/// network-based raw-to-RGB rendering: 3 -> 16 -> 16 -> 3 with 3x3 kernels and
/// GELU, residual on the demosaiced input. The last layer starts at zero so an
/// untrained surrogate renders exactly the demosaiced image.
#[derive(Debug, Clone)]
pub struct LearnableIsp {
    pub store: ParamStore<f32>,
    conv1: Conv2d,
    conv2: Conv2d,
    conv3: Conv2d,
}

impl LearnableIsp {
    pub fn new(seed: u64) -> Self {
        let mut store = ParamStore::new();
        let mut rng = stream(seed, "isp-surrogate", 0);
        let conv1 = Conv2d::new(&mut store, "isp.c1", 3, 16, 3, 1, 1, Init::Kaiming, &mut rng);
        let conv2 = Conv2d::new(&mut store, "isp.c2", 16, 16, 3, 1, 1, Init::Kaiming, &mut rng);
        let conv3 = Conv2d::new(&mut store, "isp.c3", 16, 3, 3, 1, 1, Init::Zeros, &mut rng);
        Self {
            store,
            conv1,
            conv2,
            conv3,
        }
    }

    /// Forward through the refiner given an already-demosaiced `[N,3,H,W]`
    /// input; clamps at the layer boundary only.
    pub fn refine(&self, tape: &Tape<f32>, params: &[Var], demosaiced: Var) -> Var {
        let x = self.conv1.forward(tape, params, demosaiced);
        let x = tape.gelu(x);
        let x = self.conv2.forward(tape, params, x);
        let x = tape.gelu(x);
        let x = self.conv3.forward(tape, params, x);
        let y = tape.add(demosaiced, x);
        tape.clamp01(y)
    }

    /// Non-autodiff convenience render of a single raw plane.
    pub fn render(&self, raw: &RawImage) -> Array3<f32> {
        let demo = demosaic_plane(raw.data(), raw.pattern);
        let (c, h, w) = demo.dim();
        let tape = Tape::new();
        let params = self.store.lift_constants(&tape);
        let x = tape.leaf(demo.into_shape_with_order((1, c, h, w)).unwrap().into_dyn(), false);
        let y = self.refine(&tape, &params, x);
        let out = tape.value(y);
        out.into_dimensionality::<ndarray::Ix4>()
            .unwrap()
            .index_axis_move(ndarray::Axis(0), 0)
    }
}

/// Pretrains a surrogate to match [`conventional_isp`] renders in l1.
/// Returns the trained surrogate and the final mean l1.
pub fn pretrain_learnable_isp(
    raws: &[RawImage],
    params: &IspParams,
    steps: usize,
    lr: f64,
    seed: u64,
) -> Result<(LearnableIsp, f64)> {
    use crate::adam::Adam;

    if raws.len() < 8 {
        return Err(DrawError::EmptyDataset(format!(
            "ISP pretraining needs at least 8 raws, got {}",
            raws.len()
        )));
    }
    let mut surrogate = LearnableIsp::new(seed);
    let mut adam = Adam::new(lr as f32, surrogate.store.len());
    let targets: Vec<Array3<f32>> = raws
        .iter()
        .map(|r| conventional_isp_plane(r.data().view(), r.pattern, params))
        .collect();
    let demos: Vec<Array3<f32>> = raws
        .iter()
        .map(|r| demosaic_plane(r.data(), r.pattern))
        .collect();

    let mut last = f64::NAN;
    for step in 0..steps {
        let mut rng = stream(seed, "isp-pretrain", step as u64);
        let i = rng.gen_range(0..raws.len());
        let (c, h, w) = demos[i].dim();
        let tape = Tape::new();
        let lifted = surrogate.store.lift(&tape);
        let x = tape.leaf(
            demos[i]
                .clone()
                .into_shape_with_order((1, c, h, w))
                .unwrap()
                .into_dyn(),
            false,
        );
        let y = surrogate.refine(&tape, &lifted, x);
        let target = targets[i]
            .clone()
            .into_shape_with_order((1, c, h, w))
            .unwrap()
            .into_dyn();
        let loss = tape.l1_to_const(y, &target);
        last = f64::from(tape.scalar_value(loss));
        let grads = tape.backward(loss);
        adam.step(&mut surrogate.store, &lifted, &grads);
    }
    Ok((surrogate, last))
}

/// Mean l1 between surrogate renders and conventional renders over a set.
pub fn surrogate_l1(surrogate: &LearnableIsp, raws: &[RawImage], params: &IspParams) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for raw in raws {
        let pred = surrogate.render(raw);
        let target = conventional_isp_plane(raw.data().view(), raw.pattern, params);
        total += pred
            .iter()
            .zip(target.iter())
            .map(|(a, b)| f64::from((a - b).abs()))
            .sum::<f64>();
        n += pred.len();
    }
    total / n as f64
}

/// Mixed render inside an autodiff tape: `omega * sg(conventional) +
/// (1-omega) * surrogate`. The conventional branch enters as a constant so
/// gradient reaches the raw only through the surrogate, scaled by `1-omega`.
pub fn mix_render(
    tape: &Tape<f32>,
    surrogate: &LearnableIsp,
    surrogate_params: &[Var],
    raw_var: Var,
    conventional_value: ArrayView3<'_, f32>,
    pattern: BayerPattern,
    omega: f64,
) -> Result<Var> {
    if !(0.0..=1.0).contains(&omega) {
        return Err(DrawError::InvalidArgument(format!(
            "omega must lie in [0,1], got {omega}"
        )));
    }
    let demo = tape.demosaic(raw_var, pattern);
    let net = surrogate.refine(tape, surrogate_params, demo);
    let (c, h, w) = conventional_value.dim();
    let conv = tape.leaf(
        conventional_value
            .to_owned()
            .into_shape_with_order((1, c, h, w))
            .unwrap()
            .into_dyn(),
        false,
    );
    let a = tape.scale(conv, omega as f32);
    let b = tape.scale(net, (1.0 - omega) as f32);
    Ok(tape.add(a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::demosaic_bilinear;
    use ndarray::Array3;

    fn srgb_encode_oracle(x: f64) -> f64 {
        // Independent closed-form route for the transfer function.
        if x <= 0.0031308 {
            12.92 * x
        } else {
            1.055 * x.powf(1.0 / 2.4) - 0.055
        }
    }

    #[test]
    fn identity_params_reduce_to_bilinear_demosaic() {
        let plane = ndarray::Array2::from_shape_fn((16, 16), |(y, x)| {
            ((y * 17 + x * 5) % 64) as f32 / 63.0
        });
        let raw = RawImage::from_data(plane, BayerPattern::Rggb, 0, 65535).unwrap();
        let isp = conventional_isp(&raw, &IspParams::identity()).unwrap();
        let demo = demosaic_bilinear(&raw).unwrap();
        let max = isp
            .data()
            .iter()
            .zip(demo.data().iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max < 1e-6, "max {max}");
    }

    #[test]
    fn constant_raw_through_srgb_matches_closed_form() {
        let raw = RawImage::from_data(
            ndarray::Array2::from_elem((16, 16), 0.25),
            BayerPattern::Rggb,
            0,
            65535,
        )
        .unwrap();
        let mut p = IspParams::identity();
        p.gamma = Gamma::Srgb;
        let rgb = conventional_isp(&raw, &p).unwrap();
        let expect = srgb_encode_oracle(0.25);
        assert!((expect - 0.5371).abs() < 1e-3);
        for &v in rgb.data().iter() {
            assert!((f64::from(v) - expect).abs() < 1e-6);
        }
    }

    #[test]
    fn doubling_red_gain_doubles_pre_gamma_red() {
        let plane = ndarray::Array2::from_elem((16, 16), 0.2);
        let raw = RawImage::from_data(plane, BayerPattern::Rggb, 0, 65535).unwrap();
        let mut p1 = IspParams::identity();
        p1.wb_gains = [1.0, 1.0, 1.0];
        let mut p2 = IspParams::identity();
        p2.wb_gains = [2.0, 1.0, 1.0];
        let r1 = conventional_isp(&raw, &p1).unwrap();
        let r2 = conventional_isp(&raw, &p2).unwrap();
        for (a, b) in r1.data().outer_iter().next().unwrap().iter().zip(
            r2.data().outer_iter().next().unwrap().iter(),
        ) {
            assert!((b - 2.0 * a).abs() < 1e-6);
        }
    }

    #[test]
    fn identity_params_make_synthesize_raw_equal_mosaic() {
        let data = Array3::from_shape_fn((3, 16, 16), |(c, y, x)| {
            ((c * 41 + y * 3 + x * 11) % 64) as f32 / 63.0
        });
        let rgb = RgbImage::from_data(data).unwrap();
        let raw = synthesize_raw(&rgb, &IspParams::identity(), BayerPattern::Rggb).unwrap();
        let direct = crate::imaging::mosaic(&rgb, BayerPattern::Rggb).unwrap();
        let max = raw
            .data()
            .iter()
            .zip(direct.data().iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max < 1e-6);
    }

    #[test]
    fn constant_gray_inverse_srgb() {
        let rgb = RgbImage::from_data(Array3::from_elem((3, 16, 16), 0.5)).unwrap();
        let mut p = IspParams::identity();
        p.gamma = Gamma::Srgb;
        let raw = synthesize_raw(&rgb, &p, BayerPattern::Rggb).unwrap();
        // Analytic: inverse-sRGB(0.5) = ((0.555/1.055))^2.4
        let expect = ((0.5f64 + 0.055) / 1.055).powf(2.4);
        assert!((expect - 0.2140).abs() < 5e-4);
        for &v in raw.data().iter() {
            assert!((f64::from(v) - expect).abs() < 1e-6);
        }
    }

    #[test]
    fn round_trip_through_default_params_is_close() {
        // Smooth random image: loss only from mosaic/demosaic and clamping.
        let img = crate::synth::smooth_rgb(64, 64, 7);
        let rgb = RgbImage::from_data(img).unwrap();
        let p = IspParams::default();
        let raw = synthesize_raw(&rgb, &p, BayerPattern::Rggb).unwrap();
        let back = conventional_isp(&raw, &p).unwrap();
        let mean = rgb
            .data()
            .iter()
            .zip(back.data().iter())
            .map(|(a, b)| f64::from((a - b).abs()))
            .sum::<f64>()
            / (3.0 * 64.0 * 64.0);
        assert!(mean < 0.02, "mean l1 {mean}");
        let psnr = crate::metrics::psnr(&rgb, &back).unwrap();
        assert!(psnr >= 34.0, "psnr {psnr}");
    }

    #[test]
    fn singular_ccm_is_rejected() {
        let mut p = IspParams::identity();
        p.ccm = [[0.5, 0.25, 0.25], [0.5, 0.25, 0.25], [0.5, 0.25, 0.25]];
        let rgb = RgbImage::from_data(Array3::from_elem((3, 16, 16), 0.5)).unwrap();
        let err = synthesize_raw(&rgb, &p, BayerPattern::Rggb).unwrap_err();
        assert!(matches!(err, DrawError::SingularMatrix));
    }
}
