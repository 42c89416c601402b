//! Manipulation-localization network and its supervision.
//!
//! The default detector is a compact U-shaped encoder-decoder (four encoder
//! stages, base width 32, stride-2 downsampling, nearest upsampling with skip
//! concatenation, 1-channel logit head). The `architecture_id` string is the
//! plug point: heavier networks can be registered by matching on it without
//! touching the trainer.

use ndarray::{Array2, Array4, IxDyn};

use crate::error::{DrawError, Result};
use crate::imaging::BinaryMask;
use crate::nn::{Conv2d, Init, ParamStore};
use crate::rng::stream;
use crate::tensor::{Arr, Scalar, Tape, Var};

pub const DEFAULT_ARCH: &str = "unet32x4";

/// Detector weights plus the architecture tag they belong to.
#[derive(Debug, Clone)]
pub struct Detector<T: Scalar> {
    pub architecture_id: String,
    pub store: ParamStore<T>,
    enc1: Conv2d,
    down1: Conv2d,
    enc2: Conv2d,
    down2: Conv2d,
    enc3: Conv2d,
    down3: Conv2d,
    enc4: Conv2d,
    up3: Conv2d,
    dec3: Conv2d,
    up2: Conv2d,
    dec2: Conv2d,
    up1: Conv2d,
    dec1: Conv2d,
    head: Conv2d,
}

impl<T: Scalar> Detector<T> {
    pub fn new(architecture_id: &str, seed: u64) -> Result<Self> {
        if architecture_id != DEFAULT_ARCH {
            return Err(DrawError::InvalidArgument(format!(
                "unknown detector architecture {architecture_id:?} (registered: {DEFAULT_ARCH})"
            )));
        }
        let mut store = ParamStore::new();
        let mut rng = stream(seed, "detector-init", 0);
        let w = 32;
        let mk = |st: &mut ParamStore<T>, name: &str, ci: usize, co: usize, k: usize,
                  s: usize, p: usize, rng: &mut rand_chacha::ChaCha8Rng| {
            Conv2d::new(st, name, ci, co, k, s, p, Init::Kaiming, rng)
        };
        Ok(Self {
            architecture_id: architecture_id.to_string(),
            enc1: mk(&mut store, "det.enc1", 3, w, 3, 1, 1, &mut rng),
            down1: mk(&mut store, "det.down1", w, 2 * w, 3, 2, 1, &mut rng),
            enc2: mk(&mut store, "det.enc2", 2 * w, 2 * w, 3, 1, 1, &mut rng),
            down2: mk(&mut store, "det.down2", 2 * w, 4 * w, 3, 2, 1, &mut rng),
            enc3: mk(&mut store, "det.enc3", 4 * w, 4 * w, 3, 1, 1, &mut rng),
            down3: mk(&mut store, "det.down3", 4 * w, 8 * w, 3, 2, 1, &mut rng),
            enc4: mk(&mut store, "det.enc4", 8 * w, 8 * w, 3, 1, 1, &mut rng),
            up3: mk(&mut store, "det.up3", 8 * w, 4 * w, 1, 1, 0, &mut rng),
            dec3: mk(&mut store, "det.dec3", 8 * w, 4 * w, 3, 1, 1, &mut rng),
            up2: mk(&mut store, "det.up2", 4 * w, 2 * w, 1, 1, 0, &mut rng),
            dec2: mk(&mut store, "det.dec2", 4 * w, 2 * w, 3, 1, 1, &mut rng),
            up1: mk(&mut store, "det.up1", 2 * w, w, 1, 1, 0, &mut rng),
            dec1: mk(&mut store, "det.dec1", 2 * w, w, 3, 1, 1, &mut rng),
            head: mk(&mut store, "det.head", w, 1, 3, 1, 1, &mut rng),
            store,
        })
    }

    pub fn count_parameters(&self) -> usize {
        self.store.scalar_count()
    }

    /// Per-pixel logits `[N,1,H,W]`; `sigmoid` of these is the soft mask.
    pub fn forward(&self, tape: &Tape<T>, params: &[Var], img: Var) -> Result<Var> {
        let shape = tape.shape(img);
        if shape.len() != 4 || shape[1] != 3 {
            return Err(DrawError::Dimension(format!(
                "detector expects [N,3,H,W], got {shape:?}"
            )));
        }
        if shape[2] % 16 != 0 || shape[3] % 16 != 0 {
            return Err(DrawError::Dimension(format!(
                "detector needs H, W multiples of 16, got {}x{}",
                shape[2], shape[3]
            )));
        }
        let g = |v: Var| tape.gelu(v);
        let e1 = g(self.enc1.forward(tape, params, img));
        let d1 = g(self.down1.forward(tape, params, e1));
        let e2 = g(self.enc2.forward(tape, params, d1));
        let d2 = g(self.down2.forward(tape, params, e2));
        let e3 = g(self.enc3.forward(tape, params, d2));
        let d3 = g(self.down3.forward(tape, params, e3));
        let e4 = g(self.enc4.forward(tape, params, d3));

        let u3 = tape.upsample_nearest2(e4);
        let u3 = self.up3.forward(tape, params, u3);
        let c3 = tape.concat_ch(&[u3, e3]);
        let x3 = g(self.dec3.forward(tape, params, c3));

        let u2 = tape.upsample_nearest2(x3);
        let u2 = self.up2.forward(tape, params, u2);
        let c2 = tape.concat_ch(&[u2, e2]);
        let x2 = g(self.dec2.forward(tape, params, c2));

        let u1 = tape.upsample_nearest2(x2);
        let u1 = self.up1.forward(tape, params, u1);
        let c1 = tape.concat_ch(&[u1, e1]);
        let x1 = g(self.dec1.forward(tape, params, c1));

        Ok(self.head.forward(tape, params, x1))
    }

    /// Inference on one image: logits -> sigmoid soft mask.
    pub fn predict_mask(&self, img: &ndarray::Array3<T>) -> Result<Array2<f32>> {
        let (c, h, w) = img.dim();
        let tape: Tape<T> = Tape::new();
        let params = self.store.lift_constants(&tape);
        let x = tape.leaf(
            img.clone()
                .into_shape_with_order((1, c, h, w))
                .expect("contiguous")
                .into_dyn(),
            false,
        );
        let logits = self.forward(&tape, &params, x)?;
        let probs = tape.sigmoid(logits);
        let v = tape
            .value(probs)
            .into_dimensionality::<ndarray::Ix4>()
            .expect("4d");
        let mut out = Array2::zeros((h, w));
        for y in 0..h {
            for xx in 0..w {
                out[[y, xx]] = v[[0, 0, y, xx]].tof64() as f32;
            }
        }
        Ok(out)
    }

    /// Thresholded prediction.
    pub fn detect(&self, img: &ndarray::Array3<T>, threshold: f32) -> Result<BinaryMask> {
        let soft = self.predict_mask(img)?;
        BinaryMask::from_data(soft.mapv(|v| f32::from(u8::from(v >= threshold))))
    }
}

/// Tampered-branch localization loss: mean BCE of `sigmoid(logits)` against a
/// binary ground-truth mask.
pub fn loss_tampered<T: Scalar>(
    tape: &Tape<T>,
    logits: Var,
    gt_mask: &Array2<f32>,
) -> Result<Var> {
    let shape = tape.shape(logits);
    if shape[2] != gt_mask.dim().0 || shape[3] != gt_mask.dim().1 || shape[0] != 1 {
        return Err(DrawError::Dimension(
            "loss_tampered: logits/mask shape mismatch".into(),
        ));
    }
    if gt_mask.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(DrawError::InvalidArgument(
            "loss_tampered: ground truth must be binary".into(),
        ));
    }
    let target = Arr::from_shape_fn(IxDyn(&shape), |ix| T::fromf64(f64::from(gt_mask[[ix[2], ix[3]]])));
    Ok(tape.bce_with_logits(logits, &target))
}

/// Authentic-branch loss: BCE against the zero matrix.
pub fn loss_authentic<T: Scalar>(tape: &Tape<T>, logits: Var) -> Var {
    let shape = tape.shape(logits);
    let target = Arr::zeros(IxDyn(&shape));
    tape.bce_with_logits(logits, &target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    #[test]
    fn forward_shape_contract() {
        let det: Detector<f32> = Detector::new(DEFAULT_ARCH, 0).unwrap();
        let x = Array4::from_elem((1, 3, 32, 32), 0.5f32);
        let tape = Tape::new();
        let params = det.store.lift_constants(&tape);
        let xv = tape.leaf(x.into_dyn(), false);
        let y = det.forward(&tape, &params, xv).unwrap();
        assert_eq!(tape.shape(y), vec![1, 1, 32, 32]);
    }

    #[test]
    fn deterministic_inference() {
        let det: Detector<f32> = Detector::new(DEFAULT_ARCH, 1).unwrap();
        let img = Array3::from_shape_fn((3, 32, 32), |(c, y, x)| {
            ((c * 7 + y * 3 + x) % 17) as f32 / 16.0
        });
        let a = det.predict_mask(&img).unwrap();
        let b = det.predict_mask(&img).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_unknown_architecture() {
        assert!(Detector::<f32>::new("hrnet48", 0).is_err());
    }

    #[test]
    fn rejects_bad_dimensions() {
        let det: Detector<f32> = Detector::new(DEFAULT_ARCH, 0).unwrap();
        let tape = Tape::new();
        let params = det.store.lift_constants(&tape);
        let x = tape.leaf(Arr::zeros(IxDyn(&[1, 3, 24, 24])), false);
        assert!(det.forward(&tape, &params, x).is_err());
    }

    #[test]
    fn parameter_count_near_two_million() {
        let det: Detector<f32> = Detector::new(DEFAULT_ARCH, 0).unwrap();
        let n = det.count_parameters();
        assert!(n > 1_000_000 && n < 2_500_000, "count {n}");
    }

    #[test]
    fn tampered_loss_closed_forms() {
        let tape: Tape<f64> = Tape::new();
        // logits 0 everywhere -> ln 2 for any mask
        let logits = tape.leaf(Arr::zeros(IxDyn(&[1, 1, 4, 4])), false);
        let gt = Array2::from_shape_fn((4, 4), |(y, x)| f32::from(u8::from((y + x) % 2 == 0)));
        let l = loss_tampered(&tape, logits, &gt).unwrap();
        assert!((tape.scalar_value(l) - std::f64::consts::LN_2).abs() < 1e-12);
        // authentic loss at zero logits is also ln 2
        let l = loss_authentic(&tape, logits);
        assert!((tape.scalar_value(l) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn single_pixel_sigmoid_09_loss() {
        // sigmoid(logit) = 0.9, M = 1 -> loss = -ln 0.9
        let tape: Tape<f64> = Tape::new();
        let logit = (0.9f64 / 0.1).ln();
        let logits = tape.leaf(Arr::from_elem(IxDyn(&[1, 1, 1, 1]), logit), false);
        let gt = Array2::from_elem((1, 1), 1.0f32);
        let l = loss_tampered(&tape, logits, &gt).unwrap();
        assert!((tape.scalar_value(l) - (-(0.9f64.ln()))).abs() < 1e-12);
    }

    #[test]
    fn perfect_prediction_limit_loss_vanishes() {
        let tape: Tape<f64> = Tape::new();
        let gt = Array2::from_shape_fn((4, 4), |(y, _)| f32::from(u8::from(y < 2)));
        let logits = tape.leaf(
            Arr::from_shape_fn(IxDyn(&[1, 1, 4, 4]), |ix| {
                if ix[2] < 2 {
                    40.0
                } else {
                    -40.0
                }
            }),
            false,
        );
        let l = loss_tampered(&tape, logits, &gt).unwrap();
        assert!(tape.scalar_value(l) < 1e-12);
    }

    #[test]
    fn authentic_equals_tampered_against_zero_mask() {
        let tape: Tape<f64> = Tape::new();
        let logits = tape.leaf(
            Arr::from_shape_fn(IxDyn(&[1, 1, 4, 4]), |ix| (ix[2] as f64 - 1.5) * 0.7),
            false,
        );
        let lt = loss_tampered(&tape, logits, &Array2::zeros((4, 4))).unwrap();
        let la = loss_authentic(&tape, logits);
        assert_eq!(tape.scalar_value(lt), tape.scalar_value(la));
    }

    #[test]
    fn non_binary_gt_rejected() {
        let tape: Tape<f64> = Tape::new();
        let logits = tape.leaf(Arr::zeros(IxDyn(&[1, 1, 2, 2])), false);
        let gt = Array2::from_elem((2, 2), 0.3f32);
        assert!(loss_tampered(&tape, logits, &gt).is_err());
    }
}
