//! Multi-frequency partial-fusion protection network.
//!
//! The input is decomposed by a 3-level dual-tree transform into three
//! subband streams (finest first) plus the lowpass stream. Each stream is
//! projected to `c_f` features by a DSConv-LN-GELU stem, refined by
//! `n_blocks` blocks of Half Fourier Convolution followed by Partial Feature
//! Fusion, projected back to subband channel counts (final projection
//! zero-initialized) and resynthesized. The network output is added to the
//! input, so a fresh network is exactly the identity.
//!
//! Stream order: index 0..levels-1 = highpass levels (0 finest), index
//! `levels` = lowpass. Fusion at stream `i` draws from streams `j <= i` only.

use ndarray::{Array4, Axis};
use serde::{Deserialize, Serialize};

use crate::dtcwt::{forward_vars, inverse_vars, DtcwtVars};
use crate::error::{DrawError, Result};
use crate::nn::{ChannelAttention, Conv2d, DsConv, DsConvLnGelu, Init, ParamStore};
use crate::rng::stream;
use crate::tensor::{Scalar, Tape, Var};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MpfConfig {
    pub c_in: usize,
    pub c_out: usize,
    pub c_f: usize,
    pub n_blocks: usize,
    /// Fraction of channels engaged in cross-frequency fusion.
    pub s: f64,
    pub levels: usize,
}

impl Default for MpfConfig {
    fn default() -> Self {
        Self {
            c_in: 3,
            c_out: 3,
            c_f: 32,
            n_blocks: 16,
            s: 0.25,
            levels: 3,
        }
    }
}

impl MpfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c_f % 2 != 0 {
            return Err(DrawError::InvalidArgument(
                "c_f must be even (the Fourier block splits channels in half)".into(),
            ));
        }
        let fused = self.c_f as f64 * self.s;
        if fused <= 0.0 || fused.fract() != 0.0 {
            return Err(DrawError::InvalidArgument(format!(
                "c_f * s must be a positive integer, got {fused}"
            )));
        }
        if fused as usize >= self.c_f {
            return Err(DrawError::InvalidArgument(
                "reserve ratio s must leave reserved channels".into(),
            ));
        }
        if self.levels == 0 {
            return Err(DrawError::InvalidArgument("levels must be >= 1".into()));
        }
        Ok(())
    }

    pub fn fused_channels(&self) -> usize {
        (self.c_f as f64 * self.s) as usize
    }
}

#[derive(Debug, Clone)]
pub struct HfcParams {
    /// 1x1 convolution over stacked spectral real/imag channels.
    pub gb: Conv2d,
    pub lb1: DsConv,
    pub lb2: DsConv,
}

#[derive(Debug, Clone)]
pub struct PffParams {
    /// One attention per contributing stream `j <= i`, in stream order.
    pub cas: Vec<ChannelAttention>,
}

#[derive(Debug, Clone)]
struct MpfBlock {
    hfc: Vec<HfcParams>,
    pff: Vec<PffParams>,
}

/// Protection network state: config plus all learned weights.
#[derive(Debug, Clone)]
pub struct MpfNet<T: Scalar> {
    pub cfg: MpfConfig,
    pub store: ParamStore<T>,
    stems_in: Vec<DsConvLnGelu>,
    stems_out: Vec<(DsConvLnGelu, Conv2d)>,
    blocks: Vec<MpfBlock>,
}

impl<T: Scalar> MpfNet<T> {
    pub fn new(cfg: MpfConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut rng = stream(seed, "mpf-init", 0);
        let n_streams = cfg.levels + 1;
        let high_ch = 12 * cfg.c_in;

        let mut stems_in = Vec::new();
        let mut stems_out = Vec::new();
        for i in 0..n_streams {
            let (cin, cout) = if i < cfg.levels {
                (high_ch, 12 * cfg.c_out)
            } else {
                (cfg.c_in, cfg.c_out)
            };
            stems_in.push(DsConvLnGelu::new(
                &mut store,
                &format!("mpf.s{i}.in"),
                cin,
                cfg.c_f,
                &mut rng,
            ));
            let refine = DsConvLnGelu::new(
                &mut store,
                &format!("mpf.s{i}.out"),
                cfg.c_f,
                cfg.c_f,
                &mut rng,
            );
            let proj = Conv2d::new(
                &mut store,
                &format!("mpf.s{i}.proj"),
                cfg.c_f,
                cout,
                1,
                1,
                0,
                Init::Zeros,
                &mut rng,
            );
            stems_out.push((refine, proj));
        }

        let mut blocks = Vec::new();
        for b in 0..cfg.n_blocks {
            let mut hfc = Vec::new();
            let mut pff = Vec::new();
            for i in 0..n_streams {
                let half = cfg.c_f / 2;
                hfc.push(HfcParams {
                    gb: Conv2d::new(
                        &mut store,
                        &format!("mpf.b{b}.s{i}.gb"),
                        cfg.c_f,
                        cfg.c_f,
                        1,
                        1,
                        0,
                        Init::Kaiming,
                        &mut rng,
                    ),
                    lb1: DsConv::new(
                        &mut store,
                        &format!("mpf.b{b}.s{i}.lb1"),
                        half,
                        half,
                        Init::Kaiming,
                        &mut rng,
                    ),
                    lb2: DsConv::new(
                        &mut store,
                        &format!("mpf.b{b}.s{i}.lb2"),
                        half,
                        half,
                        Init::Kaiming,
                        &mut rng,
                    ),
                });
                let cas = (0..=i)
                    .map(|j| {
                        ChannelAttention::new(
                            &mut store,
                            &format!("mpf.b{b}.s{i}.ca{j}"),
                            cfg.fused_channels(),
                            &mut rng,
                        )
                    })
                    .collect();
                pff.push(PffParams { cas });
            }
            blocks.push(MpfBlock { hfc, pff });
        }

        Ok(Self {
            cfg,
            store,
            stems_in,
            stems_out,
            blocks,
        })
    }

    /// Exact count of learnable scalars.
    pub fn count_parameters(&self) -> usize {
        self.store.scalar_count()
    }

    pub fn block(&self, b: usize) -> (&[HfcParams], &[PffParams]) {
        (&self.blocks[b].hfc, &self.blocks[b].pff)
    }

    /// Half Fourier Convolution: first half of the channels through
    /// FFT -> 1x1 complex-domain conv -> inverse FFT, second half through two
    /// cascaded depthwise-separable convolutions with GELU between.
    pub fn hfc_forward(&self, tape: &Tape<T>, params: &[Var], hfc: &HfcParams, x: Var) -> Var {
        let c = tape.shape(x)[1];
        let half = c / 2;
        let global = tape.slice_ch(x, 0, half);
        let local = tape.slice_ch(x, half, c);

        let spec = tape.fft2_stack(global);
        let spec = hfc.gb.forward(tape, params, spec);
        let global_out = tape.ifft2_unstack(spec);

        let l = hfc.lb1.forward(tape, params, local);
        let l = tape.gelu(l);
        let local_out = hfc.lb2.forward(tape, params, l);

        tape.concat_ch(&[global_out, local_out])
    }

    /// Partial feature fusion at stream `i`: the first `s*c_f` channels of
    /// every stream `j <= i` are resized to stream `i`'s resolution,
    /// reweighed by channel attention and summed; the remaining channels of
    /// stream `i` pass through untouched.
    pub fn pff_forward(
        &self,
        tape: &Tape<T>,
        params: &[Var],
        pff: &PffParams,
        stream_idx: usize,
        inputs: &[Var],
    ) -> Result<Var> {
        if inputs.len() < stream_idx + 1 {
            return Err(DrawError::InvalidArgument(format!(
                "PFF at stream {stream_idx} needs inputs for every stream j <= {stream_idx}"
            )));
        }
        let sc = self.cfg.fused_channels();
        let shape = tape.shape(inputs[stream_idx]);
        let (th, tw) = (shape[2], shape[3]);
        let mut fused: Option<Var> = None;
        for (j, ca) in pff.cas.iter().enumerate() {
            let part = tape.slice_ch(inputs[j], 0, sc);
            let resized = tape.resize_bilinear(part, th, tw);
            let attended = ca.forward(tape, params, resized);
            fused = Some(match fused {
                Some(acc) => tape.add(acc, attended),
                None => attended,
            });
        }
        let reserved = tape.slice_ch(inputs[stream_idx], sc, self.cfg.c_f);
        Ok(tape.concat_ch(&[fused.expect("at least one source"), reserved]))
    }

    /// Full forward pass: analysis, stems, blocks, synthesis, residual add.
    pub fn forward(&self, tape: &Tape<T>, params: &[Var], x: Var) -> Result<Var> {
        let shape = tape.shape(x);
        if shape.len() != 4 || shape[1] != self.cfg.c_in {
            return Err(DrawError::Dimension(format!(
                "expected [N,{},H,W], got {shape:?}",
                self.cfg.c_in
            )));
        }
        let pyr = forward_vars(tape, x, self.cfg.levels)?;
        let n_streams = self.cfg.levels + 1;
        let mut feats: Vec<Var> = Vec::with_capacity(n_streams);
        for i in 0..self.cfg.levels {
            feats.push(self.stems_in[i].forward(tape, params, pyr.highpass[i]));
        }
        feats.push(self.stems_in[self.cfg.levels].forward(tape, params, pyr.lowpass));

        for block in &self.blocks {
            let refined: Vec<Var> = (0..n_streams)
                .map(|i| self.hfc_forward(tape, params, &block.hfc[i], feats[i]))
                .collect();
            let mut next = Vec::with_capacity(n_streams);
            for i in 0..n_streams {
                next.push(self.pff_forward(tape, params, &block.pff[i], i, &refined)?);
            }
            feats = next;
        }

        let mut highs = Vec::with_capacity(self.cfg.levels);
        for i in 0..self.cfg.levels {
            let y = self.stems_out[i].0.forward(tape, params, feats[i]);
            highs.push(self.stems_out[i].1.forward(tape, params, y));
        }
        let y = self.stems_out[self.cfg.levels]
            .0
            .forward(tape, params, feats[self.cfg.levels]);
        let low = self.stems_out[self.cfg.levels].1.forward(tape, params, y);

        let out_pyr = DtcwtVars {
            lowpass: low,
            highpass: highs,
            channels: self.cfg.c_out,
        };
        let delta = inverse_vars(tape, &out_pyr);
        Ok(tape.add(x, delta))
    }

    /// Convenience non-training forward on a plain `[N,C,H,W]` array.
    pub fn forward_array(&self, x: &Array4<T>) -> Result<Array4<T>> {
        let tape: Tape<T> = Tape::new();
        let params = self.store.lift_constants(&tape);
        let xv = tape.leaf(x.clone().into_dyn(), false);
        let y = self.forward(&tape, &params, xv)?;
        Ok(tape
            .value(y)
            .into_dimensionality::<ndarray::Ix4>()
            .expect("4d output"))
    }

    /// Protect a single `[C,H,W]` image.
    pub fn protect_image(&self, x: &ndarray::Array3<T>) -> Result<ndarray::Array3<T>> {
        let (c, h, w) = x.dim();
        let batched = x
            .clone()
            .into_shape_with_order((1, c, h, w))
            .expect("contiguous");
        let y = self.forward_array(&batched)?;
        Ok(y.index_axis(Axis(0), 0).to_owned())
    }
}
