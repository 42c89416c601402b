//! RAW-domain image protection pipeline.
//!
//! The crate is organized around the stages of the pipeline:
//!
//! - [`imaging`]: image containers, Bayer mosaic/demosaic, synthetic RAW
//!   generation and bit-exact file I/O.
//! - [`dtcwt`]: dual-tree complex wavelet analysis/synthesis used by the
//!   protection network.
//! - [`tensor`]: a small reverse-mode autodiff engine over `ndarray`
//!   (everything trainable is built on it).
//! - [`nn`]: convolution / normalization / attention building blocks.
//! - [`mpf`]: the multi-frequency partial-fusion protection network.
//! - [`detector`]: the manipulation-localization network and its losses.
//! - [`isp`]: conventional ISP, learnable ISP surrogates and mixed rendering.
//! - [`attack`]: tamper mask generation, tampering, distortions, color
//!   adjustments, cropping and the stop-gradient bridge to real codecs.
//! - [`train`]: joint optimization of protection and detection.
//! - [`metrics`] / [`eval`]: PSNR/SSIM/segmentation metrics and the
//!   attack-suite evaluation harness.

pub mod adam;
pub mod attack;
pub mod ckpt;
pub mod detector;
pub mod dtcwt;
pub mod error;
pub mod eval;
pub mod imaging;
pub mod isp;
pub mod metrics;
pub mod mpf;
pub mod nn;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{DrawError, Result};
