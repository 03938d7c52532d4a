//! Learn a generative audio model from one short waveform.
//!
//! The crate is `no_std` (it needs `alloc`) and contains every numerical
//! piece of the system: the multi-rate analysis pyramid and its resampler,
//! the dilated-convolution generator and critic with hand-written gradients,
//! the adversarial and reconstruction objectives, the coarse-to-fine trainer,
//! the inference tasks (generation, variations, bandwidth extension,
//! inpainting, denoising) and the evaluation metrics.
//!
//! File formats, checkpoints and the command line live in the `solowave`
//! companion crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

mod error;
pub use error::*;

pub mod analysis;
pub mod fft;
pub mod losses;
pub mod nets;
pub mod optim;
pub mod pyramid;
pub mod real;
pub mod signal;
pub mod tasks;
pub mod trainer;

pub use signal::Waveform;
