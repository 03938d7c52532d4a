//! The waveform type and amplitude normalization.

use alloc::vec::Vec;

use crate::{Error, Result};

/// Mono audio: samples in nominal range [-1, 1] at an integer rate in Hz.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub rate: u32,
}

impl Waveform {
    /// Builds a waveform, rejecting a zero rate and non-finite samples.
    pub fn new(samples: Vec<f32>, rate: u32) -> Result<Self> {
        let w = Self { samples, rate };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rate == 0 {
            return Err(Error::BadRate);
        }
        if self.samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.rate as f64
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()))
    }

    pub fn mean_square(&self) -> f64 {
        mean_square(&self.samples)
    }

    pub fn rms(&self) -> f64 {
        libm::sqrt(self.mean_square())
    }
}

pub(crate) fn mean_square(x: &[f32]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|&v| v as f64 * v as f64).sum::<f64>() / x.len() as f64
}

/// Scales `w` so that its largest absolute sample is exactly 1.
pub fn normalize_peak(w: &Waveform) -> Result<Waveform> {
    w.validate()?;
    let peak = w.peak();
    if peak == 0.0 {
        return Err(Error::Degenerate);
    }
    let mut samples: Vec<f32> = w.samples.iter().map(|s| s / peak).collect();
    // division by the peak reproduces ±peak as exactly ±1.0, but keep the
    // postcondition explicit in case of subnormal peaks
    for s in samples.iter_mut() {
        *s = s.clamp(-1.0, 1.0);
    }
    Ok(Waveform { samples, rate: w.rate })
}
