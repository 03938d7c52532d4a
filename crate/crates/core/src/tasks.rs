//! Inference on a trained [`ModelBundle`]: unconditional generation,
//! reconstruction, variations, bandwidth extension, inpainting completion and
//! denoising.
//!
//! Generators work in the peak-normalized amplitude domain of training.
//! Outputs are scaled back to the amplitude of whatever set it: the training
//! input for generation and reconstruction, the injected signal for
//! variations and bandwidth extension.

use alloc::format;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::fft::Fft;
use crate::nets::receptive_field;
use crate::pyramid::{cubic_interpolate, resample, resampled_len};
use crate::signal::{mean_square, normalize_peak};
use crate::trainer::{derive_seed, gaussian, reconstruct_normalized, synthesize, InpaintMask, ModelBundle};
use crate::{Error, Result, Waveform};

/// Crossfade length at each inpainting seam, in full-rate samples.
pub const DEFAULT_XFADE: usize = 128;
/// Width of the raised-cosine transition of the bandwidth-extension splice.
pub const SPLICE_TRANSITION_HZ: f64 = 100.0;

/// Requested output length at the full rate.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Duration {
    Seconds(f64),
    Samples(usize),
}

impl Duration {
    pub fn samples(&self, rate: u32) -> Result<usize> {
        match *self {
            Duration::Samples(0) => Err(Error::Config("duration must be positive".into())),
            Duration::Samples(n) => Ok(n),
            Duration::Seconds(s) if s.is_finite() && s > 0.0 => {
                Ok(libm::round(s * rate as f64).max(1.0) as usize)
            }
            Duration::Seconds(s) => Err(Error::Config(format!("duration of {s} s is not positive"))),
        }
    }
}

/// A signal that replaces the output of scale `scale` (and everything
/// coarser); synthesis resumes at `scale − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Injection {
    pub scale: usize,
    pub signal: Waveform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub duration: Duration,
    pub seed: u64,
    /// Generate one coarsest-scale receptive field of extra signal per side
    /// and cut it off.
    pub trim_borders: bool,
    /// Starts synthesis below an injected signal instead of at the coarsest
    /// scale.
    pub injection: Option<Injection>,
    /// Multiplies every noise standard deviation; 0 gives a deterministic
    /// output.
    pub noise_gain: f64,
}

impl GenerationRequest {
    pub fn new(duration: Duration, seed: u64) -> Self {
        Self { duration, seed, trim_borders: false, injection: None, noise_gain: 1.0 }
    }

    /// Output as long as the injected signal covers at the full rate.
    pub fn injected(bundle: &ModelBundle, scale: usize, signal: Waveform, seed: u64) -> Result<Self> {
        let rate = bundle.ladder.rate(scale)?;
        let n = resampled_len(signal.len(), rate, bundle.origin_rate());
        Ok(Self { injection: Some(Injection { scale, signal }), ..Self::new(Duration::Samples(n), seed) })
    }
}

/// Samples trimmed from each side when `trim_borders` is set: the coarsest
/// generator's support mapped to the full rate.
pub fn border_trim(bundle: &ModelBundle) -> usize {
    let support = receptive_field(&bundle.spec).generator_support as u64;
    let (r0, rn) = (bundle.origin_rate() as u64, bundle.rate(bundle.coarsest) as u64);
    (support * r0).div_ceil(rn) as usize
}

/// Signal length at every scale for `total` full-rate samples.
fn scale_lengths(bundle: &ModelBundle, total: usize) -> Vec<usize> {
    (0..bundle.num_scales()).map(|n| resampled_len(total, bundle.origin_rate(), bundle.rate(n))).collect()
}

/// Noise source for a seeded synthesis: one independent stream per scale,
/// with per-scale standard deviations.
fn seeded_noise(seed: u64, stds: Vec<f64>) -> impl FnMut(usize, usize) -> Vec<f32> {
    move |k, len| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 10, k as u64));
        gaussian(&mut rng, len, stds[k])
    }
}

fn scaled(samples: Vec<f32>, gain: f32, rate: u32) -> Result<Waveform> {
    let w = Waveform { samples: samples.into_iter().map(|v| v * gain).collect(), rate };
    if w.samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(w)
}

/// Peak-normalized copy of an injected signal and its original peak.
fn normalized_injection(w: &Waveform) -> Result<(Waveform, f32)> {
    let peak = w.peak();
    Ok((normalize_peak(w)?, peak))
}

/// Runs the synthesis recursion for `req`.
pub fn generate(bundle: &ModelBundle, req: &GenerationRequest) -> Result<Waveform> {
    bundle.validate()?;
    let r0 = bundle.origin_rate();
    let requested = req.duration.samples(r0)?;
    if !(req.noise_gain.is_finite() && req.noise_gain >= 0.0) {
        return Err(Error::Config("noise gain must be finite and non-negative".into()));
    }
    let stds: Vec<f64> = bundle.noise_std.iter().map(|s| s * req.noise_gain).collect();
    match &req.injection {
        None => {
            let trim = if req.trim_borders { border_trim(bundle) } else { 0 };
            let total = requested + 2 * trim;
            let lengths = scale_lengths(bundle, total);
            let min = receptive_field(&bundle.spec).generator_support;
            if lengths[bundle.coarsest] < min {
                return Err(Error::TooShort { len: lengths[bundle.coarsest], min });
            }
            let mut noise = seeded_noise(req.seed, stds);
            let x = synthesize(&bundle.generators, &bundle.ladder, &lengths, bundle.coarsest, 0, None, &mut noise)?;
            scaled(x[trim..trim + requested].to_vec(), bundle.input_peak, r0)
        }
        Some(inj) => {
            if req.trim_borders {
                return Err(Error::Config("border trimming applies to unconditional generation only".into()));
            }
            let m = inj.scale;
            if m == 0 || m > bundle.coarsest {
                return Err(Error::BadScale(m));
            }
            let rate = bundle.ladder.rate(m)?;
            if inj.signal.rate != rate {
                return Err(Error::RateMismatch { left: inj.signal.rate, right: rate });
            }
            let (x, peak) = normalized_injection(&inj.signal)?;
            let lengths = scale_lengths(bundle, requested);
            let mut noise = seeded_noise(req.seed, stds);
            let y = synthesize(&bundle.generators, &bundle.ladder, &lengths, m - 1, 0, Some(x.samples), &mut noise)?;
            scaled(y, peak, r0)
        }
    }
}

/// Deterministic output of the reconstruction noise `{z*, 0, …, 0}`.
pub fn reconstruct(bundle: &ModelBundle) -> Result<Waveform> {
    bundle.validate()?;
    scaled(reconstruct_normalized(bundle)?, bundle.input_peak, bundle.origin_rate())
}

/// Reconstruction of a model trained on a noisy signal; with the speech
/// preset this keeps harmonic structure and suppresses ambient noise.
pub fn denoise(bundle: &ModelBundle) -> Result<Waveform> {
    reconstruct(bundle)
}

/// Options of [`variations_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationOptions {
    pub seed: u64,
    pub noise_gain: f64,
}

/// A new signal that follows the coarse structure of `conditioning`: it is
/// injected at the coarsest scale and the finer scales are regenerated.
pub fn variations(bundle: &ModelBundle, conditioning: &Waveform, seed: u64) -> Result<Waveform> {
    variations_with(bundle, conditioning, &VariationOptions { seed, noise_gain: 1.0 })
}

pub fn variations_with(bundle: &ModelBundle, conditioning: &Waveform, opts: &VariationOptions) -> Result<Waveform> {
    bundle.validate()?;
    let n = bundle.coarsest;
    if n == 0 {
        return Err(Error::Config("variations need at least two trained scales".into()));
    }
    if !(opts.noise_gain.is_finite() && opts.noise_gain >= 0.0) {
        return Err(Error::Config("noise gain must be finite and non-negative".into()));
    }
    let (cond, peak) = normalized_injection(conditioning)?;
    let at_next = resample(&cond, bundle.rate(n - 1))?;
    let min = receptive_field(&bundle.spec).generator_support;
    if at_next.len() < min {
        return Err(Error::TooShort { len: at_next.len(), min });
    }
    let injected = resample(&cond, bundle.rate(n))?;
    let total = resampled_len(cond.len(), cond.rate, bundle.origin_rate());
    let lengths = scale_lengths(bundle, total);
    let mut stds: Vec<f64> = bundle.noise_std.clone();
    stds[n - 1] = libm::sqrt(mean_square(&at_next.samples));
    for s in stds.iter_mut() {
        *s *= opts.noise_gain;
    }
    let mut noise = seeded_noise(opts.seed, stds);
    let y = synthesize(&bundle.generators, &bundle.ladder, &lengths, n - 1, 0, Some(injected.samples), &mut noise)?;
    scaled(y, peak, bundle.origin_rate())
}

/// Weight of the protected (input) band at frequency `f` for a cutoff `fc`:
/// 1 up to `fc`, a raised-cosine fall over the transition, 0 beyond.
pub fn splice_weight(f: f64, fc: f64, transition: f64) -> f64 {
    if f <= fc {
        1.0
    } else if f >= fc + transition {
        0.0
    } else {
        0.5 + 0.5 * libm::cos(core::f64::consts::PI * (f - fc) / transition)
    }
}

/// Replaces the band `[0, cutoff]` of `model` by that of `base`.
pub fn spectral_splice(base: &[f32], model: &[f32], rate: u32, cutoff: f64, transition: f64) -> Result<Vec<f32>> {
    if base.len() != model.len() {
        return Err(Error::LengthMismatch { left: base.len(), right: model.len() });
    }
    let n = base.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let plan = Fft::new(n);
    let to_c = |x: &[f32]| -> Vec<Complex64> { x.iter().map(|&v| Complex64::new(v as f64, 0.0)).collect() };
    let mut a = to_c(base);
    let mut b = to_c(model);
    plan.forward(&mut a);
    plan.forward(&mut b);
    for k in 0..n {
        // bin k and its mirror n − k share the physical frequency
        let f = k.min(n - k) as f64 * rate as f64 / n as f64;
        let w = splice_weight(f, cutoff, transition);
        a[k] = a[k] * w + b[k] * (1.0 - w);
    }
    plan.inverse(&mut a);
    let scale = 1.0 / n as f64;
    Ok(a.iter().map(|c| (c.re * scale) as f32).collect())
}

/// Extends a low-rate signal to the full rate: the signal is injected at the
/// scale of its rate, the finer scales synthesize the missing band, and the
/// input's own band is spliced back in.
pub fn bandwidth_extend(bundle: &ModelBundle, low_res: &Waveform, seed: u64) -> Result<Waveform> {
    bundle.validate()?;
    low_res.validate()?;
    let r0 = bundle.origin_rate();
    if low_res.rate >= r0 {
        return Err(Error::Config(format!("input rate {} Hz is not below the model rate {r0} Hz", low_res.rate)));
    }
    let m = bundle
        .ladder
        .scale_of_rate(low_res.rate)
        .ok_or_else(|| Error::Config(format!("no ladder scale runs at {} Hz", low_res.rate)))?;
    if m > bundle.coarsest {
        return Err(Error::Config(format!("{} Hz is below the coarsest trained rate", low_res.rate)));
    }
    let req = GenerationRequest::injected(bundle, m, low_res.clone(), seed)?;
    let model = generate(bundle, &req)?;
    let base = cubic_interpolate(&low_res.samples, low_res.rate, r0, model.len());
    let spliced = spectral_splice(&base, &model.samples, r0, low_res.rate as f64 / 2.0, SPLICE_TRANSITION_HZ)?;
    scaled(spliced, 1.0, r0)
}

/// Fills the gap of `original` with the reconstruction of a bundle trained
/// by gap-aware training on `(original, mask)`, with linear crossfades of
/// `xfade` samples outside each end of the gap.
pub fn inpaint_complete(bundle: &ModelBundle, original: &Waveform, mask: InpaintMask, xfade: usize) -> Result<Waveform> {
    original.validate()?;
    let mask = InpaintMask::new(mask.gap_start, mask.gap_end, original.len())?;
    if mask.is_empty() {
        return Ok(original.clone());
    }
    if bundle.mask != Some(mask) {
        return Err(Error::InvalidMask(format!(
            "gap [{}, {}) differs from the training gap {:?}",
            mask.gap_start, mask.gap_end, bundle.mask
        )));
    }
    if original.rate != bundle.origin_rate() {
        return Err(Error::RateMismatch { left: original.rate, right: bundle.origin_rate() });
    }
    let recon = reconstruct(bundle)?;
    if recon.len() != original.len() {
        return Err(Error::LengthMismatch { left: original.len(), right: recon.len() });
    }
    Ok(Waveform { samples: crossfade_gap(&original.samples, &recon.samples, mask, xfade), rate: original.rate })
}

/// `outside` with `[gap_start, gap_end)` taken from `inside` and linear
/// crossfades over the `xfade` samples on either side.
pub fn crossfade_gap(outside: &[f32], inside: &[f32], mask: InpaintMask, xfade: usize) -> Vec<f32> {
    let mut out = outside.to_vec();
    let (gs, ge) = (mask.gap_start, mask.gap_end);
    out[gs..ge].copy_from_slice(&inside[gs..ge]);
    let ramp = |i: usize| (i + 1) as f32 / (xfade + 1) as f32;
    for i in 0..xfade.min(gs) {
        // i counts outward from the gap; the weight of `inside` falls
        let t = 1.0 - ramp(i);
        let p = gs - 1 - i;
        out[p] = (1.0 - t) * outside[p] + t * inside[p];
    }
    for i in 0..xfade.min(outside.len() - ge) {
        let t = 1.0 - ramp(i);
        let p = ge + i;
        out[p] = (1.0 - t) * outside[p] + t * inside[p];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn durations() {
        assert_eq!(Duration::Seconds(60.0).samples(16_000), Ok(960_000));
        assert_eq!(Duration::Samples(7).samples(16_000), Ok(7));
        assert!(Duration::Samples(0).samples(16_000).is_err());
        assert!(Duration::Seconds(-1.0).samples(16_000).is_err());
        assert!(Duration::Seconds(f64::NAN).samples(16_000).is_err());
    }

    #[test]
    fn splice_weight_shape() {
        assert_eq!(splice_weight(0.0, 1000.0, 100.0), 1.0);
        assert_eq!(splice_weight(1000.0, 1000.0, 100.0), 1.0);
        assert!((splice_weight(1050.0, 1000.0, 100.0) - 0.5).abs() < 1e-12);
        assert_eq!(splice_weight(1100.0, 1000.0, 100.0), 0.0);
        assert_eq!(splice_weight(3000.0, 1000.0, 100.0), 0.0);
    }

    #[test]
    fn splice_keeps_low_band_of_base_and_high_band_of_model() {
        let rate = 8000;
        let n = 800;
        let tone = |f: f64, a: f64| -> Vec<f32> {
            (0..n).map(|i| (a * libm::sin(2.0 * core::f64::consts::PI * f * i as f64 / rate as f64)) as f32).collect()
        };
        let base: Vec<f32> = tone(500.0, 1.0);
        let model: Vec<f32> = tone(500.0, 0.3).iter().zip(tone(3000.0, 0.5)).map(|(a, b)| a + b).collect();
        let out = spectral_splice(&base, &model, rate, 1000.0, 100.0).unwrap();
        let want: Vec<f32> = base.iter().zip(tone(3000.0, 0.5)).map(|(a, b)| a + b).collect();
        for (o, w) in out.iter().zip(&want) {
            assert!((o - w).abs() < 1e-4, "{o} {w}");
        }
    }

    #[test]
    fn crossfade_contract() {
        let outside = vec![1.0f32; 20];
        let inside = vec![0.0f32; 20];
        let mask = InpaintMask::new(8, 12, 20).unwrap();
        let out = crossfade_gap(&outside, &inside, mask, 3);
        assert_eq!(&out[..5], &[1.0; 5]);
        assert_eq!(&out[15..], &[1.0; 5]);
        assert_eq!(&out[8..12], &[0.0; 4]);
        assert_eq!(&out[5..8], &[0.75, 0.5, 0.25]);
        assert_eq!(&out[12..15], &[0.25, 0.5, 0.75]);
    }

    #[test]
    fn crossfade_clips_at_signal_edges() {
        let outside = vec![1.0f32; 6];
        let inside = vec![0.0f32; 6];
        let out = crossfade_gap(&outside, &inside, InpaintMask::new(1, 5, 6).unwrap(), 4);
        let want = [0.2, 0.0, 0.0, 0.0, 0.0, 0.2];
        assert!(out.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-6), "{out:?}");
    }
}
