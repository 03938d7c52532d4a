//! Evaluation metrics and inspection tools: SNR, log-spectral distance,
//! spectral self-similarity, the copy-and-paste baseline and spectrogram
//! grids for reports.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fft::{Stft, StftParams};
use crate::{Error, Result, Waveform};

/// Reported SNR when the residual vanishes.
pub const SNR_CAP_DB: f64 = 120.0;
pub const LSD_FRAME: usize = 2048;
/// Magnitude floor applied before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-8;
pub const SIMILARITY_WINDOW: usize = 4096;
pub const SIMILARITY_HOP: usize = 128;
pub const SPECTROGRAM_WINDOW: usize = 1024;
pub const SPECTROGRAM_HOP: usize = 256;
pub const STITCH_XFADE: usize = 128;

fn check_pair(a: &Waveform, b: &Waveform) -> Result<()> {
    a.validate()?;
    b.validate()?;
    if a.rate != b.rate {
        return Err(Error::RateMismatch { left: a.rate, right: b.rate });
    }
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    Ok(())
}

/// `20·log10(‖x‖ / ‖x − x̂‖)` in dB, capped at [`SNR_CAP_DB`].
pub fn snr(reference: &Waveform, estimate: &Waveform) -> Result<f64> {
    check_pair(reference, estimate)?;
    snr_samples(&reference.samples, &estimate.samples)
}

pub fn snr_samples(reference: &[f32], estimate: &[f32]) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::LengthMismatch { left: reference.len(), right: estimate.len() });
    }
    let signal: f64 = reference.iter().map(|&v| (v as f64).powi(2)).sum();
    if signal == 0.0 {
        return Err(Error::Degenerate);
    }
    let noise: f64 = reference.iter().zip(estimate).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum();
    if noise == 0.0 {
        return Ok(SNR_CAP_DB);
    }
    Ok((10.0 * libm::log10(signal / noise)).min(SNR_CAP_DB))
}

/// Magnitudes of a short-time transform, `frames × bins` row-major.
fn magnitudes(x: &[f32], params: StftParams) -> Vec<f64> {
    Stft::new(params).forward(x).iter().map(|c| c.norm()).collect()
}

fn non_overlapping(frame: usize) -> StftParams {
    StftParams { window: frame, hop: frame, fft_size: frame, center: false }
}

/// Log-spectral distance over non-overlapping Hann-windowed frames of
/// [`LSD_FRAME`] samples: per frame, the root-mean-square over frequency of
/// `log10 |X| − log10 |X̂|`, averaged over frames.
pub fn lsd(reference: &Waveform, estimate: &Waveform) -> Result<f64> {
    check_pair(reference, estimate)?;
    lsd_samples(&reference.samples, &estimate.samples, LSD_FRAME)
}

pub fn lsd_samples(reference: &[f32], estimate: &[f32], frame: usize) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::LengthMismatch { left: reference.len(), right: estimate.len() });
    }
    if reference.len() < frame || frame == 0 {
        return Err(Error::TooShort { len: reference.len(), min: frame });
    }
    let params = non_overlapping(frame);
    let bins = params.bins();
    let a = magnitudes(reference, params);
    let b = magnitudes(estimate, params);
    let frames = params.frames(reference.len());
    let log = |m: f64| libm::log10(m.max(LOG_FLOOR));
    let mut total = 0.0;
    for f in 0..frames {
        let row = f * bins..(f + 1) * bins;
        let ms: f64 = a[row.clone()].iter().zip(&b[row]).map(|(&x, &y)| (log(x) - log(y)).powi(2)).sum::<f64>() / bins as f64;
        total += libm::sqrt(ms);
    }
    Ok(total / frames as f64)
}

/// A dense row-major grid of values.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f32>,
}

impl Grid {
    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.values[r * self.cols + c]
    }

    pub fn transpose(&self) -> Grid {
        let mut values = vec![0.0; self.values.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                values[c * self.rows + r] = self.get(r, c);
            }
        }
        Grid { rows: self.cols, cols: self.rows, values }
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.values.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Cosine similarities between magnitude-spectrogram columns: rows are the
/// frames of the real signal, columns those of the fake.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub grid: Grid,
    pub window: usize,
    pub hop: usize,
}

impl SimilarityMatrix {
    pub fn rows(&self) -> usize {
        self.grid.rows
    }

    pub fn cols(&self) -> usize {
        self.grid.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.grid.get(i, j)
    }

    /// Longest run of consecutive entries above `threshold` along the
    /// diagonal `j − i = offset`.
    pub fn longest_diagonal_run(&self, offset: isize, threshold: f32) -> usize {
        let (mut best, mut run) = (0, 0);
        for i in 0..self.rows() {
            let j = i as isize + offset;
            if j < 0 || j as usize >= self.cols() {
                run = 0;
                continue;
            }
            if self.get(i, j as usize) > threshold {
                run += 1;
                best = best.max(run);
            } else {
                run = 0;
            }
        }
        best
    }
}

fn similarity_params() -> StftParams {
    StftParams { window: SIMILARITY_WINDOW, hop: SIMILARITY_HOP, fft_size: SIMILARITY_WINDOW, center: false }
}

/// Unit-norm magnitude columns; silent frames stay all-zero.
fn normalized_columns(x: &[f32], params: StftParams) -> Vec<Vec<f64>> {
    let bins = params.bins();
    let mags = magnitudes(x, params);
    mags.chunks(bins)
        .map(|col| {
            let norm = libm::sqrt(col.iter().map(|v| v * v).sum::<f64>());
            if norm == 0.0 {
                vec![0.0; bins]
            } else {
                col.iter().map(|v| v / norm).collect()
            }
        })
        .collect()
}

pub fn similarity_matrix(real: &Waveform, fake: &Waveform) -> Result<SimilarityMatrix> {
    real.validate()?;
    fake.validate()?;
    if real.rate != fake.rate {
        return Err(Error::RateMismatch { left: real.rate, right: fake.rate });
    }
    for w in [real, fake] {
        if w.len() < SIMILARITY_WINDOW {
            return Err(Error::TooShort { len: w.len(), min: SIMILARITY_WINDOW });
        }
    }
    let params = similarity_params();
    let r = normalized_columns(&real.samples, params);
    let f = normalized_columns(&fake.samples, params);
    let mut values = Vec::with_capacity(r.len() * f.len());
    for a in &r {
        for b in &f {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            values.push(dot.clamp(-1.0, 1.0) as f32);
        }
    }
    Ok(SimilarityMatrix { grid: Grid { rows: r.len(), cols: f.len(), values }, window: params.window, hop: params.hop })
}

fn uniform_between(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    lo + (rng.next_u64() % (hi - lo + 1) as u64) as usize
}

/// Copy-and-paste baseline: random crops of `w`, with lengths uniform in
/// `[rf_min, rf_max]`, joined by linear crossfades of [`STITCH_XFADE`]
/// samples until `out_len` samples are produced.
pub fn naive_stitch(w: &Waveform, rf_min: usize, rf_max: usize, out_len: usize, seed: u64) -> Result<Waveform> {
    w.validate()?;
    if rf_min <= STITCH_XFADE || rf_min > rf_max || rf_max > w.len() {
        return Err(Error::Config(alloc::format!(
            "crop bounds [{rf_min}, {rf_max}] must exceed the crossfade and fit a signal of {} samples",
            w.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<f32> = Vec::with_capacity(out_len + rf_max);
    while out.len() < out_len {
        let len = uniform_between(&mut rng, rf_min, rf_max);
        let start = uniform_between(&mut rng, 0, w.len() - len);
        let crop = &w.samples[start..start + len];
        if out.is_empty() {
            out.extend_from_slice(crop);
            continue;
        }
        let base = out.len() - STITCH_XFADE;
        for (i, &v) in crop[..STITCH_XFADE].iter().enumerate() {
            let t = (i + 1) as f32 / (STITCH_XFADE + 1) as f32;
            out[base + i] = (1.0 - t) * out[base + i] + t * v;
        }
        out.extend_from_slice(&crop[STITCH_XFADE..]);
    }
    out.truncate(out_len);
    Ok(Waveform { samples: out, rate: w.rate })
}

/// Log-magnitude spectrogram in dB (`20·log10`, floored), with frequency
/// bins as rows (lowest first) and centered frames as columns.
pub fn spectrogram(w: &Waveform) -> Result<Grid> {
    w.validate()?;
    if w.is_empty() {
        return Err(Error::Empty);
    }
    let params = StftParams { window: SPECTROGRAM_WINDOW, hop: SPECTROGRAM_HOP, fft_size: SPECTROGRAM_WINDOW, center: true };
    let bins = params.bins();
    let frames = params.frames(w.len());
    let mags = magnitudes(&w.samples, params);
    let mut values = vec![0.0f32; bins * frames];
    for f in 0..frames {
        for k in 0..bins {
            values[k * frames + f] = (20.0 * libm::log10(mags[f * bins + k].max(LOG_FLOOR))) as f32;
        }
    }
    Ok(Grid { rows: bins, cols: frames, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn tone(len: usize, f: f64, rate: u32) -> Waveform {
        Waveform::new((0..len).map(|i| libm::sin(2.0 * PI * f * i as f64 / rate as f64) as f32).collect(), rate).unwrap()
    }

    #[test]
    fn snr_cases() {
        let x = tone(1000, 50.0, 1000);
        assert_eq!(snr(&x, &x).unwrap(), SNR_CAP_DB);
        let zero = Waveform::new(vec![0.0; 1000], 1000).unwrap();
        assert!(snr(&x, &zero).unwrap().abs() < 1e-9);
        assert_eq!(snr(&zero, &x), Err(Error::Degenerate));
        let short = tone(999, 50.0, 1000);
        assert!(matches!(snr(&x, &short), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn lsd_of_doubled_signal_is_log_two() {
        let x = Waveform::new((0..4096).map(|i| libm::sin(i as f64 * 0.37) as f32 + 0.1).collect(), 8000).unwrap();
        let y = Waveform::new(x.samples.iter().map(|v| 2.0 * v).collect(), 8000).unwrap();
        assert_eq!(lsd(&x, &x).unwrap(), 0.0);
        assert!((lsd(&x, &y).unwrap() - libm::log10(2.0)).abs() < 1e-4);
    }

    #[test]
    fn lsd_against_silence_is_finite() {
        let x = tone(4096, 300.0, 8000);
        let s = Waveform::new(vec![0.0; 4096], 8000).unwrap();
        assert!(lsd(&x, &s).unwrap().is_finite());
        assert!(matches!(lsd(&tone(100, 1.0, 8000), &tone(100, 1.0, 8000)), Err(Error::TooShort { .. })));
    }

    #[test]
    fn spectrogram_frame_count() {
        let g = spectrogram(&tone(16_000, 440.0, 16_000)).unwrap();
        assert_eq!((g.rows, g.cols), (513, 63));
        let silent = spectrogram(&Waveform::new(vec![0.0; 4000], 16_000).unwrap()).unwrap();
        assert!(silent.values.iter().all(|&v| v == -160.0));
        assert_eq!(spectrogram(&Waveform::new(vec![], 16_000).unwrap()), Err(Error::Empty));
    }

    #[test]
    fn stitch_degenerate_crop_repeats_the_signal() {
        let w = tone(1000, 3.0, 1000);
        let s = naive_stitch(&w, 1000, 1000, 2500, 1).unwrap();
        assert_eq!(s.len(), 2500);
        assert_eq!(&s.samples[..1000 - STITCH_XFADE], &w.samples[..1000 - STITCH_XFADE]);
        let step = 1000 - STITCH_XFADE;
        assert_eq!(&s.samples[step + STITCH_XFADE..2 * step], &w.samples[STITCH_XFADE..step]);
        assert!(naive_stitch(&w, 100, 50, 10, 0).is_err());
        assert!(naive_stitch(&w, 200, 2000, 10, 0).is_err());
    }
}
