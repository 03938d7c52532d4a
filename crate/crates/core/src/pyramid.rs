//! Multi-rate analysis of the training signal.
//!
//! Scale `n = 0` is the signal at its own rate; scale `n` runs at
//! `ladder.rate(n)`, which decreases with `n`. Down-sampling goes through a
//! polyphase Kaiser-windowed sinc filter; up-sampling uses Keys cubic
//! convolution.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::fft;
use crate::signal::mean_square;
use crate::{Error, Result, Waveform};

/// Mean-square level the coarsest scale must reach on a peak-normalized input.
pub const COARSEST_ENERGY_THRESHOLD: f64 = 0.0025;

/// Floor on per-scale noise standard deviations.
pub const NOISE_STD_FLOOR: f64 = 1e-4;

/// Largest denominator allowed when a ladder rate is written as a fraction of
/// the origin rate.
pub const MAX_LADDER_DENOMINATOR: u64 = 8;

/// Largest numerator/denominator accepted by [`resample`].
pub const MAX_RATIO_TERM: u64 = 4096;

const TEMPLATE_16K: [u32; 16] = [
    320, 400, 500, 640, 800, 1000, 1250, 1600, 2000, 4000, 5000, 6400, 8000, 10000, 12800, 16000,
];
const TEMPLATE_ABOVE_16K: [u32; 5] = [20000, 24000, 32000, 40000, 48000];

pub(crate) fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// `a / b` in lowest terms.
pub fn reduced_ratio(a: u32, b: u32) -> (u64, u64) {
    let g = gcd(a as u64, b as u64);
    (a as u64 / g, b as u64 / g)
}

/// Ordered set of pyramid sampling rates, lowest first, ending at the origin.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScaleLadder {
    rates: Vec<u32>,
}

impl ScaleLadder {
    /// Validates and wraps a list of rates.
    pub fn new(rates: Vec<u32>) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::InvalidLadder("no rates".into()));
        }
        if rates.contains(&0) {
            return Err(Error::InvalidLadder("zero rate".into()));
        }
        if rates.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::InvalidLadder("rates must be strictly increasing".into()));
        }
        let origin = *rates.last().unwrap();
        for &r in &rates {
            let (_, q) = reduced_ratio(origin, r);
            if q > MAX_LADDER_DENOMINATOR {
                return Err(Error::InvalidLadder(format!(
                    "{origin}/{r} has denominator {q} > {MAX_LADDER_DENOMINATOR}"
                )));
            }
        }
        Ok(Self { rates })
    }

    pub fn rates(&self) -> &[u32] {
        &self.rates
    }

    pub fn origin(&self) -> u32 {
        *self.rates.last().unwrap()
    }

    /// Number of rates, i.e. the largest usable scale index plus one.
    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    /// Rate of scale `n` (0 = origin).
    pub fn rate(&self, n: usize) -> Result<u32> {
        if n >= self.rates.len() {
            return Err(Error::BadScale(n));
        }
        Ok(self.rates[self.rates.len() - 1 - n])
    }

    /// Scale index whose rate equals `rate`.
    pub fn scale_of_rate(&self, rate: u32) -> Option<usize> {
        self.rates.iter().rposition(|&r| r == rate).map(|i| self.rates.len() - 1 - i)
    }

    /// `rate(n) / rate(n + 1)` as a reduced fraction.
    pub fn factor(&self, n: usize) -> Result<(u64, u64)> {
        let hi = self.rate(n)?;
        let lo = self.rate(n + 1)?;
        Ok(reduced_ratio(hi, lo))
    }

    /// Keeps the rates of scales `0..=n`.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        let k = self.rates.len();
        if n >= k {
            return Err(Error::BadScale(n));
        }
        Ok(Self { rates: self.rates[k - 1 - n..].to_vec() })
    }
}

/// Default ladder: steps of about ×1.25 up to 2 kHz, a single octave jump to
/// 4 kHz, then ×1.25 again. Rates above the origin are dropped, as are rates
/// that are not a small-denominator fraction of the origin.
pub fn default_ladder(origin_rate: u32) -> Result<ScaleLadder> {
    if origin_rate == 0 {
        return Err(Error::BadRate);
    }
    let mut rates: Vec<u32> = TEMPLATE_16K
        .iter()
        .chain(TEMPLATE_ABOVE_16K.iter())
        .copied()
        .filter(|&r| r < origin_rate)
        .filter(|&r| reduced_ratio(origin_rate, r).1 <= MAX_LADDER_DENOMINATOR)
        .collect();
    if rates.is_empty() {
        return Err(Error::InvalidLadder(format!(
            "no predefined rate is a small-denominator fraction of {origin_rate} Hz"
        )));
    }
    rates.push(origin_rate);
    ScaleLadder::new(rates)
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    let mut k = 1.0;
    while term > 1e-17 * sum {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

#[inline]
fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        libm::sin(PI * x) / (PI * x)
    }
}

/// Anti-aliasing design: stopband starts at the output Nyquist frequency and
/// the transition band occupies the top 15% below it.
const TRANSITION_FRACTION: f64 = 0.15;
const STOPBAND_DB: f64 = 70.0;

/// Polyphase low-pass bank for rational down-sampling by `p/q` (p < q).
struct PolyphaseBank {
    p: u64,
    q: u64,
    /// Leftmost input offset relative to `floor(m·q/p)`.
    first: isize,
    taps: usize,
    /// `p × taps` coefficients; each phase sums to one.
    coeffs: Vec<f64>,
}

impl PolyphaseBank {
    fn new(p: u64, q: u64) -> Self {
        let out_nyquist = p as f64 / (2.0 * q as f64); // cycles per input sample
        let width = TRANSITION_FRACTION * out_nyquist;
        let cutoff = out_nyquist - width / 2.0;
        let beta = 0.1102 * (STOPBAND_DB - 8.7);
        let n_taps = libm::ceil((STOPBAND_DB - 8.0) / (2.285 * 2.0 * PI * width)) as usize + 1;
        let half = n_taps as f64 / 2.0;
        let first = -(libm::floor(half) as isize);
        let taps = 2 * libm::floor(half) as usize + 2;
        let i0b = bessel_i0(beta);
        let mut coeffs = vec![0.0; p as usize * taps];
        for phase in 0..p as usize {
            let frac = phase as f64 / p as f64;
            let row = &mut coeffs[phase * taps..(phase + 1) * taps];
            for (j, c) in row.iter_mut().enumerate() {
                // distance between input sample and output instant
                let tau = (first + j as isize) as f64 - frac;
                let r = tau / half;
                if r.abs() <= 1.0 {
                    let win = bessel_i0(beta * libm::sqrt(1.0 - r * r)) / i0b;
                    *c = 2.0 * cutoff * sinc(2.0 * cutoff * tau) * win;
                }
            }
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|c| *c /= s);
        }
        Self { p, q, first, taps, coeffs }
    }

    fn apply(&self, x: &[f32], out_len: usize) -> Vec<f32> {
        let n = x.len() as isize;
        let mut y = Vec::with_capacity(out_len);
        for m in 0..out_len as u64 {
            let pos = m * self.q;
            let base = (pos / self.p) as isize;
            let phase = (pos % self.p) as usize;
            let row = &self.coeffs[phase * self.taps..(phase + 1) * self.taps];
            let start = base + self.first;
            let mut acc = 0.0f64;
            if start >= 0 && start + self.taps as isize <= n {
                let seg = &x[start as usize..start as usize + self.taps];
                for (c, v) in row.iter().zip(seg) {
                    acc += c * *v as f64;
                }
            } else {
                // edge samples are replicated
                for (j, c) in row.iter().enumerate() {
                    let i = (start + j as isize).clamp(0, n - 1) as usize;
                    acc += c * x[i] as f64;
                }
            }
            y.push(acc as f32);
        }
        y
    }
}

/// Number of output samples on either side of an input sample's position
/// that a rate change from `from` to `to` lets it influence.
pub fn resampling_reach(from: u32, to: u32) -> Result<usize> {
    let (p, q) = check_ratio(from, to)?;
    if from == to {
        return Ok(0);
    }
    if p < q {
        let bank = PolyphaseBank::new(p, q);
        Ok(((bank.taps as u64 * p).div_ceil(q)) as usize + 1)
    } else {
        // cubic kernel support is two input samples per side
        Ok(((2 * p).div_ceil(q)) as usize + 1)
    }
}

/// Keys cubic convolution kernel with a = -1/2.
#[inline]
pub(crate) fn keys_kernel(x: f64) -> f64 {
    let a = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        (a + 2.0) * x * x * x - (a + 3.0) * x * x + 1.0
    } else if x < 2.0 {
        a * x * x * x - 5.0 * a * x * x + 8.0 * a * x - 4.0 * a
    } else {
        0.0
    }
}

/// Keys cubic interpolation of `x` (at `from` Hz) at instants `m·from/to`,
/// `m = 0..out_len`. Edge samples are replicated.
pub fn cubic_interpolate(x: &[f32], from: u32, to: u32, out_len: usize) -> Vec<f32> {
    if x.is_empty() {
        return vec![0.0; out_len];
    }
    let (p, q) = reduced_ratio(to, from);
    let n = x.len() as isize;
    (0..out_len as u64)
        .map(|m| {
            let pos = m * q;
            let i = (pos / p) as isize;
            let frac = (pos % p) as f64 / p as f64;
            if frac == 0.0 {
                return x[i.clamp(0, n - 1) as usize];
            }
            let mut acc = 0.0;
            for k in -1..=2isize {
                let idx = (i + k).clamp(0, n - 1) as usize;
                acc += x[idx] as f64 * keys_kernel(frac - k as f64);
            }
            acc as f32
        })
        .collect()
}

fn check_ratio(from: u32, to: u32) -> Result<(u64, u64)> {
    if from == 0 || to == 0 {
        return Err(Error::BadRate);
    }
    let (p, q) = reduced_ratio(to, from);
    if p > MAX_RATIO_TERM || q > MAX_RATIO_TERM {
        return Err(Error::UnsupportedRatio { from, to });
    }
    Ok((p, q))
}

/// Output length of a rate change: `ceil(len · to / from)`.
pub fn resampled_len(len: usize, from: u32, to: u32) -> usize {
    let num = len as u64 * to as u64;
    num.div_ceil(from as u64) as usize
}

/// Changes the sampling rate of `w` to `to_rate`.
pub fn resample(w: &Waveform, to_rate: u32) -> Result<Waveform> {
    w.validate()?;
    if to_rate == w.rate {
        return Ok(w.clone());
    }
    let (p, q) = check_ratio(w.rate, to_rate)?;
    let out_len = resampled_len(w.len(), w.rate, to_rate);
    if w.is_empty() {
        return Ok(Waveform { samples: Vec::new(), rate: to_rate });
    }
    let samples = if p < q {
        PolyphaseBank::new(p, q).apply(&w.samples, out_len)
    } else {
        cubic_interpolate(&w.samples, w.rate, to_rate, out_len)
    };
    Ok(Waveform { samples, rate: to_rate })
}

/// Mean-square energy of `w` restricted to `[f_lo, f_hi)` Hz (the Nyquist bin
/// is included when `f_hi` is the Nyquist frequency). Bands that partition
/// `[0, rate/2]` sum to the total mean square.
pub fn band_energy(w: &Waveform, f_lo: f64, f_hi: f64) -> Result<f64> {
    let nyquist = w.rate as f64 / 2.0;
    if !(f_lo >= 0.0 && f_lo < f_hi && f_hi <= nyquist) {
        return Err(Error::InvalidBand { lo: f_lo, hi: f_hi });
    }
    if w.is_empty() {
        return Err(Error::Empty);
    }
    let n = w.len();
    let spec = fft::spectrum(&w.samples);
    let mut acc = 0.0;
    for (k, x) in spec.iter().enumerate().take(n / 2 + 1) {
        let f = k as f64 * w.rate as f64 / n as f64;
        let inside = f >= f_lo && (f < f_hi || (f_hi >= nyquist && f <= f_hi));
        if !inside {
            continue;
        }
        let mirrored = k != 0 && 2 * k != n;
        acc += x.norm_sqr() * if mirrored { 2.0 } else { 1.0 };
    }
    Ok(acc / (n as f64 * n as f64))
}

/// First ladder rate, scanning upward from the lowest, at which the
/// resampled signal's mean square reaches [`COARSEST_ENERGY_THRESHOLD`].
/// Returns its scale index.
pub fn select_coarsest_scale(w: &Waveform, ladder: &ScaleLadder) -> Result<usize> {
    if w.rate != ladder.origin() {
        return Err(Error::RateMismatch { left: w.rate, right: ladder.origin() });
    }
    for n in (0..ladder.len()).rev() {
        let x = resample(w, ladder.rate(n)?)?;
        if x.mean_square() >= COARSEST_ENERGY_THRESHOLD {
            return Ok(n);
        }
    }
    Err(Error::NoScaleSelected)
}

/// Which frequency band sets the noise level of a non-coarsest scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum NoiseBand {
    /// `[rate(n+1)/2, rate(n)/2]`: the band that scale `n` adds on top of the
    /// up-sampled coarser scale.
    #[default]
    Added,
    /// `[rate(n)/2, rate(n-1)/2]`: the band one step finer; empty for scale 0.
    NextFiner,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PyramidConfig {
    /// Global factor applied to every noise standard deviation.
    pub noise_scale: f64,
    pub noise_band: NoiseBand,
}

impl Default for PyramidConfig {
    fn default() -> Self {
        Self { noise_scale: 1.0, noise_band: NoiseBand::Added }
    }
}

/// Real signal at every scale plus per-scale noise levels. `levels[0]` is
/// the full-rate signal, `levels[n_coarsest]` the lowest rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisPyramid {
    pub levels: Vec<Waveform>,
    pub noise_std: Vec<f64>,
}

impl AnalysisPyramid {
    pub fn coarsest(&self) -> usize {
        self.levels.len() - 1
    }
}

/// Builds levels `0..=n_coarsest` of the pyramid of `w` over `ladder`.
pub fn build_analysis_pyramid(
    w: &Waveform,
    ladder: &ScaleLadder,
    n_coarsest: usize,
    cfg: &PyramidConfig,
) -> Result<AnalysisPyramid> {
    if w.rate != ladder.origin() {
        return Err(Error::RateMismatch { left: w.rate, right: ladder.origin() });
    }
    if n_coarsest >= ladder.len() {
        return Err(Error::BadScale(n_coarsest));
    }
    if w.is_empty() {
        return Err(Error::Empty);
    }
    let mut levels = Vec::with_capacity(n_coarsest + 1);
    levels.push(w.clone());
    for n in 1..=n_coarsest {
        levels.push(resample(w, ladder.rate(n)?)?);
    }
    let mut noise_std = Vec::with_capacity(n_coarsest + 1);
    for n in 0..=n_coarsest {
        let energy = if n == n_coarsest {
            mean_square(&levels[n].samples)
        } else {
            let (lo, hi) = match cfg.noise_band {
                NoiseBand::Added => (ladder.rate(n + 1)?, ladder.rate(n)?),
                NoiseBand::NextFiner if n == 0 => (ladder.rate(0)?, ladder.rate(0)?),
                NoiseBand::NextFiner => (ladder.rate(n)?, ladder.rate(n - 1)?),
            };
            if lo == hi {
                0.0
            } else {
                band_energy(w, lo as f64 / 2.0, hi as f64 / 2.0)?
            }
        };
        let std = cfg.noise_scale * libm::sqrt(energy);
        if !std.is_finite() {
            return Err(Error::Config(format!("noise level for scale {n} is not finite")));
        }
        noise_std.push(std.max(NOISE_STD_FLOOR));
    }
    Ok(AnalysisPyramid { levels, noise_std })
}
