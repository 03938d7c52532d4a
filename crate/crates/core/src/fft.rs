//! Discrete Fourier transforms and short-time spectra.
//!
//! Power-of-two sizes use an iterative radix-2 kernel; every other size goes
//! through Bluestein's chirp-z reformulation on top of it, so any length is
//! supported exactly.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

pub use num_complex::Complex64;

/// A reusable transform of one fixed length.
#[derive(Debug, Clone)]
pub struct Fft {
    n: usize,
    kind: Kind,
}

#[derive(Debug, Clone)]
enum Kind {
    Radix2 { twiddles: Vec<Complex64>, rev: Vec<usize> },
    Bluestein(Box<Bluestein>),
}

#[derive(Debug, Clone)]
struct Bluestein {
    inner: Fft,
    chirp: Vec<Complex64>,
    filter: Vec<Complex64>,
}

impl Fft {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "transform length must be positive");
        if n.is_power_of_two() {
            Self::radix2(n)
        } else {
            Self::bluestein(n)
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn radix2(n: usize) -> Self {
        let bits = n.trailing_zeros();
        let rev = (0..n)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
            .collect();
        let twiddles = (0..n / 2)
            .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
            .collect();
        Self { n, kind: Kind::Radix2 { twiddles, rev } }
    }

    fn bluestein(n: usize) -> Self {
        let m = (2 * n - 1).next_power_of_two();
        let inner = Self::radix2(m);
        // chirp[k] = exp(-iπk²/n); k² taken mod 2n to keep the phase small
        let chirp: Vec<Complex64> = (0..n)
            .map(|k| {
                let kk = ((k as u128 * k as u128) % (2 * n as u128)) as f64;
                Complex64::from_polar(1.0, -PI * kk / n as f64)
            })
            .collect();
        let mut filter = vec![Complex64::new(0.0, 0.0); m];
        filter[0] = chirp[0].conj();
        for k in 1..n {
            filter[k] = chirp[k].conj();
            filter[m - k] = chirp[k].conj();
        }
        inner.forward(&mut filter);
        Self { n, kind: Kind::Bluestein(Box::new(Bluestein { inner, chirp, filter })) }
    }

    /// In-place forward transform, `X[k] = Σ x[t]·exp(-2πikt/n)`.
    pub fn forward(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.n);
        match &self.kind {
            Kind::Radix2 { twiddles, rev } => radix2_in_place(buf, twiddles, rev),
            Kind::Bluestein(b) => {
                let m = b.filter.len();
                let mut work = vec![Complex64::new(0.0, 0.0); m];
                for (w, (x, c)) in work.iter_mut().zip(buf.iter().zip(&b.chirp)) {
                    *w = x * c;
                }
                b.inner.forward(&mut work);
                for (w, f) in work.iter_mut().zip(&b.filter) {
                    *w *= f;
                }
                b.inner.inverse(&mut work);
                let scale = 1.0 / m as f64;
                for (x, (w, c)) in buf.iter_mut().zip(work.iter().zip(&b.chirp)) {
                    *x = w * c * scale;
                }
            }
        }
    }

    /// In-place unnormalized inverse transform (`n · IDFT`).
    pub fn inverse(&self, buf: &mut [Complex64]) {
        for x in buf.iter_mut() {
            *x = x.conj();
        }
        self.forward(buf);
        for x in buf.iter_mut() {
            *x = x.conj();
        }
    }
}

fn radix2_in_place(buf: &mut [Complex64], twiddles: &[Complex64], rev: &[usize]) {
    let n = buf.len();
    for i in 0..n {
        let j = rev[i];
        if i < j {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = twiddles[k * step];
                let a = buf[start + k];
                let b = buf[start + k + half] * w;
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
}

/// Full complex spectrum of a real signal.
pub fn spectrum(x: &[f32]) -> Vec<Complex64> {
    let plan = Fft::new(x.len());
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v as f64, 0.0)).collect();
    plan.forward(&mut buf);
    buf
}

/// Periodic Hann window (the convention of most STFT front-ends).
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.5 - 0.5 * libm::cos(2.0 * PI * i as f64 / len as f64))
        .collect()
}

/// Framing and padding conventions of a short-time transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StftParams {
    pub window: usize,
    pub hop: usize,
    pub fft_size: usize,
    /// Pad `fft_size / 2` samples on each side by reflection and center frames.
    pub center: bool,
}

impl StftParams {
    pub fn frames(&self, len: usize) -> usize {
        if self.center {
            1 + len / self.hop
        } else if len < self.fft_size.max(self.window) {
            0
        } else {
            (len - self.fft_size.max(self.window)) / self.hop + 1
        }
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }
}

/// Index into a signal extended by even reflection (no edge repeat), valid for
/// any offset.
#[inline]
pub(crate) fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= len as isize {
        j = period - j;
    }
    j as usize
}

/// Short-time transform of a real signal, windowed by a Hann window that is
/// zero-padded (centered) to the FFT size. Returns `frames × bins` complex
/// values, row-major by frame.
#[derive(Debug, Clone)]
pub struct Stft {
    pub params: StftParams,
    plan: Fft,
    /// Window already embedded in an `fft_size` frame.
    frame_window: Vec<f64>,
}

impl Stft {
    pub fn new(params: StftParams) -> Self {
        assert!(params.window <= params.fft_size && params.hop > 0);
        let w = hann(params.window);
        let off = (params.fft_size - params.window) / 2;
        let mut frame_window = vec![0.0; params.fft_size];
        frame_window[off..off + params.window].copy_from_slice(&w);
        Self { params, plan: Fft::new(params.fft_size), frame_window }
    }

    /// Start offset (in the unpadded signal) of frame `f`.
    #[inline]
    fn frame_start(&self, f: usize) -> isize {
        let base = (f * self.params.hop) as isize;
        if self.params.center {
            base - (self.params.fft_size / 2) as isize
        } else {
            base
        }
    }

    pub fn forward(&self, x: &[f32]) -> Vec<Complex64> {
        let p = self.params;
        let frames = p.frames(x.len());
        let bins = p.bins();
        let mut out = Vec::with_capacity(frames * bins);
        let mut buf = vec![Complex64::new(0.0, 0.0); p.fft_size];
        for f in 0..frames {
            let start = self.frame_start(f);
            for (j, b) in buf.iter_mut().enumerate() {
                let w = self.frame_window[j];
                *b = if w == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    let idx = reflect_index(start + j as isize, x.len());
                    Complex64::new(x[idx] as f64 * w, 0.0)
                };
            }
            self.plan.forward(&mut buf);
            out.extend_from_slice(&buf[..bins]);
        }
        out
    }

    /// Adjoint of [`Stft::forward`] viewed as a real-linear map: given
    /// `∂L/∂Re X + i·∂L/∂Im X` for every retained bin, accumulate `∂L/∂x`.
    pub fn backward(&self, grad_spec: &[Complex64], grad_x: &mut [f64]) {
        let p = self.params;
        let frames = p.frames(grad_x.len());
        let bins = p.bins();
        assert_eq!(grad_spec.len(), frames * bins);
        let len = grad_x.len();
        let mut buf = vec![Complex64::new(0.0, 0.0); p.fft_size];
        for f in 0..frames {
            buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
            buf[..bins].copy_from_slice(&grad_spec[f * bins..(f + 1) * bins]);
            // Re Σ_k g_k·exp(+2πijk/N) for each frame sample j
            self.plan.inverse(&mut buf);
            let start = self.frame_start(f);
            for (j, b) in buf.iter().enumerate() {
                let w = self.frame_window[j];
                if w != 0.0 {
                    grad_x[reflect_index(start + j as isize, len)] += w * b.re;
                }
            }
        }
    }
}
