//! Training objectives: the Wasserstein critic gap, the gradient penalty,
//! and the reconstruction loss (squared error plus a multi-resolution
//! spectrogram distance).

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fft::{Complex64, Stft, StftParams};
use crate::nets::{mean_weights, BnMode, Discriminator, Grads};
use crate::real::Dual;
use crate::{Error, Result, Waveform};

/// Gradient-penalty weight used by every preset.
pub const DEFAULT_LAMBDA_GP: f64 = 0.01;

/// Weights of the terms of the joint objective.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossWeights {
    /// Squared-error reconstruction weight.
    pub alpha1: f64,
    /// Spectrogram-distance reconstruction weight.
    pub alpha2: f64,
    pub lambda_gp: f64,
}

impl LossWeights {
    /// Speech, bandwidth extension and inpainting.
    pub const fn speech() -> Self {
        Self { alpha1: 10.0, alpha2: 0.0, lambda_gp: DEFAULT_LAMBDA_GP }
    }

    /// Music and variations.
    pub const fn music() -> Self {
        Self { alpha1: 0.0, alpha2: 1e-4, lambda_gp: DEFAULT_LAMBDA_GP }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if ok(self.alpha1) && ok(self.alpha2) && ok(self.lambda_gp) {
            Ok(())
        } else {
            Err(Error::Config(alloc::format!("loss weights must be finite and non-negative: {self:?}")))
        }
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::speech()
    }
}

/// STFT resolutions of the spectrogram distance.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MssConfig {
    pub sets: Vec<StftParams>,
}

impl Default for MssConfig {
    fn default() -> Self {
        let set = |window, hop, fft_size| StftParams { window, hop, fft_size, center: true };
        Self { sets: vec![set(240, 50, 512), set(600, 120, 1024), set(1200, 240, 2048)] }
    }
}

impl MssConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sets.is_empty() {
            return Err(Error::Config("no STFT parameter sets".into()));
        }
        for s in &self.sets {
            if s.window == 0 || s.hop == 0 || s.window > s.fft_size || s.hop > s.window {
                return Err(Error::Config(alloc::format!("invalid STFT parameters {s:?}")));
            }
        }
        Ok(())
    }

    /// Parameter sets whose window fits in a signal of `len` samples.
    pub fn usable(&self, len: usize) -> impl Iterator<Item = &StftParams> {
        self.sets.iter().filter(move |s| s.window <= len)
    }
}

/// Critic objective `E[D(real)] − E[D(fake)]` (maximized by the critic).
pub fn adversarial_loss(d_real_mean: f64, d_fake_mean: f64) -> f64 {
    d_real_mean - d_fake_mean
}

/// Anything that yields a mean score and its input gradient.
pub trait Critic {
    fn mean_score_grad(&self, x: &[f32]) -> Result<(f64, Vec<f32>)>;
}

impl Critic for Discriminator {
    fn mean_score_grad(&self, x: &[f32]) -> Result<(f64, Vec<f32>)> {
        let (m, g) = self.score_and_grad(x, None, None)?;
        Ok((m as f64, g))
    }
}

/// Value of a gradient-penalty evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalty {
    /// `λ (‖∇D(x̂)‖ − 1)²`.
    pub value: f64,
    pub grad_norm: f64,
    pub epsilon: f32,
}

/// Mixing weight `ε ~ U[0, 1]` for one penalty evaluation.
pub fn penalty_epsilon(seed: u64) -> f32 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    unit_uniform(&mut rng)
}

pub(crate) fn unit_uniform(rng: &mut impl RngCore) -> f32 {
    (rng.next_u32() >> 8) as f32 / (1u32 << 24) as f32
}

fn interpolate(real: &[f32], fake: &[f32], eps: f32) -> Result<Vec<f32>> {
    if real.len() != fake.len() {
        return Err(Error::LengthMismatch { left: real.len(), right: fake.len() });
    }
    Ok(real.iter().zip(fake).map(|(r, f)| eps * r + (1.0 - eps) * f).collect())
}

fn l2(x: &[f32]) -> f64 {
    libm::sqrt(x.iter().map(|&v| v as f64 * v as f64).sum())
}

/// Penalty at the point `ε·real + (1−ε)·fake`.
pub fn gradient_penalty_at<C: Critic + ?Sized>(
    critic: &C,
    real: &[f32],
    fake: &[f32],
    eps: f32,
    lambda: f64,
) -> Result<Penalty> {
    let x = interpolate(real, fake, eps)?;
    let (_, g) = critic.mean_score_grad(&x)?;
    let n = l2(&g);
    if !n.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(Penalty { value: lambda * (n - 1.0) * (n - 1.0), grad_norm: n, epsilon: eps })
}

/// Penalty with the mixing weight drawn from `seed`.
pub fn gradient_penalty<C: Critic + ?Sized>(
    critic: &C,
    real: &[f32],
    fake: &[f32],
    lambda: f64,
    seed: u64,
) -> Result<Penalty> {
    gradient_penalty_at(critic, real, fake, penalty_epsilon(seed), lambda)
}

/// Penalty of a critic together with its parameter gradient, accumulated
/// into `grads`. Scores are averaged over the windows selected by `mask`.
///
/// With `g = ∇ₓD(x̂)`, the parameter gradient of `‖g‖` is
/// `(∂g/∂θ)ᵀ g / ‖g‖`, i.e. the directional derivative of `∇_θ D` at `x̂`
/// along `g`. It is obtained exactly by running the ordinary backward pass
/// on dual numbers seeded with the tangent `g`.
pub fn discriminator_penalty(
    d: &Discriminator,
    real: &[f32],
    fake: &[f32],
    eps: f32,
    lambda: f64,
    mask: Option<&[bool]>,
    grads: &mut Grads,
) -> Result<Penalty> {
    let x = interpolate(real, fake, eps)?;
    let (_, g) = d.score_and_grad(&x, mask, None)?;
    let n = l2(&g);
    if !n.is_finite() {
        return Err(Error::NonFinite);
    }
    let value = lambda * (n - 1.0) * (n - 1.0);
    if lambda > 0.0 && n > 0.0 {
        let seeded: Vec<Dual> = x.iter().zip(&g).map(|(&v, &t)| Dual::new(v, t)).collect();
        let trace = d.net.forward::<Dual>(&seeded, BnMode::Batch)?;
        let w: Vec<Dual> = mean_weights(trace.output.len(), mask).into_iter().map(|v| Dual::new(v, 0.0)).collect();
        let mut tangent = d.net.params().zeros_like();
        d.net.backward(&trace, &w, |s| s.d, &mut tangent, false);
        let coef = (lambda * 2.0 * (n - 1.0) / n) as f32;
        grads.add_scaled(&tangent, coef);
    }
    Ok(Penalty { value, grad_norm: n, epsilon: eps })
}

fn check_pair(a: &[f32], b: &[f32]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    Ok(())
}

fn stft_magnitudes(stft: &Stft, x: &[f32]) -> (Vec<Complex64>, Vec<f64>) {
    let spec = stft.forward(x);
    let mags = spec.iter().map(|c| c.norm()).collect();
    (spec, mags)
}

fn mss_impl(a: &[f32], b: &[f32], cfg: &MssConfig, mut grad_b: Option<&mut [f64]>) -> Result<f64> {
    check_pair(a, b)?;
    cfg.validate()?;
    let sets: Vec<StftParams> = cfg.usable(a.len()).copied().collect();
    if sets.is_empty() {
        let min = cfg.sets.iter().map(|s| s.window).min().unwrap_or(0);
        return Err(Error::TooShort { len: a.len(), min });
    }
    let m = sets.len() as f64;
    let mut total = 0.0;
    for p in sets {
        let stft = Stft::new(p);
        let (_, ma) = stft_magnitudes(&stft, a);
        let (sb, mb) = stft_magnitudes(&stft, b);
        let diff: Vec<f64> = ma.iter().zip(&mb).map(|(x, y)| x - y).collect();
        let norm = libm::sqrt(diff.iter().map(|d| d * d).sum());
        total += norm / m;
        if let Some(gb) = grad_b.as_deref_mut() {
            if norm > 0.0 {
                // ∂‖|A|−|B|‖/∂B = −(|A|−|B|)/‖·‖ · B/|B|
                let gs: Vec<Complex64> = sb
                    .iter()
                    .zip(&mb)
                    .zip(&diff)
                    .map(|((c, &mag), &d)| if mag > 0.0 { c * (-d / (norm * mag * m)) } else { Complex64::new(0.0, 0.0) })
                    .collect();
                stft.backward(&gs, gb);
            }
        }
    }
    Ok(total)
}

/// Mean over the usable STFT resolutions of the Frobenius norm of the
/// magnitude-spectrogram difference. Resolutions whose window exceeds the
/// signal are skipped; an error is returned only when none fits.
pub fn mss_distance(a: &[f32], b: &[f32], cfg: &MssConfig) -> Result<f64> {
    mss_impl(a, b, cfg, None)
}

/// [`mss_distance`] and its gradient with respect to `b`.
pub fn mss_distance_grad(a: &[f32], b: &[f32], cfg: &MssConfig) -> Result<(f64, Vec<f64>)> {
    let mut g = vec![0.0; b.len()];
    let v = mss_impl(a, b, cfg, Some(&mut g))?;
    Ok((v, g))
}

/// [`mss_distance`] of two waveforms at the same rate.
pub fn mss_loss(a: &Waveform, b: &Waveform, cfg: &MssConfig) -> Result<f64> {
    if a.rate != b.rate {
        return Err(Error::RateMismatch { left: a.rate, right: b.rate });
    }
    mss_distance(&a.samples, &b.samples, cfg)
}

fn masked(x: &[f32], mask: Option<&[bool]>) -> Vec<f32> {
    match mask {
        None => x.to_vec(),
        Some(m) => x.iter().zip(m).map(|(&v, &k)| if k { v } else { 0.0 }).collect(),
    }
}

fn check_mask(len: usize, mask: Option<&[bool]>) -> Result<()> {
    match mask {
        Some(m) if m.len() != len => Err(Error::LengthMismatch { left: len, right: m.len() }),
        _ => Ok(()),
    }
}

/// `α1·Σ(real − recon)² + α2·MSS(real, recon)` restricted to the samples
/// where `mask` is true (all samples when absent); masked-out samples are
/// zeroed in both signals before the spectrogram term.
pub fn reconstruction_distance(
    real: &[f32],
    recon: &[f32],
    wts: &LossWeights,
    cfg: &MssConfig,
    mask: Option<&[bool]>,
) -> Result<f64> {
    reconstruction_impl(real, recon, wts, cfg, mask, false).map(|(v, _)| v)
}

/// [`reconstruction_distance`] and its gradient with respect to `recon`.
pub fn reconstruction_distance_grad(
    real: &[f32],
    recon: &[f32],
    wts: &LossWeights,
    cfg: &MssConfig,
    mask: Option<&[bool]>,
) -> Result<(f64, Vec<f32>)> {
    reconstruction_impl(real, recon, wts, cfg, mask, true)
}

fn reconstruction_impl(
    real: &[f32],
    recon: &[f32],
    wts: &LossWeights,
    cfg: &MssConfig,
    mask: Option<&[bool]>,
    want_grad: bool,
) -> Result<(f64, Vec<f32>)> {
    check_pair(real, recon)?;
    check_mask(real.len(), mask)?;
    let keep = |i: usize| mask.is_none_or(|m| m[i]);
    let mut value = 0.0;
    let mut grad = vec![0.0f64; if want_grad { recon.len() } else { 0 }];
    if wts.alpha1 > 0.0 {
        for (i, (&x, &y)) in real.iter().zip(recon).enumerate() {
            if keep(i) {
                let d = y as f64 - x as f64;
                value += wts.alpha1 * d * d;
                if want_grad {
                    grad[i] += 2.0 * wts.alpha1 * d;
                }
            }
        }
    }
    if wts.alpha2 > 0.0 {
        let (a, b) = (masked(real, mask), masked(recon, mask));
        if want_grad {
            let mut g = vec![0.0; b.len()];
            value += wts.alpha2 * mss_impl(&a, &b, cfg, Some(&mut g))?;
            for (i, v) in g.into_iter().enumerate() {
                if keep(i) {
                    grad[i] += wts.alpha2 * v;
                }
            }
        } else {
            value += wts.alpha2 * mss_distance(&a, &b, cfg)?;
        }
    }
    Ok((value, grad.into_iter().map(|v| v as f32).collect()))
}

/// [`reconstruction_distance`] of two waveforms at the same rate.
pub fn reconstruction_loss(real: &Waveform, recon: &Waveform, wts: &LossWeights, cfg: &MssConfig) -> Result<f64> {
    if real.rate != recon.rate {
        return Err(Error::RateMismatch { left: real.rate, right: recon.rate });
    }
    reconstruction_distance(&real.samples, &recon.samples, wts, cfg, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::NetSpec;

    struct MeanCritic;

    impl Critic for MeanCritic {
        fn mean_score_grad(&self, x: &[f32]) -> Result<(f64, Vec<f32>)> {
            let n = x.len() as f32;
            Ok((x.iter().sum::<f32>() as f64 / n as f64, vec![1.0 / n; x.len()]))
        }
    }

    fn noise(len: usize, seed: u64) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| unit_uniform(&mut rng) * 2.0 - 1.0).collect()
    }

    #[test]
    fn presets() {
        assert_eq!(LossWeights::speech(), LossWeights { alpha1: 10.0, alpha2: 0.0, lambda_gp: 0.01 });
        assert_eq!(LossWeights::music(), LossWeights { alpha1: 0.0, alpha2: 1e-4, lambda_gp: 0.01 });
        assert!(LossWeights { alpha1: -1.0, ..LossWeights::speech() }.validate().is_err());
    }

    #[test]
    fn critic_gap() {
        assert_eq!(adversarial_loss(0.3, 0.3), 0.0);
        assert_eq!(adversarial_loss(1.0, 0.0), 1.0);
    }

    #[test]
    fn mean_critic_penalty() {
        let l = 64;
        let p = gradient_penalty(&MeanCritic, &noise(l, 1), &noise(l, 2), 0.01, 3).unwrap();
        let expect = 0.01 * (1.0 / (l as f64).sqrt() - 1.0).powi(2);
        assert!((p.value - expect).abs() < 1e-9);
        let p = gradient_penalty(&MeanCritic, &[0.5], &[0.1], 0.01, 3).unwrap();
        assert!(p.value.abs() < 1e-12);
        assert!(gradient_penalty(&MeanCritic, &[0.5], &[0.1, 0.2], 0.01, 3).is_err());
    }

    #[test]
    fn epsilon_is_seeded_and_in_range() {
        assert_eq!(penalty_epsilon(5), penalty_epsilon(5));
        for s in 0..100 {
            let e = penalty_epsilon(s);
            assert!((0.0..=1.0).contains(&e));
        }
    }

    #[test]
    fn penalty_parameter_gradient_matches_finite_differences() {
        let spec = NetSpec { n_blocks: 3, kernel: 3, channels_coarse: 3, channels_fine: 3, ..NetSpec::default() };
        let d = Discriminator::new(&spec, 3, 4).unwrap();
        let len = d.window() + 30;
        let (real, fake) = (noise(len, 5), noise(len, 6));
        let eps = 0.3;
        let lambda = 1.0;
        let mut grads = d.net.params().zeros_like();
        discriminator_penalty(&d, &real, &fake, eps, lambda, None, &mut grads).unwrap();
        let value = |d: &Discriminator| {
            let mut g = d.net.params().zeros_like();
            discriminator_penalty(d, &real, &fake, eps, lambda, None, &mut g).unwrap().value
        };
        let h = 1e-3f32;
        let v0 = value(&d);
        let mut worst = 0.0f64;
        for ti in 0..grads.tensors.len() {
            if !d.net.params().tensors[ti].trainable {
                continue;
            }
            for i in (0..grads.tensors[ti].len()).step_by(4) {
                let mut a = d.clone();
                a.net.params_mut().get_mut(ti)[i] += h;
                let mut b = d.clone();
                b.net.params_mut().get_mut(ti)[i] -= h;
                let fwd = (value(&a) - v0) / h as f64;
                let bwd = (v0 - value(&b)) / h as f64;
                let an = grads.tensors[ti][i] as f64;
                worst = worst.max((fwd - an).abs().min((bwd - an).abs()) / (1e-2 + an.abs()));
            }
        }
        assert!(worst < 5e-2, "worst relative error {worst}");
    }

    #[test]
    fn mss_basic_properties() {
        let cfg = MssConfig::default();
        let a = noise(3000, 1);
        let b = noise(3000, 2);
        assert_eq!(mss_distance(&a, &a, &cfg).unwrap(), 0.0);
        let neg: Vec<f32> = a.iter().map(|v| -v).collect();
        assert!(mss_distance(&a, &neg, &cfg).unwrap() < 1e-9);
        let ab = mss_distance(&a, &b, &cfg).unwrap();
        let ba = mss_distance(&b, &a, &cfg).unwrap();
        assert!(ab > 0.0 && (ab - ba).abs() < 1e-9 * ab);
    }

    #[test]
    fn mss_skips_oversized_windows() {
        let cfg = MssConfig::default();
        let a = noise(700, 1);
        let b = noise(700, 2);
        let only_small = MssConfig { sets: cfg.sets[..2].to_vec() };
        assert_eq!(mss_distance(&a, &b, &cfg).unwrap(), mss_distance(&a, &b, &only_small).unwrap());
        assert!(matches!(mss_distance(&a[..200], &b[..200], &cfg), Err(Error::TooShort { .. })));
    }

    #[test]
    fn reconstruction_single_sample() {
        let real = noise(100, 3);
        let mut recon = real.clone();
        recon[17] += 0.25;
        let w = LossWeights { alpha1: 1.0, alpha2: 0.0, lambda_gp: 0.0 };
        let v = reconstruction_distance(&real, &recon, &w, &MssConfig::default(), None).unwrap();
        assert!((v - 0.0625).abs() < 1e-7);
        let mut mask = vec![true; 100];
        mask[17] = false;
        assert_eq!(reconstruction_distance(&real, &recon, &w, &MssConfig::default(), Some(&mask)).unwrap(), 0.0);
    }

    #[test]
    fn reconstruction_gradient_with_mask() {
        let cfg = MssConfig::default();
        let w = LossWeights { alpha1: 1.0, alpha2: 0.5, lambda_gp: 0.0 };
        let real = noise(1000, 8);
        let recon = noise(1000, 9);
        let mut mask = vec![true; 1000];
        mask[300..420].iter_mut().for_each(|m| *m = false);
        let (_, g) = reconstruction_distance_grad(&real, &recon, &w, &cfg, Some(&mask)).unwrap();
        assert!(g[300..420].iter().all(|&v| v == 0.0));
        for i in [0usize, 250, 299, 420, 777, 999] {
            let h = 1e-3;
            let mut a = recon.clone();
            a[i] += h;
            let mut b = recon.clone();
            b[i] -= h;
            let fd = (reconstruction_distance(&real, &a, &w, &cfg, Some(&mask)).unwrap()
                - reconstruction_distance(&real, &b, &w, &cfg, Some(&mask)).unwrap())
                / (2.0 * h as f64);
            assert!((fd - g[i] as f64).abs() < 1e-2 * (1e-3 + fd.abs()), "{i}: {fd} vs {}", g[i]);
        }
    }
}
