//! Coarse-to-fine training of the generator pyramid.
//!
//! Scales are trained one at a time, coarsest first. While scale `n` trains,
//! every coarser generator is frozen and supplies the conditioning signal:
//! fresh noise through the whole coarser chain for the adversarial path, and
//! the fixed sequence `{z*, 0, …, 0}` for the reconstruction path.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::losses::{self, LossWeights, MssConfig};
use crate::nets::{self, BnMode, Generator, NetSpec};
use crate::optim::{scheduled_lr, Adam};
use crate::pyramid::{
    build_analysis_pyramid, cubic_interpolate, default_ladder, resampling_reach, select_coarsest_scale,
    AnalysisPyramid, PyramidConfig, ScaleLadder,
};
use crate::signal::normalize_peak;
use crate::{Error, Result, Waveform};

/// Everything that shapes a training run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f32,
    pub lr_drop_factor: f32,
    /// Epoch at which the learning rate drops; `floor(2·epochs/3)` if unset.
    pub lr_drop_epoch: Option<usize>,
    pub adam_betas: (f32, f32),
    pub d_steps_per_epoch: usize,
    pub g_steps_per_epoch: usize,
    pub seed: u64,
    pub weights: LossWeights,
    pub mss: MssConfig,
    pub net: NetSpec,
    pub pyramid: PyramidConfig,
    /// Rate ladder; the default ladder of the input rate if unset.
    pub ladder: Option<ScaleLadder>,
    /// Coarsest scale; chosen by the energy threshold if unset.
    pub coarsest: Option<usize>,
    pub inpaint: Option<InpaintMask>,
    /// Consecutive non-finite epochs tolerated before aborting.
    pub divergence_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 3000,
            lr: 0.0015,
            lr_drop_factor: 10.0,
            lr_drop_epoch: None,
            adam_betas: (0.5, 0.999),
            d_steps_per_epoch: 1,
            g_steps_per_epoch: 1,
            seed: 0,
            weights: LossWeights::speech(),
            mss: MssConfig::default(),
            net: NetSpec::default(),
            pyramid: PyramidConfig::default(),
            ladder: None,
            coarsest: None,
            inpaint: None,
            divergence_patience: 3,
        }
    }
}

impl TrainConfig {
    pub fn drop_epoch(&self) -> usize {
        self.lr_drop_epoch.unwrap_or(2 * self.epochs / 3)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.lr_drop_factor > 0.0) {
            return Err(Error::Config("learning rate and drop factor must be positive".into()));
        }
        let (b1, b2) = self.adam_betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if self.d_steps_per_epoch == 0 || self.g_steps_per_epoch == 0 {
            return Err(Error::Config("steps per epoch must be positive".into()));
        }
        if self.divergence_patience == 0 {
            return Err(Error::Config("divergence patience must be positive".into()));
        }
        self.weights.validate()?;
        self.net.validate()?;
        if self.weights.alpha2 > 0.0 {
            self.mss.validate()?;
        }
        Ok(())
    }
}

/// Temporal gap excluded from training, in full-rate samples `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InpaintMask {
    pub gap_start: usize,
    pub gap_end: usize,
}

impl InpaintMask {
    /// A gap inside a signal of `len` samples. `start == end` is an empty gap.
    pub fn new(gap_start: usize, gap_end: usize, len: usize) -> Result<Self> {
        if gap_start > gap_end || gap_end > len {
            return Err(Error::InvalidMask(format!("gap [{gap_start}, {gap_end}) outside a signal of {len} samples")));
        }
        Ok(Self { gap_start, gap_end })
    }

    pub fn len(&self) -> usize {
        self.gap_end - self.gap_start
    }

    pub fn is_empty(&self) -> bool {
        self.gap_end == self.gap_start
    }

    /// The gap on a level of `len` samples at `rate`, widened by the reach
    /// of the anti-aliasing filter that produced the level from `origin`.
    pub fn at_rate(&self, rate: u32, origin: u32, len: usize) -> Result<(usize, usize)> {
        if self.is_empty() {
            return Ok((0, 0));
        }
        let reach = resampling_reach(origin, rate)?;
        let lo = (self.gap_start as u64 * rate as u64) / origin as u64;
        let hi = (self.gap_end as u64 * rate as u64).div_ceil(origin as u64);
        let lo = (lo as usize).saturating_sub(reach);
        let hi = (hi as usize + reach).min(len);
        Ok((lo, hi))
    }

    /// Per-sample validity (`true` outside the gap) on a level.
    pub fn sample_mask(&self, rate: u32, origin: u32, len: usize) -> Result<Vec<bool>> {
        let (lo, hi) = self.at_rate(rate, origin, len)?;
        Ok((0..len).map(|i| i < lo || i >= hi).collect())
    }
}

/// Validity of each length-`window` critic window: a window is valid iff it
/// contains no masked-out sample.
pub fn window_mask(sample_mask: &[bool], window: usize) -> Vec<bool> {
    if sample_mask.len() < window || window == 0 {
        return Vec::new();
    }
    let n = sample_mask.len() - window + 1;
    let mut bad = sample_mask[..window].iter().filter(|&&v| !v).count();
    let mut out = Vec::with_capacity(n);
    out.push(bad == 0);
    for s in 1..n {
        if !sample_mask[s - 1] {
            bad -= 1;
        }
        if !sample_mask[s + window - 1] {
            bad += 1;
        }
        out.push(bad == 0);
    }
    out
}

/// Losses logged once per epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossRecord {
    pub epoch: usize,
    pub scale: usize,
    /// Critic objective: `−(E[D(real)] − E[D(fake)]) + penalty`.
    pub d_loss: f64,
    /// Generator adversarial term `−E[D(fake)]`.
    pub g_adv: f64,
    /// Weighted reconstruction loss of the reconstruction path.
    pub g_rec: f64,
    pub gp: f64,
}

impl LossRecord {
    /// `E[D(real)] − E[D(fake)]` recovered from the logged terms.
    pub fn critic_gap(&self) -> f64 {
        self.gp - self.d_loss
    }

    pub fn is_finite(&self) -> bool {
        self.d_loss.is_finite() && self.g_adv.is_finite() && self.g_rec.is_finite() && self.gp.is_finite()
    }
}

/// A trained pyramid of generators and what is needed to run it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub ladder: ScaleLadder,
    /// Index `N` of the coarsest trained scale.
    pub coarsest: usize,
    pub spec: NetSpec,
    /// `generators[n]` is the generator of scale `n`.
    pub generators: Vec<Generator>,
    pub noise_std: Vec<f64>,
    /// Training-signal length at every scale.
    pub lengths: Vec<usize>,
    /// Fixed reconstruction noise of the coarsest scale, zero-padded.
    pub z_star: Vec<f32>,
    /// Peak of the training input before normalization.
    pub input_peak: f32,
    pub weights: LossWeights,
    pub seed: u64,
    pub mask: Option<InpaintMask>,
    pub log: Vec<LossRecord>,
}

impl ModelBundle {
    pub fn origin_rate(&self) -> u32 {
        self.ladder.origin()
    }

    pub fn rate(&self, n: usize) -> u32 {
        self.ladder.rate(n).expect("scale within the ladder")
    }

    pub fn num_scales(&self) -> usize {
        self.coarsest + 1
    }

    /// Checks the structural invariants of a bundle (for instance one read
    /// back from disk).
    pub fn validate(&self) -> Result<()> {
        let n = self.num_scales();
        if self.coarsest >= self.ladder.len() {
            return Err(Error::BadScale(self.coarsest));
        }
        if self.generators.len() != n || self.noise_std.len() != n || self.lengths.len() != n {
            return Err(Error::Config(format!("bundle must describe {n} scales")));
        }
        let g = &self.generators[self.coarsest];
        if self.z_star.len() != self.lengths[self.coarsest] + g.shrink() {
            return Err(Error::LengthMismatch { left: self.z_star.len(), right: self.lengths[self.coarsest] + g.shrink() });
        }
        if !self.generators.iter().all(|g| g.net.params().all_finite())
            || !self.z_star.iter().all(|v| v.is_finite())
            || !self.noise_std.iter().all(|v| v.is_finite() && *v > 0.0)
        {
            return Err(Error::NonFinite);
        }
        Ok(())
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Independent stream seed for `(seed, a, b)`.
pub(crate) fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ a) ^ b)
}

pub(crate) fn gaussian(rng: &mut ChaCha8Rng, len: usize, std: f64) -> Vec<f32> {
    let std = std as f32;
    (0..len)
        .map(|_| {
            let n: f32 = StandardNormal.sample(rng);
            n * std
        })
        .collect()
}

/// White Gaussian noise of `length` samples with the standard deviation of
/// scale `n`.
pub fn noise_for_scale(n: usize, pyramid: &AnalysisPyramid, length: usize, seed: u64) -> Result<Vec<f32>> {
    let std = *pyramid.noise_std.get(n).ok_or(Error::BadScale(n))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(gaussian(&mut rng, length, std))
}

/// `x` with `left` zeros before and `right` zeros after.
pub fn zero_pad(x: &[f32], left: usize, right: usize) -> Vec<f32> {
    let mut v = vec![0.0; left + x.len() + right];
    v[left..left + x.len()].copy_from_slice(x);
    v
}

fn pad_for(g: &Generator, x: &[f32]) -> Vec<f32> {
    let s = g.shrink();
    zero_pad(x, s / 2, s - s / 2)
}

/// One synthesis step: `z` is padded noise, `prev` the unpadded up-sampled
/// coarser output (absent at the first scale).
pub(crate) fn synth_step(g: &Generator, z: &[f32], prev: Option<&[f32]>, mode: BnMode) -> Result<Vec<f32>> {
    match prev {
        Some(p) => g.forward_mode(z, Some(&pad_for(g, p)), mode),
        None => g.forward_mode(z, None, mode),
    }
}

/// Runs scales `from` down to `to` (inclusive). `start` is the signal of
/// scale `from + 1` (required unless `from` is the coarsest scale) and
/// `noise(k, len)` returns the unpadded noise of scale `k`.
pub(crate) fn synthesize(
    gens: &[Generator],
    ladder: &ScaleLadder,
    lengths: &[usize],
    from: usize,
    to: usize,
    start: Option<Vec<f32>>,
    noise: &mut dyn FnMut(usize, usize) -> Vec<f32>,
) -> Result<Vec<f32>> {
    let mut x = start;
    for k in (to..=from).rev() {
        let g = &gens[k];
        let prev = match x.take() {
            Some(prev) => Some(cubic_interpolate(&prev, ladder.rate(k + 1)?, ladder.rate(k)?, lengths[k])),
            None => None,
        };
        let z = pad_for(g, &noise(k, lengths[k]));
        x = Some(synth_step(g, &z, prev.as_deref(), g.default_mode())?);
    }
    x.ok_or(Error::BadScale(from))
}

struct ScaleData<'a> {
    n: usize,
    real: &'a [f32],
    std: f64,
    sample_mask: Option<Vec<bool>>,
}

/// Context shared by every scale of a run.
struct Run<'a> {
    cfg: &'a TrainConfig,
    ladder: &'a ScaleLadder,
    pyramid: &'a AnalysisPyramid,
    lengths: Vec<usize>,
    coarsest: usize,
    z_star: &'a [f32],
    /// Gap of `z*` in padded coordinates, when inpainting.
    zstar_gap: Option<(usize, usize)>,
}

impl Run<'_> {
    fn fake_conditioning(&self, n: usize, gens: &[Generator], rng: &mut ChaCha8Rng) -> Result<Option<Vec<f32>>> {
        if n == self.coarsest {
            return Ok(None);
        }
        let stds = &self.pyramid.noise_std;
        let x = synthesize(gens, self.ladder, &self.lengths, self.coarsest, n + 1, None, &mut |k, len| {
            gaussian(rng, len, stds[k])
        })?;
        Ok(Some(cubic_interpolate(&x, self.ladder.rate(n + 1)?, self.ladder.rate(n)?, self.lengths[n])))
    }

    fn reconstruction_zstar(&self, rng: &mut ChaCha8Rng) -> Vec<f32> {
        let mut z = self.z_star.to_vec();
        if let Some((a, b)) = self.zstar_gap {
            let fresh = gaussian(rng, b - a, self.pyramid.noise_std[self.coarsest]);
            z[a..b].copy_from_slice(&fresh);
        }
        z
    }

    fn recon_conditioning(&self, n: usize, gens: &[Generator], rng: &mut ChaCha8Rng) -> Result<Option<Vec<f32>>> {
        if n == self.coarsest {
            return Ok(None);
        }
        let zs = self.reconstruction_zstar(rng);
        let coarsest = self.coarsest;
        let gen_n = &gens[coarsest];
        let s = gen_n.shrink();
        let x = synthesize(gens, self.ladder, &self.lengths, coarsest, n + 1, None, &mut |k, len| {
            if k == coarsest {
                zs[s / 2..s / 2 + len].to_vec()
            } else {
                vec![0.0; len]
            }
        })?;
        Ok(Some(cubic_interpolate(&x, self.ladder.rate(n + 1)?, self.ladder.rate(n)?, self.lengths[n])))
    }
}

fn diverged(scale: usize, epoch: usize, detail: &str) -> Error {
    Error::Diverged { scale, epoch, detail: String::from(detail) }
}

/// Trains the generator of scale `data.n` against frozen coarser scales
/// `gens[n+1..]`, which are only read.
fn train_one_scale(
    run: &Run,
    data: &ScaleData,
    gens: &[Generator],
    on_epoch: &mut dyn FnMut(&LossRecord),
) -> Result<(Generator, Vec<LossRecord>)> {
    let cfg = run.cfg;
    let n = data.n;
    let (mut g, mut d) = nets::build_scale_nets(n, run.coarsest, &cfg.net, cfg.seed)?;
    let len = data.real.len();
    if len < d.window() {
        return Err(Error::TooShort { len, min: d.window() });
    }
    let win_mask = data.sample_mask.as_ref().map(|m| window_mask(m, d.window()));
    if let Some(w) = &win_mask {
        if !w.iter().any(|&v| v) {
            return Err(Error::InvalidMask(format!("no critic window at scale {n} avoids the gap")));
        }
    }
    let win_mask = win_mask.as_deref();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1, n as u64));
    let mut opt_g = Adam::new(g.net.params(), cfg.lr, cfg.adam_betas);
    let mut opt_d = Adam::new(d.net.params(), cfg.lr, cfg.adam_betas);
    let inpainting = run.zstar_gap.is_some();
    let fixed_recon = if inpainting { None } else { Some(run.recon_conditioning(n, gens, &mut rng)?) };
    let zero_noise = vec![0.0f32; len + g.shrink()];
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut bad_epochs = 0;
    let real = data.real;

    for epoch in 0..cfg.epochs {
        let lr = scheduled_lr(cfg.lr, cfg.lr_drop_factor, cfg.drop_epoch(), epoch);
        opt_g.lr = lr;
        opt_d.lr = lr;
        let fake_prev = run.fake_conditioning(n, gens, &mut rng)?;
        let z_fake = pad_for(&g, &gaussian(&mut rng, len, data.std));
        let (recon_prev, z_rec) = match &fixed_recon {
            Some(c) => (c.clone(), if n == run.coarsest { run.z_star.to_vec() } else { zero_noise.clone() }),
            None => {
                let c = run.recon_conditioning(n, gens, &mut rng)?;
                (c, if n == run.coarsest { run.reconstruction_zstar(&mut rng) } else { zero_noise.clone() })
            }
        };

        let mut record = LossRecord { epoch, scale: n, d_loss: 0.0, g_adv: 0.0, g_rec: 0.0, gp: 0.0 };
        let mut finite = true;

        for _ in 0..cfg.d_steps_per_epoch {
            let fake = synth_step(&g, &z_fake, fake_prev.as_deref(), BnMode::Batch)?;
            let mut grads = d.net.params().zeros_like();
            let (m_real, _) = d.score_and_grad(real, win_mask, Some(&mut grads))?;
            // the critic minimizes −E[D(real)] + E[D(fake)]
            grads.tensors.iter_mut().flatten().for_each(|v| *v = -*v);
            let (m_fake, _) = d.score_and_grad(&fake, win_mask, Some(&mut grads))?;
            let eps = losses::unit_uniform(&mut rng);
            let gp = match losses::discriminator_penalty(&d, real, &fake, eps, cfg.weights.lambda_gp, win_mask, &mut grads) {
                Ok(p) => p.value,
                Err(Error::NonFinite) => f64::NAN,
                Err(e) => return Err(e),
            };
            record.gp = gp;
            record.d_loss = -losses::adversarial_loss(m_real as f64, m_fake as f64) + gp;
            if record.d_loss.is_finite() && grads.all_finite() {
                opt_d.step(d.net.params_mut(), &grads);
            } else {
                finite = false;
            }
        }

        for _ in 0..cfg.g_steps_per_epoch {
            let mut grads = g.net.params().zeros_like();
            let (fake, trace) = {
                let prev = fake_prev.as_ref().map(|p| pad_for(&g, p));
                g.forward_trace(&z_fake, prev.as_deref(), BnMode::Batch)?
            };
            let (m_fake, gx) = d.score_and_grad(&fake, win_mask, None)?;
            let grad_out: Vec<f32> = gx.iter().map(|v| -v).collect();
            g.backward(&trace, &grad_out, &mut grads);
            record.g_adv = -(m_fake as f64);

            let wts = &cfg.weights;
            if wts.alpha1 > 0.0 || wts.alpha2 > 0.0 {
                let prev = recon_prev.as_ref().map(|p| pad_for(&g, p));
                let (recon, trace) = g.forward_trace(&z_rec, prev.as_deref(), BnMode::Batch)?;
                let (rec, grec) =
                    losses::reconstruction_distance_grad(real, &recon, wts, &cfg.mss, data.sample_mask.as_deref())?;
                g.backward(&trace, &grec, &mut grads);
                record.g_rec = rec;
            }
            if record.g_adv.is_finite() && record.g_rec.is_finite() && grads.all_finite() {
                opt_g.step(g.net.params_mut(), &grads);
            } else {
                finite = false;
            }
        }

        finite &= record.is_finite();
        on_epoch(&record);
        log.push(record);
        if finite {
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs >= cfg.divergence_patience {
                return Err(diverged(n, epoch, "losses or gradients were non-finite for consecutive epochs"));
            }
        }
    }

    // the stored statistics are those of the reconstruction path, so the
    // frozen generator reproduces its trained reconstruction exactly
    let recon_prev = match fixed_recon {
        Some(c) => c,
        None => run.recon_conditioning(n, gens, &mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 3, n as u64)))?,
    };
    let z_rec = if n == run.coarsest { run.z_star.to_vec() } else { zero_noise };
    let prev = recon_prev.as_ref().map(|p| pad_for(&g, p));
    g.calibrate_and_freeze(&z_rec, prev.as_deref())?;
    if !g.net.params().all_finite() {
        return Err(diverged(n, cfg.epochs, "parameters became non-finite"));
    }
    drop(d);
    Ok((g, log))
}

/// Trains scale `n` of `pyramid`. `coarser[k]` must hold the frozen
/// generator of scale `n + 1 + k` for every coarser scale; they are only
/// read. `z_star` is the padded reconstruction noise of the coarsest scale.
pub fn train_scale(
    n: usize,
    pyramid: &AnalysisPyramid,
    ladder: &ScaleLadder,
    coarser: &[Generator],
    z_star: &[f32],
    cfg: &TrainConfig,
) -> Result<(Generator, Vec<LossRecord>)> {
    cfg.validate()?;
    let coarsest = pyramid.coarsest();
    if n > coarsest || coarser.len() != coarsest - n {
        return Err(Error::BadScale(n));
    }
    if coarser.iter().any(|g| !g.frozen) {
        return Err(Error::Config("coarser generators must be frozen".into()));
    }
    let lengths: Vec<usize> = pyramid.levels.iter().map(|l| l.len()).collect();
    // index generators by scale; the slot of scale n and finer are unused
    let mut gens: Vec<Generator> = Vec::with_capacity(coarsest + 1);
    let placeholder = nets::build_scale_nets(n, coarsest, &cfg.net, 0)?.0;
    for _ in 0..=n {
        gens.push(placeholder.clone());
    }
    gens.extend(coarser.iter().cloned());
    let run = Run { cfg, ladder, pyramid, lengths, coarsest, z_star, zstar_gap: None };
    let data = ScaleData { n, real: &pyramid.levels[n].samples, std: pyramid.noise_std[n], sample_mask: None };
    train_one_scale(&run, &data, &gens, &mut |_| {})
}

/// Trains a full bundle on `w`.
pub fn train(w: &Waveform, cfg: &TrainConfig) -> Result<ModelBundle> {
    train_with_progress(w, cfg, &mut |_| {})
}

/// Gap-aware training: the gap is excluded from every loss and its part of
/// the reconstruction noise is redrawn at every step.
pub fn inpaint_train(w: &Waveform, mask: InpaintMask, cfg: &TrainConfig) -> Result<ModelBundle> {
    let cfg = TrainConfig { inpaint: Some(mask), ..cfg.clone() };
    train(w, &cfg)
}

/// [`train`] with a callback invoked after every epoch.
pub fn train_with_progress(w: &Waveform, cfg: &TrainConfig, on_epoch: &mut dyn FnMut(&LossRecord)) -> Result<ModelBundle> {
    cfg.validate()?;
    let input_peak = w.peak();
    let x = normalize_peak(w)?;
    let ladder = match &cfg.ladder {
        Some(l) => l.clone(),
        None => default_ladder(x.rate)?,
    };
    if ladder.origin() != x.rate {
        return Err(Error::RateMismatch { left: x.rate, right: ladder.origin() });
    }
    let mask = match cfg.inpaint {
        Some(m) if m.is_empty() => None,
        Some(m) => Some(InpaintMask::new(m.gap_start, m.gap_end, x.len())?),
        None => None,
    };
    // the gap content is unknown; keep it from leaking into neighbouring
    // samples through the anti-aliasing filters
    let x = match mask {
        Some(m) => {
            let mut s = x.samples.clone();
            s[m.gap_start..m.gap_end].iter_mut().for_each(|v| *v = 0.0);
            Waveform { samples: s, rate: x.rate }
        }
        None => x,
    };
    let coarsest = match cfg.coarsest {
        Some(n) if n < ladder.len() => n,
        Some(n) => return Err(Error::BadScale(n)),
        None => select_coarsest_scale(&x, &ladder)?,
    };
    let pyramid = build_analysis_pyramid(&x, &ladder, coarsest, &cfg.pyramid)?;
    let lengths: Vec<usize> = pyramid.levels.iter().map(|l| l.len()).collect();

    let coarse_g = nets::build_scale_nets(coarsest, coarsest, &cfg.net, cfg.seed)?.0;
    let shrink = coarse_g.shrink();
    let mut zrng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 2, 0));
    let core = gaussian(&mut zrng, lengths[coarsest], pyramid.noise_std[coarsest]);
    let z_star = zero_pad(&core, shrink / 2, shrink - shrink / 2);

    let mut sample_masks = Vec::with_capacity(coarsest + 1);
    for n in 0..=coarsest {
        sample_masks.push(match mask {
            Some(m) => Some(m.sample_mask(ladder.rate(n)?, ladder.origin(), lengths[n])?),
            None => None,
        });
    }
    let zstar_gap = match mask {
        Some(m) => {
            let (lo, hi) = m.at_rate(ladder.rate(coarsest)?, ladder.origin(), lengths[coarsest])?;
            let window = receptive_window(&cfg.net);
            if lengths[coarsest] <= (hi - lo) + window {
                return Err(Error::InvalidMask(format!(
                    "gap of {} samples plus the receptive field of {window} does not fit the coarsest level of {} samples",
                    hi - lo,
                    lengths[coarsest]
                )));
            }
            Some((lo + shrink / 2, hi + shrink / 2))
        }
        None => None,
    };

    let run = Run { cfg, ladder: &ladder, pyramid: &pyramid, lengths: lengths.clone(), coarsest, z_star: &z_star, zstar_gap };
    let mut gens: Vec<Option<Generator>> = vec![None; coarsest + 1];
    let mut log = Vec::new();
    for n in (0..=coarsest).rev() {
        let data = ScaleData {
            n,
            real: &pyramid.levels[n].samples,
            std: pyramid.noise_std[n],
            sample_mask: sample_masks[n].clone(),
        };
        let view: Vec<Generator> = gens
            .iter()
            .map(|g| g.clone().unwrap_or_else(|| coarse_g.clone()))
            .collect();
        let (g, l) = train_one_scale(&run, &data, &view, on_epoch)?;
        gens[n] = Some(g);
        log.extend(l);
    }
    let bundle = ModelBundle {
        ladder,
        coarsest,
        spec: cfg.net.clone(),
        generators: gens.into_iter().map(|g| g.expect("every scale trained")).collect(),
        noise_std: pyramid.noise_std.clone(),
        lengths,
        z_star,
        input_peak,
        weights: cfg.weights,
        seed: cfg.seed,
        mask,
        log,
    };
    bundle.validate()?;
    Ok(bundle)
}

fn receptive_window(spec: &NetSpec) -> usize {
    nets::receptive_field(spec).discriminator_support
}

/// Deterministic output of the reconstruction noise `{z*, 0, …, 0}`, in
/// the normalized amplitude domain of training.
pub fn reconstruct_normalized(bundle: &ModelBundle) -> Result<Vec<f32>> {
    let n = bundle.coarsest;
    let s = bundle.generators[n].shrink();
    let z = &bundle.z_star;
    synthesize(&bundle.generators, &bundle.ladder, &bundle.lengths, n, 0, None, &mut |k, len| {
        if k == n {
            z[s / 2..s / 2 + len].to_vec()
        } else {
            vec![0.0; len]
        }
    })
}
