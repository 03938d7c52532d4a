//! Per-scale generator and critic.
//!
//! Both networks are stacks of dilated convolutions (dilation doubling from
//! 1) where every block but the last is followed by batch normalization and
//! a leaky ReLU. The generator finishes with a gated unit (tanh ⊙ sigmoid,
//! each branch behind its own undilated convolution), a 1×1 convolution and
//! a fixed pre-emphasis filter; the critic finishes with a 1×1 convolution
//! that emits one score per input window. No layer pads internally, so the
//! output is shorter than the input by the impulse-response support minus
//! one. All convolutions are weight-normalized.

mod layers;
mod params;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub use params::{Grads, ParamSet, Tensor};

use crate::real::Real;
use crate::{Error, Result};
use layers::{BnCache, Conv, ConvWeights};

/// How the noise and the up-sampled coarser signal enter the generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Fusion {
    /// One input channel carrying `z + prev_up`.
    #[default]
    Sum,
    /// Two input channels `[z, prev_up]`.
    Concat,
}

/// Shape of one scale's networks.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NetSpec {
    pub n_blocks: usize,
    pub kernel: usize,
    /// Width at the coarsest scale.
    pub channels_coarse: usize,
    /// Width at every other scale.
    pub channels_fine: usize,
    pub leaky_slope: f32,
    pub pe_coeffs: Vec<f32>,
    pub fusion: Fusion,
}

impl Default for NetSpec {
    fn default() -> Self {
        Self {
            n_blocks: 8,
            kernel: 9,
            channels_coarse: 16,
            channels_fine: 96,
            leaky_slope: 0.2,
            pe_coeffs: vec![1.0, -0.97],
            fusion: Fusion::Sum,
        }
    }
}

impl NetSpec {
    pub fn dilations(&self) -> Vec<usize> {
        (0..self.n_blocks).map(|i| 1usize << i).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_blocks == 0 || self.n_blocks > 24 {
            return Err(Error::Config(format!("n_blocks = {} out of range 1..=24", self.n_blocks)));
        }
        if self.kernel == 0 || self.channels_coarse == 0 || self.channels_fine == 0 {
            return Err(Error::Config("kernel and channel counts must be positive".into()));
        }
        if self.pe_coeffs.is_empty() {
            return Err(Error::Config("pre-emphasis filter needs at least one tap".into()));
        }
        Ok(())
    }

    pub fn channels_for(&self, scale: usize, coarsest: usize) -> usize {
        if scale == coarsest {
            self.channels_coarse
        } else {
            self.channels_fine
        }
    }
}

/// Receptive-field figures of a [`NetSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReceptiveField {
    /// `Σ (kernel − 1) · dilation` over the dilated stack.
    pub dilated_span: usize,
    /// Impulse-response support of the dilated stack alone (`span + 1`).
    pub stack_support: usize,
    /// Support of the full generator: stack, gate convolution, pre-emphasis.
    pub generator_support: usize,
    /// Support of the critic (stack plus 1×1 head).
    pub discriminator_support: usize,
}

impl ReceptiveField {
    /// Samples lost between generator input and output.
    pub fn generator_shrink(&self) -> usize {
        self.generator_support - 1
    }

    pub fn discriminator_shrink(&self) -> usize {
        self.discriminator_support - 1
    }

    /// Zero padding `(left, right)` that makes generator output length equal
    /// to the unpadded input length.
    pub fn generator_padding(&self) -> (usize, usize) {
        let s = self.generator_shrink();
        (s / 2, s - s / 2)
    }
}

pub fn receptive_field(spec: &NetSpec) -> ReceptiveField {
    let span: usize = spec.dilations().iter().map(|d| (spec.kernel - 1) * d).sum();
    ReceptiveField {
        dilated_span: span,
        stack_support: span + 1,
        generator_support: span + (spec.kernel - 1) + (spec.pe_coeffs.len() - 1) + 1,
        discriminator_support: span + 1,
    }
}

/// Fixed pre-emphasis `y[t] = x[t] − 0.97·x[t−1]` with `x[−1] = 0`.
pub fn pre_emphasis(x: &[f32]) -> Vec<f32> {
    pre_emphasis_with(x, &[1.0, -0.97])
}

/// Causal FIR with zero initial state and arbitrary taps.
pub fn pre_emphasis_with(x: &[f32], coeffs: &[f32]) -> Vec<f32> {
    (0..x.len())
        .map(|t| {
            coeffs
                .iter()
                .enumerate()
                .filter(|(j, _)| *j <= t)
                .map(|(j, c)| c * x[t - j])
                .sum()
        })
        .collect()
}

/// Which statistics batch-normalization layers use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Statistics of the current input (training).
    Batch,
    /// Stored statistics (inference; deterministic and pointwise).
    Running,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Bn {
    channels: usize,
    gamma: usize,
    beta: usize,
    mean: usize,
    var: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Block {
    conv: Conv,
    bn: Option<Bn>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Role {
    Generator,
    Discriminator,
}

/// Layout plus parameters of one convolutional network.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleNet {
    spec: NetSpec,
    role: Role,
    channels: usize,
    in_channels: usize,
    params: ParamSet,
    blocks: Vec<Block>,
    gate: Option<[Conv; 2]>,
    head: Conv,
}

/// Everything a backward pass needs from the forward pass.
#[derive(Debug, Clone)]
pub struct Trace<S> {
    len_in: usize,
    weights: Vec<ConvWeights>,
    block_inputs: Vec<Vec<S>>,
    block_pre: Vec<Vec<S>>,
    bn: Vec<Option<BnCache<S>>>,
    gate_in: Vec<S>,
    gate_tanh: Vec<S>,
    gate_sig: Vec<S>,
    head_in: Vec<S>,
    head_out: Vec<S>,
    /// Network output (pre-emphasized for the generator, scores for the critic).
    pub output: Vec<S>,
}

impl ScaleNet {
    fn build(spec: &NetSpec, role: Role, channels: usize, in_channels: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut params = ParamSet::default();
        let mut conv = |params: &mut ParamSet, name: &str, cin: usize, cout: usize, kernel: usize, dilation: usize| {
            let fan_in = (cin * kernel) as f32;
            let std = 1.0 / libm::sqrtf(fan_in);
            let v: Vec<f32> = (0..cout * cin * kernel)
                .map(|_| {
                    let n: f32 = StandardNormal.sample(rng);
                    n * std
                })
                .collect();
            let per = cin * kernel;
            let g: Vec<f32> = (0..cout)
                .map(|co| libm::sqrtf(v[co * per..(co + 1) * per].iter().map(|x| x * x).sum()))
                .collect();
            let v_idx = params.push(format!("{name}.v"), vec![cout, cin, kernel], true, v);
            let g_idx = params.push(format!("{name}.g"), vec![cout], true, g);
            let b_idx = params.push(format!("{name}.bias"), vec![cout], true, vec![0.0; cout]);
            Conv { cin, cout, kernel, dilation, v: v_idx, g: g_idx, bias: b_idx }
        };
        let mut blocks = Vec::with_capacity(spec.n_blocks);
        for (i, d) in spec.dilations().into_iter().enumerate() {
            let cin = if i == 0 { in_channels } else { channels };
            let c = conv(&mut params, &format!("block{i}.conv"), cin, channels, spec.kernel, d);
            let bn = if i + 1 < spec.n_blocks {
                let gamma = params.push(format!("block{i}.bn.gamma"), vec![channels], true, vec![1.0; channels]);
                let beta = params.push(format!("block{i}.bn.beta"), vec![channels], true, vec![0.0; channels]);
                let mean = params.push(format!("block{i}.bn.running_mean"), vec![channels], false, vec![0.0; channels]);
                let var = params.push(format!("block{i}.bn.running_var"), vec![channels], false, vec![1.0; channels]);
                Some(Bn { channels, gamma, beta, mean, var })
            } else {
                None
            };
            blocks.push(Block { conv: c, bn });
        }
        let gate = match role {
            Role::Generator => Some([
                conv(&mut params, "gate.tanh", channels, channels, spec.kernel, 1),
                conv(&mut params, "gate.sigmoid", channels, channels, spec.kernel, 1),
            ]),
            Role::Discriminator => None,
        };
        let head = conv(&mut params, "head", channels, 1, 1, 1);
        Self { spec: spec.clone(), role, channels, in_channels, params, blocks, gate, head }
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Input length minus output length.
    pub fn shrink(&self) -> usize {
        let rf = receptive_field(&self.spec);
        match self.role {
            Role::Generator => rf.generator_shrink(),
            Role::Discriminator => rf.discriminator_shrink(),
        }
    }

    fn convs(&self) -> impl Iterator<Item = &Conv> {
        self.blocks.iter().map(|b| &b.conv).chain(self.gate.iter().flatten()).chain(core::iter::once(&self.head))
    }

    fn weights(&self) -> Vec<ConvWeights> {
        self.convs()
            .map(|c| layers::weight_norm(self.params.get(c.v), self.params.get(c.g), c.cout))
            .collect()
    }

    /// Runs the layers on a channel-major input of `in_channels × len`.
    pub fn forward<S: Real>(&self, input: &[S], mode: BnMode) -> Result<Trace<S>> {
        let len = input.len() / self.in_channels;
        if input.len() != len * self.in_channels {
            return Err(Error::LengthMismatch { left: input.len(), right: len * self.in_channels });
        }
        if len < self.shrink() + 1 {
            return Err(Error::TooShort { len, min: self.shrink() + 1 });
        }
        let weights = self.weights();
        let mut block_inputs = Vec::with_capacity(self.blocks.len());
        let mut block_pre = Vec::with_capacity(self.blocks.len());
        let mut bn_caches = Vec::with_capacity(self.blocks.len());
        let mut h: Vec<S> = input.to_vec();
        let mut cur_len = len;
        for (i, b) in self.blocks.iter().enumerate() {
            let y = layers::conv_forward(&b.conv, &weights[i].w, self.params.get(b.conv.bias), &h, cur_len);
            cur_len = b.conv.out_len(cur_len);
            block_inputs.push(core::mem::take(&mut h));
            match b.bn {
                Some(bn) => {
                    let running = match mode {
                        BnMode::Batch => None,
                        BnMode::Running => Some((self.params.get(bn.mean), self.params.get(bn.var))),
                    };
                    let (mut z, cache) =
                        layers::bn_forward(&y, bn.channels, self.params.get(bn.gamma), self.params.get(bn.beta), running);
                    block_pre.push(z.clone());
                    layers::leaky_relu(&mut z, self.spec.leaky_slope);
                    bn_caches.push(Some(cache));
                    h = z;
                }
                None => {
                    block_pre.push(Vec::new());
                    bn_caches.push(None);
                    h = y;
                }
            }
        }
        let nb = self.blocks.len();
        let (gate_in, gate_tanh, gate_sig, head_in) = match &self.gate {
            Some([ct, cs]) => {
                let mut a = layers::conv_forward(ct, &weights[nb].w, self.params.get(ct.bias), &h, cur_len);
                let mut s = layers::conv_forward(cs, &weights[nb + 1].w, self.params.get(cs.bias), &h, cur_len);
                cur_len = ct.out_len(cur_len);
                a.iter_mut().for_each(|v| *v = v.tanh());
                s.iter_mut().for_each(|v| *v = v.sigmoid());
                let g: Vec<S> = a.iter().zip(&s).map(|(x, y)| *x * *y).collect();
                (h, a, s, g)
            }
            None => (Vec::new(), Vec::new(), Vec::new(), h),
        };
        let head_w = &weights[weights.len() - 1];
        let head_out = layers::conv_forward(&self.head, &head_w.w, self.params.get(self.head.bias), &head_in, cur_len);
        let output = match self.role {
            Role::Generator => layers::fir_valid(&head_out, &self.spec.pe_coeffs),
            Role::Discriminator => head_out.clone(),
        };
        Ok(Trace {
            len_in: len,
            weights,
            block_inputs,
            block_pre,
            bn: bn_caches,
            gate_in,
            gate_tanh,
            gate_sig,
            head_in,
            head_out,
            output,
        })
    }

    /// Back-propagates `grad_out` (same length as `trace.output`). Parameter
    /// gradients are mapped to `f32` through `proj` and accumulated into
    /// `grads`. Returns the input gradient when requested.
    pub fn backward<S: Real>(
        &self,
        trace: &Trace<S>,
        grad_out: &[S],
        proj: fn(S) -> f32,
        grads: &mut Grads,
        want_input: bool,
    ) -> Option<Vec<S>> {
        assert_eq!(grad_out.len(), trace.output.len());
        let weights = &trace.weights;
        let add_conv = |grads: &mut Grads, c: &Conv, w: &ConvWeights, gw: &[S], gb: &[S]| {
            let gw: Vec<f32> = gw.iter().map(|&v| proj(v)).collect();
            let (gv, rest) = split_two(&mut grads.tensors, c.v, c.g);
            layers::weight_norm_backward(self.params.get(c.v), self.params.get(c.g), &w.norms, &gw, gv, rest);
            for (d, s) in grads.tensors[c.bias].iter_mut().zip(gb) {
                *d += proj(*s);
            }
        };
        let g_head_out = match self.role {
            Role::Generator => layers::fir_valid_backward(grad_out, &self.spec.pe_coeffs),
            Role::Discriminator => grad_out.to_vec(),
        };
        debug_assert_eq!(g_head_out.len(), trace.head_out.len());
        let head_len = trace.head_in.len() / self.channels;
        let nw = weights.len();
        let (gw, gb, g_head_in) =
            layers::conv_backward(&self.head, &weights[nw - 1].w, &trace.head_in, head_len, &g_head_out, true);
        add_conv(grads, &self.head, &weights[nw - 1], &gw, &gb);
        let mut g = g_head_in.unwrap();
        let nb = self.blocks.len();
        if let Some([ct, cs]) = &self.gate {
            let mut ga = Vec::with_capacity(g.len());
            let mut gs = Vec::with_capacity(g.len());
            for ((gv, t), s) in g.iter().zip(&trace.gate_tanh).zip(&trace.gate_sig) {
                let one = S::from_f32(1.0);
                ga.push(*gv * *s * (one - *t * *t));
                gs.push(*gv * *t * *s * (one - *s));
            }
            let in_len = trace.gate_in.len() / self.channels;
            let (gw_t, gb_t, gx_t) = layers::conv_backward(ct, &weights[nb].w, &trace.gate_in, in_len, &ga, true);
            let (gw_s, gb_s, gx_s) = layers::conv_backward(cs, &weights[nb + 1].w, &trace.gate_in, in_len, &gs, true);
            add_conv(grads, ct, &weights[nb], &gw_t, &gb_t);
            add_conv(grads, cs, &weights[nb + 1], &gw_s, &gb_s);
            g = gx_t.unwrap();
            for (a, b) in g.iter_mut().zip(gx_s.unwrap()) {
                *a += b;
            }
        }
        for i in (0..nb).rev() {
            let b = &self.blocks[i];
            if let (Some(bn), Some(cache)) = (b.bn, &trace.bn[i]) {
                layers::leaky_relu_backward(&trace.block_pre[i], &mut g, self.spec.leaky_slope);
                let (gx, gg, gbeta) = layers::bn_backward(cache, self.params.get(bn.gamma), &g);
                for (d, s) in grads.tensors[bn.gamma].iter_mut().zip(&gg) {
                    *d += proj(*s);
                }
                for (d, s) in grads.tensors[bn.beta].iter_mut().zip(&gbeta) {
                    *d += proj(*s);
                }
                g = gx;
            }
            let x = &trace.block_inputs[i];
            let len = x.len() / b.conv.cin;
            let need = want_input || i > 0;
            let (gw, gb, gx) = layers::conv_backward(&b.conv, &weights[i].w, x, len, &g, need);
            add_conv(grads, &b.conv, &weights[i], &gw, &gb);
            match gx {
                Some(gx) => g = gx,
                None => return None,
            }
        }
        debug_assert_eq!(g.len(), trace.len_in * self.in_channels);
        Some(g)
    }

    /// Stores the batch statistics of `input` as the running statistics of
    /// every normalization layer, so that [`BnMode::Running`] reproduces the
    /// training-mode output for that input exactly.
    pub fn calibrate_norm(&mut self, input: &[f32]) -> Result<()> {
        let trace = self.forward::<f32>(input, BnMode::Batch)?;
        for (i, b) in self.blocks.iter().enumerate() {
            if let (Some(bn), Some(cache)) = (b.bn, &trace.bn[i]) {
                self.params.get_mut(bn.mean).copy_from_slice(&cache.mean);
                self.params.get_mut(bn.var).copy_from_slice(&cache.var);
            }
        }
        Ok(())
    }
}

fn split_two(t: &mut [Vec<f32>], a: usize, b: usize) -> (&mut [f32], &mut [f32]) {
    assert!(a < b);
    let (lo, hi) = t.split_at_mut(b);
    (&mut lo[a], &mut hi[0])
}

/// Generator of one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub net: ScaleNet,
    /// Set once the scale has finished training; forward passes then use the
    /// stored normalization statistics.
    pub frozen: bool,
}

/// Critic of one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub net: ScaleNet,
}

impl Generator {
    pub fn new(spec: &NetSpec, channels: usize, coarsest: bool, seed: u64) -> Result<Self> {
        spec.validate()?;
        let in_channels = if !coarsest && spec.fusion == Fusion::Concat { 2 } else { 1 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self { net: ScaleNet::build(spec, Role::Generator, channels, in_channels, &mut rng), frozen: false })
    }

    /// Rebuilds a generator around stored tensors.
    pub fn from_params(spec: &NetSpec, channels: usize, coarsest: bool, params: &ParamSet, frozen: bool) -> Result<Self> {
        let mut g = Self::new(spec, channels, coarsest, 0)?;
        g.net.params.load_from(params)?;
        g.frozen = frozen;
        Ok(g)
    }

    pub fn shrink(&self) -> usize {
        self.net.shrink()
    }

    /// Assembles the network input from padded noise and (optionally) the
    /// padded up-sampled coarser output.
    pub fn stack_input(&self, z: &[f32], prev_up: Option<&[f32]>) -> Result<Vec<f32>> {
        if let Some(p) = prev_up {
            if p.len() != z.len() {
                return Err(Error::LengthMismatch { left: z.len(), right: p.len() });
            }
        }
        Ok(match (self.net.in_channels, prev_up) {
            (1, None) => z.to_vec(),
            (1, Some(p)) => z.iter().zip(p).map(|(a, b)| a + b).collect(),
            (_, p) => {
                let mut v = z.to_vec();
                match p {
                    Some(p) => v.extend_from_slice(p),
                    None => v.extend(core::iter::repeat_n(0.0, z.len())),
                }
                v
            }
        })
    }

    /// Residual term added to the network output: the centre of `prev_up`.
    pub fn residual<'a>(&self, prev_up: Option<&'a [f32]>, out_len: usize) -> Option<&'a [f32]> {
        let left = self.shrink() / 2;
        prev_up.map(|p| &p[left..left + out_len])
    }

    pub fn default_mode(&self) -> BnMode {
        if self.frozen {
            BnMode::Running
        } else {
            BnMode::Batch
        }
    }

    /// One synthesis step. `z` (and `prev_up`, when given) must already be
    /// padded; the output is shorter by [`Generator::shrink`].
    pub fn forward(&self, z: &[f32], prev_up: Option<&[f32]>) -> Result<Vec<f32>> {
        self.forward_mode(z, prev_up, self.default_mode())
    }

    pub fn forward_mode(&self, z: &[f32], prev_up: Option<&[f32]>, mode: BnMode) -> Result<Vec<f32>> {
        let (out, _) = self.forward_trace(z, prev_up, mode)?;
        Ok(out)
    }

    /// Forward pass that keeps the trace for [`Generator::backward`].
    pub fn forward_trace(&self, z: &[f32], prev_up: Option<&[f32]>, mode: BnMode) -> Result<(Vec<f32>, Trace<f32>)> {
        let input = self.stack_input(z, prev_up)?;
        let trace = self.net.forward(&input, mode)?;
        let mut out = trace.output.clone();
        if let Some(r) = self.residual(prev_up, out.len()) {
            for (o, v) in out.iter_mut().zip(r) {
                *o += v;
            }
        }
        Ok((out, trace))
    }

    /// Accumulates parameter gradients for `∂L/∂output`. The residual path
    /// carries no parameters.
    pub fn backward(&self, trace: &Trace<f32>, grad_out: &[f32], grads: &mut Grads) {
        self.net.backward(trace, grad_out, |v| v, grads, false);
    }

    pub fn calibrate_and_freeze(&mut self, z: &[f32], prev_up: Option<&[f32]>) -> Result<()> {
        let input = self.stack_input(z, prev_up)?;
        self.net.calibrate_norm(&input)?;
        self.frozen = true;
        Ok(())
    }
}

/// Mean of `scores` weighted by `mask` (all windows when `mask` is `None`).
pub fn masked_mean(scores: &[f32], mask: Option<&[bool]>) -> f32 {
    match mask {
        None => scores.iter().map(|&v| v as f64).sum::<f64>() as f32 / scores.len() as f32,
        Some(m) => {
            let (s, n) = scores
                .iter()
                .zip(m)
                .filter(|(_, &keep)| keep)
                .fold((0.0f64, 0usize), |(s, n), (v, _)| (s + *v as f64, n + 1));
            if n == 0 {
                0.0
            } else {
                (s / n as f64) as f32
            }
        }
    }
}

/// `∂ mean / ∂ score_i` for [`masked_mean`].
pub fn mean_weights(len: usize, mask: Option<&[bool]>) -> Vec<f32> {
    match mask {
        None => vec![1.0 / len as f32; len],
        Some(m) => {
            let n = m.iter().filter(|&&k| k).count().max(1) as f32;
            m.iter().map(|&k| if k { 1.0 / n } else { 0.0 }).collect()
        }
    }
}

impl Discriminator {
    pub fn new(spec: &NetSpec, channels: usize, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self { net: ScaleNet::build(spec, Role::Discriminator, channels, 1, &mut rng) })
    }

    pub fn from_params(spec: &NetSpec, channels: usize, params: &ParamSet) -> Result<Self> {
        let mut d = Self::new(spec, channels, 0)?;
        d.net.params.load_from(params)?;
        Ok(d)
    }

    /// Window length `T` scored by each output.
    pub fn window(&self) -> usize {
        self.net.shrink() + 1
    }

    /// Per-window scores (`len − T + 1` of them) and their mean.
    pub fn score(&self, x: &[f32]) -> Result<(Vec<f32>, f32)> {
        if x.len() < self.window() {
            return Err(Error::TooShort { len: x.len(), min: self.window() });
        }
        let t = self.net.forward::<f32>(x, BnMode::Batch)?;
        let m = masked_mean(&t.output, None);
        Ok((t.output, m))
    }

    /// Masked mean score, its gradient with respect to `x`, and (when
    /// `grads` is given) the parameter gradients of the mean score.
    pub fn score_and_grad(&self, x: &[f32], mask: Option<&[bool]>, grads: Option<&mut Grads>) -> Result<(f32, Vec<f32>)> {
        let t = self.net.forward::<f32>(x, BnMode::Batch)?;
        let mean = masked_mean(&t.output, mask);
        let w = mean_weights(t.output.len(), mask);
        let mut scratch;
        let g = match grads {
            Some(g) => g,
            None => {
                scratch = self.net.params.zeros_like();
                &mut scratch
            }
        };
        let gx = self.net.backward(&t, &w, |v| v, g, true).expect("input gradient requested");
        Ok((mean, gx))
    }
}

/// Generator and critic for `scale`, with widths chosen by whether it is the
/// coarsest scale. Seeds are derived from `seed` and the scale index.
pub fn build_scale_nets(scale: usize, coarsest: usize, spec: &NetSpec, seed: u64) -> Result<(Generator, Discriminator)> {
    if scale > coarsest {
        return Err(Error::BadScale(scale));
    }
    let ch = spec.channels_for(scale, coarsest);
    let base = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(scale as u64 * 2);
    let g = Generator::new(spec, ch, scale == coarsest, base)?;
    let d = Discriminator::new(spec, ch, base.wrapping_add(1))?;
    Ok((g, d))
}

#[cfg(test)]
mod tests;
