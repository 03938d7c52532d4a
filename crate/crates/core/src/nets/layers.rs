//! Kernels shared by the generator and the critic. Activations are stored
//! channel-major: `x[c * len + t]`.

use alloc::vec;
use alloc::vec::Vec;

use crate::real::Real;

pub(crate) const BN_EPS: f32 = 1e-5;

/// Weight-normalized dilated 1-D convolution without padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Conv {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub dilation: usize,
    /// Direction tensor `[cout, cin, kernel]`.
    pub v: usize,
    /// Per-output-channel magnitude `[cout]`.
    pub g: usize,
    pub bias: usize,
}

impl Conv {
    #[inline]
    pub fn shrink(&self) -> usize {
        (self.kernel - 1) * self.dilation
    }

    pub fn out_len(&self, len: usize) -> usize {
        len - self.shrink()
    }
}

/// Effective weights `g · v / ‖v‖` of one convolution.
#[derive(Debug, Clone)]
pub(crate) struct ConvWeights {
    pub w: Vec<f32>,
    pub norms: Vec<f32>,
}

pub(crate) fn weight_norm(v: &[f32], g: &[f32], cout: usize) -> ConvWeights {
    let per = v.len() / cout;
    let mut w = vec![0.0; v.len()];
    let mut norms = vec![0.0; cout];
    for co in 0..cout {
        let row = &v[co * per..(co + 1) * per];
        let n = libm::sqrtf(row.iter().map(|x| x * x).sum::<f32>()).max(1e-12);
        norms[co] = n;
        let s = g[co] / n;
        for (dst, src) in w[co * per..(co + 1) * per].iter_mut().zip(row) {
            *dst = s * src;
        }
    }
    ConvWeights { w, norms }
}

/// Maps `∂L/∂w` to `∂L/∂v` and `∂L/∂g` for `w = g · v / ‖v‖`.
pub(crate) fn weight_norm_backward(
    v: &[f32],
    g: &[f32],
    norms: &[f32],
    grad_w: &[f32],
    grad_v: &mut [f32],
    grad_g: &mut [f32],
) {
    let cout = g.len();
    let per = v.len() / cout;
    for co in 0..cout {
        let vr = &v[co * per..(co + 1) * per];
        let gw = &grad_w[co * per..(co + 1) * per];
        let n = norms[co];
        // projection of the weight gradient on the unit direction
        let proj: f32 = vr.iter().zip(gw).map(|(a, b)| a * b).sum::<f32>() / n;
        grad_g[co] += proj;
        let s = g[co] / n;
        for ((dst, gwi), vi) in grad_v[co * per..(co + 1) * per].iter_mut().zip(gw).zip(vr) {
            *dst += s * (gwi - proj * vi / n);
        }
    }
}

#[inline]
fn axpy<S: Real>(dst: &mut [S], w: f32, src: &[S]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s.scale(w);
    }
}

/// Dot product with eight independent accumulators so the `f32` instance
/// vectorizes.
#[inline]
fn dot<S: Real>(a: &[S], b: &[S]) -> S {
    let mut acc = [S::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = S::zero();
    for i in chunks * 8..a.len() {
        s += a[i] * b[i];
    }
    for v in acc {
        s += v;
    }
    s
}

/// Lanes per register-resident accumulator.
const VW: usize = 8;

/// Output channels accumulated together, so each input load feeds several
/// accumulators.
const CO_BLOCK: usize = 8;

/// `y[o, t] = bias[o] + Σ_{i,k} w[o, i, k] · x[i, t + k·dilation]` for
/// `t < out_len`, with input rows of stride `len`.
#[allow(clippy::too_many_arguments)]
fn correlate<S: Real>(
    cin: usize,
    cout: usize,
    kernel: usize,
    dilation: usize,
    w: &[f32],
    bias: Option<&[f32]>,
    x: &[S],
    len: usize,
    out_len: usize,
) -> Vec<S> {
    let blocks = cout.div_ceil(CO_BLOCK);
    let taps = cin * kernel;
    // weights regrouped as [block][input][tap][lane]
    let mut wb = vec![[0.0f32; CO_BLOCK]; blocks * taps];
    for o in 0..cout {
        for i in 0..taps {
            wb[(o / CO_BLOCK) * taps + i][o % CO_BLOCK] = w[o * taps + i];
        }
    }
    let mut y = vec![S::zero(); cout * out_len];
    let full = out_len / VW * VW;
    for blk in 0..blocks {
        let o0 = blk * CO_BLOCK;
        let nco = CO_BLOCK.min(cout - o0);
        let wrow = &wb[blk * taps..(blk + 1) * taps];
        let b: [S; CO_BLOCK] = core::array::from_fn(|j| match bias {
            Some(b) if j < nco => S::from_f32(b[o0 + j]),
            _ => S::zero(),
        });
        for t in (0..full).step_by(VW) {
            let mut acc = [[S::zero(); VW]; CO_BLOCK];
            for i in 0..cin {
                let xr = &x[i * len + t..];
                for k in 0..kernel {
                    let wv = wrow[i * kernel + k];
                    let s: [S; VW] = xr[k * dilation..k * dilation + VW].try_into().unwrap();
                    for j in 0..CO_BLOCK {
                        for l in 0..VW {
                            acc[j][l] += s[l].scale(wv[j]);
                        }
                    }
                }
            }
            for (j, a) in acc.iter().enumerate().take(nco) {
                for (d, &v) in y[(o0 + j) * out_len + t..(o0 + j) * out_len + t + VW].iter_mut().zip(a) {
                    *d = v + b[j];
                }
            }
        }
        for t in full..out_len {
            for j in 0..nco {
                let mut acc = b[j];
                for i in 0..cin {
                    for k in 0..kernel {
                        acc += x[i * len + t + k * dilation].scale(wrow[i * kernel + k][j]);
                    }
                }
                y[(o0 + j) * out_len + t] = acc;
            }
        }
    }
    y
}

pub(crate) fn conv_forward<S: Real>(c: &Conv, w: &[f32], bias: &[f32], x: &[S], len: usize) -> Vec<S> {
    debug_assert_eq!(x.len(), c.cin * len);
    correlate(c.cin, c.cout, c.kernel, c.dilation, w, Some(bias), x, len, c.out_len(len))
}

/// `gw[o, i, k] = Σ_t gy[o, t] · x[i, t + k·dilation]`.
fn weight_gradient<S: Real>(c: &Conv, x: &[S], len: usize, gy: &[S], out_len: usize) -> Vec<S> {
    let mut gw = vec![S::zero(); c.cout * c.cin * c.kernel];
    let full = out_len / VW * VW;
    for i in 0..c.cin {
        for k in 0..c.kernel {
            let xs = &x[i * len + k * c.dilation..i * len + k * c.dilation + out_len];
            for o0 in (0..c.cout).step_by(CO_BLOCK) {
                let nco = CO_BLOCK.min(c.cout - o0);
                let mut acc = [[S::zero(); VW]; CO_BLOCK];
                for t in (0..full).step_by(VW) {
                    let s: &[S; VW] = xs[t..t + VW].try_into().unwrap();
                    for (j, a) in acc.iter_mut().enumerate().take(nco) {
                        let g: &[S; VW] = gy[(o0 + j) * out_len + t..(o0 + j) * out_len + t + VW].try_into().unwrap();
                        for l in 0..VW {
                            a[l] += g[l] * s[l];
                        }
                    }
                }
                for (j, a) in acc.iter().enumerate().take(nco) {
                    let o = o0 + j;
                    let mut sum = S::zero();
                    for &v in a {
                        sum += v;
                    }
                    for t in full..out_len {
                        sum += gy[o * out_len + t] * xs[t];
                    }
                    gw[(o * c.cin + i) * c.kernel + k] = sum;
                }
            }
        }
    }
    gw
}

/// Returns `(∂L/∂w, ∂L/∂bias, ∂L/∂x)`; the input gradient is skipped when
/// `want_input` is false.
pub(crate) fn conv_backward<S: Real>(
    c: &Conv,
    w: &[f32],
    x: &[S],
    len: usize,
    gy: &[S],
    want_input: bool,
) -> (Vec<S>, Vec<S>, Option<Vec<S>>) {
    let out_len = c.out_len(len);
    debug_assert_eq!(gy.len(), c.cout * out_len);
    let mut gb = vec![S::zero(); c.cout];
    for (o, b) in gb.iter_mut().enumerate() {
        for &g in &gy[o * out_len..(o + 1) * out_len] {
            *b += g;
        }
    }
    let gw = weight_gradient(c, x, len, gy, out_len);
    let gx = want_input.then(|| {
        // the input gradient is a correlation of the zero-padded output
        // gradient with the flipped, transposed kernel
        let p = c.shrink();
        let plen = out_len + 2 * p;
        let mut padded = vec![S::zero(); c.cout * plen];
        for o in 0..c.cout {
            padded[o * plen + p..o * plen + p + out_len].copy_from_slice(&gy[o * out_len..(o + 1) * out_len]);
        }
        let k = c.kernel;
        let mut wt = vec![0.0f32; w.len()];
        for o in 0..c.cout {
            for i in 0..c.cin {
                for kk in 0..k {
                    wt[(i * c.cout + o) * k + (k - 1 - kk)] = w[(o * c.cin + i) * k + kk];
                }
            }
        }
        correlate(c.cout, c.cin, k, c.dilation, &wt, None, &padded, plen, len)
    });
    (gw, gb, gx)
}

/// Normalization statistics of one forward pass through a batch-norm layer.
#[derive(Debug, Clone)]
pub(crate) struct BnCache<S> {
    /// Normalized input `(x - mean) / std`.
    pub xhat: Vec<S>,
    pub inv_std: Vec<S>,
    /// Primal statistics that were used.
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
    /// Whether the statistics came from the batch (training mode).
    pub batch_stats: bool,
}

pub(crate) fn bn_forward<S: Real>(
    x: &[S],
    channels: usize,
    gamma: &[f32],
    beta: &[f32],
    running: Option<(&[f32], &[f32])>,
) -> (Vec<S>, BnCache<S>) {
    let len = x.len() / channels;
    let mut y = vec![S::zero(); x.len()];
    let mut xhat = vec![S::zero(); x.len()];
    let mut inv_std = vec![S::zero(); channels];
    let mut means = vec![0.0; channels];
    let mut vars = vec![0.0; channels];
    let inv_len = 1.0 / len as f32;
    for c in 0..channels {
        let row = &x[c * len..(c + 1) * len];
        let (mean, inv) = match running {
            Some((rm, rv)) => {
                means[c] = rm[c];
                vars[c] = rv[c];
                (S::from_f32(rm[c]), S::from_f32(1.0 / libm::sqrtf(rv[c] + BN_EPS)))
            }
            None => {
                let mut m = S::zero();
                for &v in row {
                    m += v;
                }
                let m = m.scale(inv_len);
                let mut var = S::zero();
                for &v in row {
                    let d = v - m;
                    var += d * d;
                }
                let var = var.scale(inv_len);
                means[c] = m.val();
                vars[c] = var.val();
                (m, S::from_f32(1.0) / (var + S::from_f32(BN_EPS)).sqrt())
            }
        };
        inv_std[c] = inv;
        let (gm, bt) = (S::from_f32(gamma[c]), S::from_f32(beta[c]));
        for t in 0..len {
            let h = (row[t] - mean) * inv;
            xhat[c * len + t] = h;
            y[c * len + t] = gm * h + bt;
        }
    }
    (y, BnCache { xhat, inv_std, mean: means, var: vars, batch_stats: running.is_none() })
}

/// Returns `(∂L/∂x, ∂L/∂gamma, ∂L/∂beta)`.
pub(crate) fn bn_backward<S: Real>(cache: &BnCache<S>, gamma: &[f32], gy: &[S]) -> (Vec<S>, Vec<S>, Vec<S>) {
    let channels = gamma.len();
    let len = gy.len() / channels;
    let mut gx = vec![S::zero(); gy.len()];
    let mut gg = vec![S::zero(); channels];
    let mut gb = vec![S::zero(); channels];
    let inv_len = 1.0 / len as f32;
    for c in 0..channels {
        let gr = &gy[c * len..(c + 1) * len];
        let xr = &cache.xhat[c * len..(c + 1) * len];
        let sum_g = {
            let mut s = S::zero();
            for &g in gr {
                s += g;
            }
            s
        };
        let sum_gx = dot(gr, xr);
        gg[c] = sum_gx;
        gb[c] = sum_g;
        let k = cache.inv_std[c].scale(gamma[c]);
        let out = &mut gx[c * len..(c + 1) * len];
        if cache.batch_stats {
            let mg = sum_g.scale(inv_len);
            let mgx = sum_gx.scale(inv_len);
            for t in 0..len {
                out[t] = k * (gr[t] - mg - xr[t] * mgx);
            }
        } else {
            for t in 0..len {
                out[t] = k * gr[t];
            }
        }
    }
    (gx, gg, gb)
}

pub(crate) fn leaky_relu<S: Real>(x: &mut [S], slope: f32) {
    for v in x.iter_mut() {
        if v.val() <= 0.0 {
            *v = v.scale(slope);
        }
    }
}

/// Gradient through a leaky ReLU given its pre-activation input.
pub(crate) fn leaky_relu_backward<S: Real>(pre: &[S], g: &mut [S], slope: f32) {
    for (gv, p) in g.iter_mut().zip(pre) {
        if p.val() <= 0.0 {
            *gv = gv.scale(slope);
        }
    }
}

/// `y[t] = Σ_j c[j] · x[t + P - 1 - j]`, valid part only (length `len - P + 1`).
pub(crate) fn fir_valid<S: Real>(x: &[S], coeffs: &[f32]) -> Vec<S> {
    let p = coeffs.len();
    let out_len = x.len() + 1 - p;
    let mut y = vec![S::zero(); out_len];
    for (j, &c) in coeffs.iter().enumerate() {
        axpy(&mut y, c, &x[p - 1 - j..p - 1 - j + out_len]);
    }
    y
}

pub(crate) fn fir_valid_backward<S: Real>(gy: &[S], coeffs: &[f32]) -> Vec<S> {
    let p = coeffs.len();
    let mut gx = vec![S::zero(); gy.len() + p - 1];
    for (j, &c) in coeffs.iter().enumerate() {
        axpy(&mut gx[p - 1 - j..p - 1 - j + gy.len()], c, gy);
    }
    gx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(cin: usize, cout: usize, kernel: usize, dilation: usize) -> Conv {
        Conv { cin, cout, kernel, dilation, v: 0, g: 0, bias: 0 }
    }

    #[test]
    fn conv_matches_direct_sum() {
        let c = conv(2, 3, 3, 2);
        let len = 11;
        let x: Vec<f32> = (0..2 * len).map(|i| (i as f32 * 0.37).sin()).collect();
        let w: Vec<f32> = (0..18).map(|i| (i as f32 * 0.11).cos()).collect();
        let b = [0.1, -0.2, 0.3];
        let y = conv_forward(&c, &w, &b, &x, len);
        let ol = len - 4;
        for co in 0..3 {
            for t in 0..ol {
                let mut s = b[co];
                for ci in 0..2 {
                    for k in 0..3 {
                        s += w[(co * 2 + ci) * 3 + k] * x[ci * len + t + 2 * k];
                    }
                }
                assert!((y[co * ol + t] - s).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn conv_backward_is_adjoint() {
        let c = conv(2, 2, 3, 3);
        let len = 20;
        let x: Vec<f32> = (0..2 * len).map(|i| (i as f32 * 0.7).sin()).collect();
        let w: Vec<f32> = (0..12).map(|i| (i as f32 * 0.3).cos()).collect();
        let zero_b = [0.0; 2];
        let y = conv_forward(&c, &w, &zero_b, &x, len);
        let gy: Vec<f32> = (0..y.len()).map(|i| (i as f32 * 0.13).cos()).collect();
        let (gw, _, gx) = conv_backward(&c, &w, &x, len, &gy, true);
        let lhs: f32 = y.iter().zip(&gy).map(|(a, b)| a * b).sum();
        let via_x: f32 = x.iter().zip(gx.unwrap().iter()).map(|(a, b)| a * b).sum();
        let via_w: f32 = w.iter().zip(&gw).map(|(a, b)| a * b).sum();
        assert!((lhs - via_x).abs() < 1e-3, "{lhs} {via_x}");
        assert!((lhs - via_w).abs() < 1e-3, "{lhs} {via_w}");
    }

    #[test]
    fn weight_norm_gradient_matches_finite_differences() {
        let v = [0.3f32, -0.4, 1.2, 0.5, 0.1, -0.9];
        let g = [1.5f32, 0.7];
        let gw_up = [0.2f32, -0.1, 0.4, 0.3, -0.6, 0.05];
        let loss = |v: &[f32], g: &[f32]| -> f64 {
            let cw = weight_norm(v, g, 2);
            cw.w.iter().zip(&gw_up).map(|(a, b)| *a as f64 * *b as f64).sum()
        };
        let cw = weight_norm(&v, &g, 2);
        let mut gv = [0.0; 6];
        let mut gg = [0.0; 2];
        weight_norm_backward(&v, &g, &cw.norms, &gw_up, &mut gv, &mut gg);
        let h = 1e-3;
        for i in 0..6 {
            let (mut a, mut b) = (v, v);
            a[i] += h;
            b[i] -= h;
            let fd = (loss(&a, &g) - loss(&b, &g)) / (2.0 * h as f64);
            assert!((fd - gv[i] as f64).abs() < 1e-3, "v{i}: {fd} {}", gv[i]);
        }
        for i in 0..2 {
            let (mut a, mut b) = (g, g);
            a[i] += h;
            b[i] -= h;
            let fd = (loss(&v, &a) - loss(&v, &b)) / (2.0 * h as f64);
            assert!((fd - gg[i] as f64).abs() < 1e-3);
        }
    }

    #[test]
    fn batch_norm_training_gradient_matches_finite_differences() {
        let len = 9;
        let x: Vec<f64> = (0..2 * len).map(|i| (i as f64 * 1.7).sin() + 0.1 * i as f64).collect();
        let gamma = [1.3f32, 0.6];
        let beta = [0.2f32, -0.1];
        let up: Vec<f64> = (0..2 * len).map(|i| (i as f64 * 0.9).cos()).collect();
        let loss = |x: &[f64]| -> f64 {
            let xf: Vec<f32> = x.iter().map(|&v| v as f32).collect();
            let (y, _) = bn_forward(&xf, 2, &gamma, &beta, None);
            y.iter().zip(&up).map(|(a, b)| *a as f64 * b).sum()
        };
        let xf: Vec<f32> = x.iter().map(|&v| v as f32).collect();
        let (_, cache) = bn_forward(&xf, 2, &gamma, &beta, None);
        let upf: Vec<f32> = up.iter().map(|&v| v as f32).collect();
        let (gx, _, _) = bn_backward(&cache, &gamma, &upf);
        for i in 0..x.len() {
            let mut a = x.clone();
            let mut b = x.clone();
            a[i] += 1e-3;
            b[i] -= 1e-3;
            let fd = (loss(&a) - loss(&b)) / 2e-3;
            assert!((fd - gx[i] as f64).abs() < 2e-2, "{i}: {fd} vs {}", gx[i]);
        }
    }

    #[test]
    fn fir_valid_and_adjoint() {
        let x = [1.0f32, 2.0, 3.0, 4.0];
        let y = fir_valid(&x, &[1.0, -0.5]);
        assert_eq!(y, vec![2.0 - 0.5, 3.0 - 1.0, 4.0 - 1.5]);
        let g = fir_valid_backward(&[1.0f32, 0.0, 0.0], &[1.0, -0.5]);
        assert_eq!(g, vec![-0.5, 1.0, 0.0, 0.0]);
    }
}

