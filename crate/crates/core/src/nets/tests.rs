use super::*;
use crate::real::Dual;

fn tiny_spec(n_blocks: usize, kernel: usize, channels: usize) -> NetSpec {
    NetSpec {
        n_blocks,
        kernel,
        channels_coarse: channels,
        channels_fine: channels,
        ..NetSpec::default()
    }
}

fn pseudo_noise(len: usize, seed: u32) -> Vec<f32> {
    let mut s = seed.wrapping_mul(747_796_405).wrapping_add(1);
    (0..len)
        .map(|_| {
            s = s.wrapping_mul(1_103_515_245).wrapping_add(12_345);
            ((s >> 8) as f32 / (1u32 << 24) as f32) * 2.0 - 1.0
        })
        .collect()
}

#[test]
fn receptive_field_conventions() {
    let rf = receptive_field(&NetSpec::default());
    assert_eq!(rf.dilated_span, 2040);
    assert_eq!(rf.stack_support, 2041);
    assert_eq!(rf.discriminator_support, 2041);
    // + gate convolution (8) + two-tap pre-emphasis (1)
    assert_eq!(rf.generator_support, 2050);
    assert_eq!(rf.generator_padding(), (1024, 1025));
    assert_eq!(receptive_field(&tiny_spec(7, 9, 4)).dilated_span, 1016);
    assert_eq!(receptive_field(&tiny_spec(1, 1, 4)).dilated_span, 0);
}

#[test]
fn pre_emphasis_examples() {
    let mut imp = vec![0.0; 4];
    imp[0] = 1.0;
    assert_eq!(pre_emphasis(&imp), vec![1.0, -0.97, 0.0, 0.0]);
    let y = pre_emphasis(&[1.0; 4]);
    assert_eq!(y[0], 1.0);
    for v in &y[1..] {
        assert!((v - 0.03).abs() < 1e-6);
    }
    assert_eq!(pre_emphasis(&[0.0; 5]), vec![0.0; 5]);
}

#[test]
fn widths_follow_scale() {
    let spec = tiny_spec(2, 3, 4);
    let spec = NetSpec { channels_coarse: 16, channels_fine: 96, ..spec };
    let (g, d) = build_scale_nets(3, 3, &spec, 1).unwrap();
    assert_eq!((g.net.channels(), d.net.channels()), (16, 16));
    let (g, d) = build_scale_nets(2, 3, &spec, 1).unwrap();
    assert_eq!((g.net.channels(), d.net.channels()), (96, 96));
    assert!(build_scale_nets(4, 3, &spec, 1).is_err());
}

#[test]
fn seeded_initialization_is_reproducible() {
    let spec = tiny_spec(3, 5, 6);
    let (g1, d1) = build_scale_nets(1, 2, &spec, 42).unwrap();
    let (g2, d2) = build_scale_nets(1, 2, &spec, 42).unwrap();
    assert_eq!(g1.net.params().checksum(), g2.net.params().checksum());
    assert_eq!(d1, d2);
    let (g3, _) = build_scale_nets(1, 2, &spec, 43).unwrap();
    assert_ne!(g1.net.params().checksum(), g3.net.params().checksum());
}

#[test]
fn output_lengths() {
    let spec = tiny_spec(3, 5, 4);
    let rf = receptive_field(&spec);
    let (g, d) = build_scale_nets(0, 0, &spec, 7).unwrap();
    let z = pseudo_noise(100 + rf.generator_shrink(), 1);
    assert_eq!(g.forward(&z, None).unwrap().len(), 100);
    assert_eq!(d.window(), rf.discriminator_support);
    let x = pseudo_noise(d.window(), 2);
    let (s, m) = d.score(&x).unwrap();
    assert_eq!(s.len(), 1);
    assert_eq!(m, s[0]);
    let x = pseudo_noise(d.window() + 99, 3);
    assert_eq!(d.score(&x).unwrap().0.len(), 100);
    assert!(matches!(d.score(&x[..d.window() - 1]), Err(Error::TooShort { .. })));
    assert!(matches!(g.forward(&z[..rf.generator_shrink()], None), Err(Error::TooShort { .. })));
}

#[test]
fn zero_head_gives_zero_output() {
    let spec = tiny_spec(3, 3, 4);
    let (mut g, _) = build_scale_nets(0, 1, &spec, 5).unwrap();
    let head_g = g.net.head.g;
    let head_b = g.net.head.bias;
    g.net.params_mut().get_mut(head_g).iter_mut().for_each(|v| *v = 0.0);
    g.net.params_mut().get_mut(head_b).iter_mut().for_each(|v| *v = 0.0);
    let n = 50 + g.shrink();
    let out = g.forward(&vec![0.0; n], Some(&vec![0.0; n])).unwrap();
    assert!(out.iter().all(|&v| v == 0.0));
}

/// Indices of input samples that influence output sample `t`, measured
/// through the backward pass with stored normalization statistics.
fn influence(net: &ScaleNet, len: usize, t: usize) -> Vec<usize> {
    let x = pseudo_noise(len * net.in_channels(), 11);
    let trace = net.forward::<f32>(&x, BnMode::Running).unwrap();
    let mut g = vec![0.0; trace.output.len()];
    g[t] = 1.0;
    let mut grads = net.params().zeros_like();
    let gx = net.backward(&trace, &g, |v| v, &mut grads, true).unwrap();
    gx.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i).collect()
}

#[test]
fn empirical_support_matches_analytic() {
    let spec = tiny_spec(4, 5, 3);
    let rf = receptive_field(&spec);
    let (g, d) = build_scale_nets(0, 0, &spec, 9).unwrap();
    let len = 3 * rf.generator_support;
    let t = 40;
    let idx = influence(&g.net, len, t);
    assert_eq!(idx.len(), rf.generator_support);
    assert_eq!(idx[0], t);
    assert_eq!(*idx.last().unwrap(), t + rf.generator_support - 1);
    let idx = influence(&d.net, len, t);
    assert_eq!(idx.len(), rf.discriminator_support);
}

#[test]
fn generator_is_translation_equivariant_in_running_mode() {
    let spec = tiny_spec(3, 3, 4);
    let (mut g, _) = build_scale_nets(0, 1, &spec, 3).unwrap();
    let n = 200;
    let z = pseudo_noise(n + 10, 4);
    let p = pseudo_noise(n + 10, 5);
    g.calibrate_and_freeze(&z[..n], Some(&p[..n])).unwrap();
    let a = g.forward(&z[..n], Some(&p[..n])).unwrap();
    let b = g.forward(&z[7..n + 7], Some(&p[7..n + 7])).unwrap();
    for i in 0..a.len() - 7 {
        assert!((a[i + 7] - b[i]).abs() < 1e-5);
    }
}

#[test]
fn calibration_reproduces_training_output() {
    let spec = tiny_spec(3, 3, 4);
    let (mut g, _) = build_scale_nets(1, 1, &spec, 3).unwrap();
    let z = pseudo_noise(300, 8);
    let train = g.forward_mode(&z, None, BnMode::Batch).unwrap();
    g.calibrate_and_freeze(&z, None).unwrap();
    let eval = g.forward(&z, None).unwrap();
    for (a, b) in train.iter().zip(&eval) {
        assert!((a - b).abs() < 1e-4 * (1.0 + a.abs()), "{a} {b}");
    }
}

#[test]
fn concat_fusion_uses_two_input_channels() {
    let spec = NetSpec { fusion: Fusion::Concat, ..tiny_spec(2, 3, 4) };
    let (g, _) = build_scale_nets(0, 1, &spec, 1).unwrap();
    assert_eq!(g.net.in_channels(), 2);
    let (gc, _) = build_scale_nets(1, 1, &spec, 1).unwrap();
    assert_eq!(gc.net.in_channels(), 1);
    let n = 30 + g.shrink();
    assert_eq!(g.forward(&pseudo_noise(n, 1), Some(&pseudo_noise(n, 2))).unwrap().len(), 30);
}

fn loss_of(net: &ScaleNet, x: &[f32], up: &[f32]) -> f64 {
    let t = net.forward::<f32>(x, BnMode::Batch).unwrap();
    t.output.iter().zip(up).map(|(a, b)| *a as f64 * *b as f64).sum()
}

#[test]
fn parameter_gradients_match_finite_differences() {
    for role in [Role::Discriminator, Role::Generator] {
        let spec = tiny_spec(3, 3, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let net = ScaleNet::build(&spec, role, 3, 1, &mut rng);
        let len = 40;
        let x = pseudo_noise(len, 21);
        let t = net.forward::<f32>(&x, BnMode::Batch).unwrap();
        let up = pseudo_noise(t.output.len(), 22);
        let mut grads = net.params().zeros_like();
        let gx = net.backward(&t, &up, |v| v, &mut grads, true).unwrap();
        // leaky-ReLU kinks can sit inside the stencil; a kink spoils at most
        // one side, so the better one-sided difference is compared
        let h = 3e-4f32;
        let l0 = loss_of(&net, &x, &up);
        let mut worst = 0.0f64;
        for (ti, tensor) in net.params().tensors.iter().enumerate() {
            if !tensor.trainable {
                continue;
            }
            for i in (0..tensor.data.len()).step_by(3) {
                let mut a = net.clone();
                a.params_mut().get_mut(ti)[i] += h;
                let mut b = net.clone();
                b.params_mut().get_mut(ti)[i] -= h;
                let fwd = (loss_of(&a, &x, &up) - l0) / h as f64;
                let bwd = (l0 - loss_of(&b, &x, &up)) / h as f64;
                let an = grads.tensors[ti][i] as f64;
                let e = (fwd - an).abs().min((bwd - an).abs()) / (1.0 + an.abs());
                worst = worst.max(e);
            }
        }
        assert!(worst < 2e-2, "{role:?}: worst relative error {worst}");
        for i in (0..len).step_by(5) {
            let mut a = x.clone();
            a[i] += h;
            let mut b = x.clone();
            b[i] -= h;
            let fwd = (loss_of(&net, &a, &up) - l0) / h as f64;
            let bwd = (l0 - loss_of(&net, &b, &up)) / h as f64;
            let an = gx[i] as f64;
            assert!((fwd - an).abs().min((bwd - an).abs()) < 2e-2 * (1.0 + an.abs()), "{role:?} input {i}");
        }
    }
}

#[test]
fn dual_backward_gives_hessian_vector_product() {
    // tangent of ∇θ D(x + t·v) at t = 0 against central differences of ∇θ D
    let spec = tiny_spec(3, 3, 3);
    let d = Discriminator::new(&spec, 3, 5).unwrap();
    let len = d.window() + 20;
    let x = pseudo_noise(len, 1);
    let v = pseudo_noise(len, 2);
    let dual: Vec<Dual> = x.iter().zip(&v).map(|(a, b)| Dual::new(*a, *b)).collect();
    let t = d.net.forward::<Dual>(&dual, BnMode::Batch).unwrap();
    let w: Vec<Dual> = mean_weights(t.output.len(), None).into_iter().map(Dual::from_f32).collect();
    let mut hvp = d.net.params().zeros_like();
    d.net.backward(&t, &w, |s| s.d, &mut hvp, false);
    let grad_at = |shift: f32| {
        let xs: Vec<f32> = x.iter().zip(&v).map(|(a, b)| a + shift * b).collect();
        let mut g = d.net.params().zeros_like();
        d.score_and_grad(&xs, None, Some(&mut g)).unwrap();
        g
    };
    let h = 1e-3;
    let (gp, gm) = (grad_at(h), grad_at(-h));
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for ti in 0..hvp.tensors.len() {
        for i in 0..hvp.tensors[ti].len() {
            let fd = (gp.tensors[ti][i] - gm.tensors[ti][i]) as f64 / (2.0 * h as f64);
            num += (fd - hvp.tensors[ti][i] as f64).powi(2);
            den += fd * fd;
        }
    }
    assert!(den > 0.0);
    assert!((num / den).sqrt() < 2e-2, "relative error {}", (num / den).sqrt());
}

#[test]
fn masked_mean_ignores_invalid_windows() {
    let s = [1.0, 5.0, 3.0];
    assert_eq!(masked_mean(&s, None), 3.0);
    assert_eq!(masked_mean(&s, Some(&[true, false, true])), 2.0);
    assert_eq!(mean_weights(3, Some(&[true, false, true])), vec![0.5, 0.0, 0.5]);
}

