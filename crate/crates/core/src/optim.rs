//! Adam with a step-decay learning rate.

use alloc::vec;
use alloc::vec::Vec;

use crate::nets::{Grads, ParamSet};

/// Adam state for one parameter set. Tensors marked as not trainable are
/// never written.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    t: i32,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(params: &ParamSet, lr: f32, betas: (f32, f32)) -> Self {
        let zeros: Vec<Vec<f32>> = params.tensors.iter().map(|t| vec![0.0; t.data.len()]).collect();
        Self { lr, beta1: betas.0, beta2: betas.1, eps: 1e-8, t: 0, m: zeros.clone(), v: zeros }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &Grads) {
        self.t += 1;
        let c1 = 1.0 - libm::powf(self.beta1, self.t as f32);
        let c2 = 1.0 - libm::powf(self.beta2, self.t as f32);
        let step = self.lr * libm::sqrtf(c2) / c1;
        for (i, tensor) in params.tensors.iter_mut().enumerate() {
            if !tensor.trainable {
                continue;
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (((p, &g), m), v) in tensor.data.iter_mut().zip(&grads.tensors[i]).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *p -= step * *m / (libm::sqrtf(*v) + self.eps * libm::sqrtf(c2));
            }
        }
    }
}

/// Learning rate at `epoch`: `lr` before `drop_epoch`, `lr / factor` after.
pub fn scheduled_lr(lr: f32, factor: f32, drop_epoch: usize, epoch: usize) -> f32 {
    if epoch >= drop_epoch {
        lr / factor
    } else {
        lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;

    fn single(x: f32, trainable: bool) -> ParamSet {
        let mut p = ParamSet::default();
        p.push(String::from("x"), vec![1], trainable, vec![x]);
        p
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = single(1.0, true);
        let mut opt = Adam::new(&p, 0.1, (0.5, 0.999));
        opt.step(&mut p, &Grads { tensors: vec![vec![3.0]] });
        assert!((p.get(0)[0] - 0.9).abs() < 1e-6);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut p = single(5.0, true);
        let mut opt = Adam::new(&p, 0.05, (0.5, 0.999));
        for _ in 0..2000 {
            let x = p.get(0)[0];
            opt.step(&mut p, &Grads { tensors: vec![vec![2.0 * (x - 1.5)]] });
        }
        assert!((p.get(0)[0] - 1.5).abs() < 1e-2);
    }

    #[test]
    fn buffers_are_untouched() {
        let mut p = single(2.0, false);
        let mut opt = Adam::new(&p, 0.1, (0.5, 0.999));
        opt.step(&mut p, &Grads { tensors: vec![vec![1.0]] });
        assert_eq!(p.get(0)[0], 2.0);
    }

    #[test]
    fn schedule() {
        assert_eq!(scheduled_lr(0.0015, 10.0, 2000, 1999), 0.0015);
        assert!((scheduled_lr(0.0015, 10.0, 2000, 2000) - 0.00015).abs() < 1e-9);
    }
}
