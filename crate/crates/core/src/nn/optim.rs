//! Adaptive-moment optimiser with decoupled weight decay, and the cosine
//! learning-rate schedule.

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamW<T> {
    pub beta1: T,
    pub beta2: T,
    pub weight_decay: T,
    pub eps: T,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(n: usize) -> Self {
        Self {
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            weight_decay: T::of(1e-2),
            eps: T::of(1e-8),
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T], lr: T) {
        self.t += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.t);
        let c2 = one - self.beta2.powi(self.t);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (one - self.beta1) * g;
            *v = self.beta2 * *v + (one - self.beta2) * g * g;
            let mhat = *m / c1;
            let vhat = *v / c2;
            *p -= lr * (mhat / (vhat.sqrt() + self.eps) + self.weight_decay * *p);
        }
    }
}

/// Learning rate of `epoch` (0-based) out of `epochs`, falling from `lr_init`
/// at the first epoch to `lr_final` at the last along half a cosine.
pub fn cosine_lr(epoch: usize, epochs: usize, lr_init: f64, lr_final: f64) -> f64 {
    if epochs <= 1 {
        return lr_init;
    }
    let t = epoch.min(epochs - 1) as f64 / (epochs - 1) as f64;
    lr_final + 0.5 * (lr_init - lr_final) * (1.0 + (std::f64::consts::PI * t).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints_and_monotone() {
        let lrs: Vec<f64> = (0..30).map(|e| cosine_lr(e, 30, 1e-3, 1e-6)).collect();
        assert_eq!(lrs[0], 1e-3);
        assert!((lrs[29] - 1e-6).abs() < 1e-18);
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(cosine_lr(0, 1, 1e-3, 1e-6), 1e-3);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // bias correction makes the first step ±lr per coordinate
        let mut opt = AdamW::<f64>::new(2);
        opt.weight_decay = 0.0;
        let mut p = vec![1.0, -1.0];
        opt.step(&mut p, &[0.5, -3.0], 0.1);
        assert!((p[0] - 0.9).abs() < 1e-7);
        assert!((p[1] + 0.9).abs() < 1e-7);
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut opt = AdamW::<f64>::new(1);
        opt.weight_decay = 0.0;
        let mut p = vec![5.0];
        for _ in 0..2000 {
            let g = [2.0 * (p[0] - 2.0)];
            opt.step(&mut p, &g, 0.05);
        }
        assert!((p[0] - 2.0).abs() < 1e-3);
    }
}
