use serde::{Deserialize, Serialize};

use crate::nn::Parameter;
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { lr: 1e-3, betas: (0.9, 0.999), eps: 1e-8, weight_decay: 1e-3 }
    }
}

/// Adam with decoupled weight decay. Moments are kept in `f64` regardless of
/// the parameter width.
#[derive(Debug, Clone)]
pub struct AdamW {
    config: AdamWConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        Self { config, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update of every trainable parameter at learning rate `lr`.
    /// Buffers are skipped.
    pub fn step<T: Real>(&mut self, params: &mut [&mut Parameter<T>], lr: f64) {
        let trainable: Vec<&mut &mut Parameter<T>> = params.iter_mut().filter(|p| p.trainable()).collect();
        if self.m.is_empty() {
            self.m = trainable.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), trainable.len(), "parameter set changed between steps");
        self.step += 1;
        let (b1, b2) = self.config.betas;
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let decay = 1.0 - lr * self.config.weight_decay;
        for ((p, m), v) in trainable.into_iter().zip(&mut self.m).zip(&mut self.v) {
            for ((w, g), (mi, vi)) in p.value.iter_mut().zip(&p.grad).zip(m.iter_mut().zip(v.iter_mut())) {
                let g = g.as_f64();
                *mi = b1 * *mi + (1.0 - b1) * g;
                *vi = b2 * *vi + (1.0 - b2) * g * g;
                let update = lr * (*mi / c1) / ((*vi / c2).sqrt() + self.config.eps);
                *w = T::of(w.as_f64() * decay - update);
            }
        }
    }
}

/// Cosine annealing from `max` at step 0 to `min` at step `total`.
pub fn cosine_lr(max: f64, min: f64, step: u64, total: u64) -> f64 {
    if total == 0 {
        return max;
    }
    let t = (step.min(total) as f64) / total as f64;
    min + 0.5 * (max - min) * (1.0 + (std::f64::consts::PI * t).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(1e-3, 1e-5, 0, 100), 1e-3);
        assert!((cosine_lr(1e-3, 1e-5, 100, 100) - 1e-5).abs() < 1e-18);
        assert!((cosine_lr(1.0, 0.0, 50, 100) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // bias-corrected first step is lr * sign(g) for |g| >> eps
        let mut p = Parameter::<f64>::new(vec![2], vec![1.0, -1.0]);
        p.grad = vec![0.5, -2.0];
        let mut opt = AdamW::new(AdamWConfig { weight_decay: 0.0, ..Default::default() });
        opt.step(&mut [&mut p], 0.1);
        assert!((p.value[0] - 0.9).abs() < 1e-6);
        assert!((p.value[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn zero_lr_leaves_parameters() {
        let mut p = Parameter::<f32>::new(vec![1], vec![0.25]);
        p.grad = vec![3.0];
        AdamW::new(AdamWConfig::default()).step(&mut [&mut p], 0.0);
        assert_eq!(p.value, vec![0.25]);
    }
}
