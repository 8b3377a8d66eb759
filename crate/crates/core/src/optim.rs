//! AdamW with decoupled weight decay.
//!
//! Per parameter `θ` with gradient `g` at step `t`:
//!
//! ```text
//! θ ← θ − lr·wd·θ            (only for kinds that decay)
//! m ← β₁·m + (1−β₁)·g
//! v ← β₂·v + (1−β₂)·g²
//! θ ← θ − lr · (m/(1−β₁ᵗ)) / (√(v/(1−β₂ᵗ)) + ε)
//! ```

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::params::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamW {
    cfg: AdamWConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig, store: &ParamStore) -> Self {
        let zeros = || store.iter().map(|p| vec![0.0; p.value.numel()]).collect();
        Self {
            cfg,
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    pub fn config(&self) -> &AdamWConfig {
        &self.cfg
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update; `grads` is indexed like the store.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Vec<f64>]) {
        assert_eq!(grads.len(), store.len(), "one gradient per parameter");
        self.step += 1;
        let c = self.cfg;
        let t = self.step as i32;
        let bc1 = 1.0 - libm::pow(c.beta1, t as f64);
        let bc2 = 1.0 - libm::pow(c.beta2, t as f64);
        let shrink = 1.0 - c.lr * c.weight_decay;
        for (((param, grad), m), v) in store.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let decay = param.kind.decays() && c.weight_decay != 0.0;
            for (((theta, &g), m), v) in param
                .value
                .data_mut()
                .iter_mut()
                .zip(grad)
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                if decay {
                    *theta *= shrink;
                }
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *theta -= c.lr * m_hat / (libm::sqrt(v_hat) + c.eps);
            }
        }
    }
}

/// Rescales `grads` in place so their global L2 norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = libm::sqrt(grads.iter().flatten().map(|g| g * g).sum::<f64>());
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= s);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamKind;
    use crate::tensor::Tensor;

    fn store(kind: ParamKind, value: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("x", kind, Tensor::from_vec(vec![value]));
        s
    }

    #[test]
    fn zero_parameter_with_zero_gradient_stays_zero() {
        let mut s = store(ParamKind::Weight, 0.0);
        let mut opt = AdamW::new(AdamWConfig::default(), &s);
        opt.step(&mut s, &[vec![0.0]]);
        assert_eq!(s.get_value(0), 0.0);
    }

    #[test]
    fn first_step_with_unit_gradient_moves_by_lr() {
        // m̂ = 1, v̂ = 1, so the update is lr/(1+eps).
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut s = store(ParamKind::Weight, 1.0);
        let mut opt = AdamW::new(cfg, &s);
        opt.step(&mut s, &[vec![1.0]]);
        let want = 1.0 - cfg.lr / (1.0 + cfg.eps);
        assert!((s.get_value(0) - want).abs() < 1e-15);
    }

    #[test]
    fn decay_applies_only_to_weights_and_embeddings() {
        let cfg = AdamWConfig::default();
        for kind in [
            ParamKind::Weight,
            ParamKind::Embedding,
            ParamKind::Bias,
            ParamKind::Norm,
            ParamKind::GemExponent,
        ] {
            let mut s = store(kind, 2.0);
            let mut opt = AdamW::new(cfg, &s);
            opt.step(&mut s, &[vec![0.0]]);
            let want = if kind.decays() {
                2.0 * (1.0 - cfg.lr * cfg.weight_decay)
            } else {
                2.0
            };
            assert_eq!(s.get_value(0), want, "{kind:?}");
        }
    }

    #[test]
    fn clipping_bounds_global_norm() {
        let mut g = vec![vec![3.0], vec![4.0]];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g[0][0] - 0.6).abs() < 1e-15 && (g[1][0] - 0.8).abs() < 1e-15);
        let mut g = vec![vec![0.1]];
        clip_grad_norm(&mut g, 1.0);
        assert_eq!(g[0][0], 0.1);
    }

    trait First {
        fn get_value(&self, i: usize) -> f64;
    }

    impl First for ParamStore {
        fn get_value(&self, i: usize) -> f64 {
            self.iter().nth(i).unwrap().value.data()[0]
        }
    }
}
