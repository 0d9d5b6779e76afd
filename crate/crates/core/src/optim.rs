//! AdamW with linear warm-up to a constant rate.
//!
//! Update for parameter `w` with gradient `g` at step `t` (0-based):
//!
//! ```text
//! m ← β1 m + (1 − β1) g          v ← β2 v + (1 − β2) g²
//! m̂ = m / (1 − β1^(t+1))         v̂ = v / (1 − β2^(t+1))
//! w ← w − η_t (m̂ / (√v̂ + ε) + λ w)
//! η_t = η · min(1, t / warmup_steps)
//! ```

use crate::autodiff::{ParamGrads, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub warmup_steps: usize,
    /// Global gradient-norm clip; 0 disables clipping.
    pub max_grad_norm: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            learning_rate: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            warmup_steps: 0,
            max_grad_norm: 1.0,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0
            && self.max_grad_norm >= 0.0;
        if !ok {
            return Err(Error::invalid(format!("bad optimizer settings {self:?}")));
        }
        Ok(())
    }

    /// Learning rate at 0-based `step`.
    pub fn rate_at(&self, step: usize) -> f64 {
        if self.warmup_steps == 0 || step >= self.warmup_steps {
            self.learning_rate
        } else {
            self.learning_rate * step as f64 / self.warmup_steps as f64
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdamW {
    pub config: AdamWConfig,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    step: usize,
}

impl AdamW {
    pub fn new(config: AdamWConfig, store: &ParamStore) -> Result<Self> {
        config.validate()?;
        let zeros = || store.iter().map(|(_, t)| Matrix::zeros(t.rows(), t.cols())).collect();
        Ok(AdamW {
            config,
            m: zeros(),
            v: zeros(),
            step: 0,
        })
    }

    /// Number of updates applied so far.
    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// Apply one update; returns the gradient norm before clipping.
    pub fn step(&mut self, store: &mut ParamStore, grads: &ParamGrads) -> f64 {
        let c = self.config;
        let norm = grads.global_norm();
        let clip = if c.max_grad_norm > 0.0 && norm > c.max_grad_norm {
            c.max_grad_norm / norm
        } else {
            1.0
        };
        let lr = c.rate_at(self.step);
        let t = (self.step + 1) as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for (i, w) in store.tensors_mut().iter_mut().enumerate() {
            let g = grads.as_slice()[i].data();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (j, wj) in w.data_mut().iter_mut().enumerate() {
                let gj = g[j] * clip;
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * gj;
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj;
                let mh = m[j] / bc1;
                let vh = v[j] / bc2;
                *wj -= lr * (mh / (vh.sqrt() + c.eps) + c.weight_decay * *wj);
            }
        }
        self.step += 1;
        norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(w: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Matrix::scalar(w));
        s
    }

    #[test]
    fn zero_gradient_zero_decay_is_noop() {
        let mut s = one(1.5);
        let cfg = AdamWConfig {
            learning_rate: 0.1,
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut opt = AdamW::new(cfg, &s).unwrap();
        let g = s.zero_grads();
        for _ in 0..3 {
            opt.step(&mut s, &g);
        }
        assert_eq!(s.get(s.ids().next().unwrap()).item(), 1.5);
    }

    #[test]
    fn single_step_hand_value() {
        let mut s = one(1.0);
        let id = s.ids().next().unwrap();
        let cfg = AdamWConfig {
            learning_rate: 0.1,
            max_grad_norm: 0.0,
            ..Default::default()
        };
        let mut opt = AdamW::new(cfg, &s).unwrap();
        let mut g = s.zero_grads();
        g.as_mut_slice()[0].data_mut()[0] = 0.5;
        opt.step(&mut s, &g);
        // m̂ = 0.5, v̂ = 0.25
        let expected = 1.0 - 0.1 * (0.5 / (0.5 + 1e-8) + 0.01 * 1.0);
        assert!((s.get(id).item() - expected).abs() < 1e-12);
    }

    #[test]
    fn warmup_starts_at_zero() {
        let cfg = AdamWConfig {
            learning_rate: 1.0,
            warmup_steps: 4,
            ..Default::default()
        };
        assert_eq!(cfg.rate_at(0), 0.0);
        assert_eq!(cfg.rate_at(2), 0.5);
        assert_eq!(cfg.rate_at(4), 1.0);
        assert_eq!(cfg.rate_at(100), 1.0);
    }
}
