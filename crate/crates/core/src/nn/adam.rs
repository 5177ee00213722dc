//! Adam optimizer with bias correction, over a fixed list of flat
//! parameter tensors.

use alloc::vec::Vec;

use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
struct Moment {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// One optimizer instance drives one fixed set of tensors; `step` must be
/// called with tensors and gradients in registration order.
#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    t: u64,
    moments: Vec<Moment>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, tensor_lens: &[usize]) -> Adam {
        Adam {
            cfg,
            t: 0,
            moments: tensor_lens
                .iter()
                .map(|&len| Moment {
                    m: alloc::vec![0.0; len],
                    v: alloc::vec![0.0; len],
                })
                .collect(),
        }
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        assert_eq!(params.len(), self.moments.len(), "tensor count mismatch");
        assert_eq!(grads.len(), self.moments.len(), "gradient count mismatch");
        self.t += 1;
        let c = self.cfg;
        let bc1 = 1.0 - math::powf(c.beta1, self.t as f64);
        let bc2 = 1.0 - math::powf(c.beta2, self.t as f64);
        for ((p, g), mom) in params.iter_mut().zip(grads).zip(&mut self.moments) {
            assert_eq!(p.len(), mom.m.len(), "tensor length mismatch");
            assert_eq!(g.len(), mom.m.len(), "gradient length mismatch");
            for i in 0..p.len() {
                mom.m[i] = c.beta1 * mom.m[i] + (1.0 - c.beta1) * g[i];
                mom.v[i] = c.beta2 * mom.v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let m_hat = mom.m[i] / bc1;
                let v_hat = mom.v[i] / bc2;
                p[i] -= c.lr * m_hat / (math::sqrt(v_hat) + c.eps);
            }
        }
    }
}
