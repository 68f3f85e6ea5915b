use crate::cells::{Param, ParamSet};
use crate::tensor::Scalar;

use super::AdamConfig;

/// One bias-corrected Adam update of `p.value` from `p.grad`, at step `t ≥ 1`.
pub fn adam_step<T: Scalar>(p: &mut Param<T>, t: u64, cfg: &AdamConfig) {
    debug_assert!(t >= 1);
    let c1 = 1.0 - cfg.beta1.powi(t as i32);
    let c2 = 1.0 - cfg.beta2.powi(t as i32);
    let Param { value, grad, m, v, .. } = p;
    let lanes = value
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()));
    for ((w, &g), (m, v)) in lanes {
        let g = g.f64();
        let mk = cfg.beta1 * m.f64() + (1.0 - cfg.beta1) * g;
        let vk = cfg.beta2 * v.f64() + (1.0 - cfg.beta2) * g * g;
        *m = T::of(mk);
        *v = T::of(vk);
        *w = T::of(w.f64() - cfg.lr * (mk / c1) / ((vk / c2).sqrt() + cfg.eps));
    }
}

/// Adam with a shared step counter.
#[derive(Clone, Debug, Default)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub t: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam { cfg, t: 0 }
    }

    pub fn step<T: Scalar>(&mut self, ps: &mut ParamSet<T>) {
        self.t += 1;
        for p in ps.iter_mut() {
            adam_step(p, self.t, &self.cfg);
        }
    }
}

/// Scales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<T: Scalar>(ps: &mut ParamSet<T>, max_norm: f64) -> f64 {
    let norm = ps
        .iter()
        .flat_map(|p| p.grad.data().iter())
        .map(|g| g.f64() * g.f64())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = T::of(max_norm / norm);
        for p in ps.iter_mut() {
            for g in p.grad.data_mut() {
                *g *= s;
            }
        }
    }
    norm
}
