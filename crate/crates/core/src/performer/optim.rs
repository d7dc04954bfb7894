//! AdamW with linear warmup and global-norm gradient clipping.

use super::{Params, TrainConfig};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamW<T> {
    pub m: Params<T>,
    pub v: Params<T>,
    pub step: u64,
}

/// Learning rate after `step` completed updates: linear ramp to `lr` over
/// the warmup, then constant.
pub fn learning_rate(cfg: &TrainConfig, step: u64) -> f64 {
    if cfg.warmup_steps == 0 || step >= cfg.warmup_steps {
        cfg.lr
    } else {
        cfg.lr * (step + 1) as f64 / cfg.warmup_steps as f64
    }
}

pub fn global_norm<T: Scalar>(g: &Params<T>) -> f64 {
    g.tensors()
        .iter()
        .flat_map(|(_, t, _)| t.iter())
        .map(|v| {
            let x = v.to_f64_exact();
            x * x
        })
        .sum::<f64>()
        .sqrt()
}

impl<T: Scalar> AdamW<T> {
    pub fn new(params: &Params<T>) -> Self {
        AdamW {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    /// Applies one update and returns the pre-clipping gradient norm.
    pub fn update(&mut self, params: &mut Params<T>, grads: &Params<T>, cfg: &TrainConfig) -> f64 {
        let norm = global_norm(grads);
        let clip = if cfg.grad_clip > 0.0 && norm > cfg.grad_clip {
            cfg.grad_clip / norm
        } else {
            1.0
        };
        let lr = learning_rate(cfg, self.step);
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
        let (one_b1, one_b2) = (T::lit(1.0 - cfg.beta1), T::lit(1.0 - cfg.beta2));
        let step_size = T::lit(lr / bc1);
        let inv_bc2 = T::lit(1.0 / bc2);
        let eps = T::lit(cfg.adam_eps);
        let decay = T::lit(1.0 - lr * cfg.weight_decay);
        let clip = T::lit(clip);

        let decay_flags: Vec<bool> = params.tensors().iter().map(|(_, _, d)| *d).collect();
        let g_all = grads.tensors();
        for ((((p, m), v), (_, g, _)), decays) in params
            .tensors_mut()
            .into_iter()
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
            .zip(g_all)
            .zip(decay_flags)
        {
            ndarray::Zip::from(p).and(m).and(v).and(g).for_each(|p, m, v, &g| {
                let g = g * clip;
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                if decays {
                    *p *= decay;
                }
                *p -= step_size * *m / ((*v * inv_bc2).sqrt() + eps);
            });
        }
        norm
    }
}
