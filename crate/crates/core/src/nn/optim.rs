//! Plain SGD with global-norm gradient clipping and a resettable step-decay
//! learning-rate schedule.

use super::store::ParamStore;
use super::tensor::{Gradients, Scalar};

#[derive(Debug, Clone)]
pub struct SgdConfig {
    pub learning_rate: f64,
    /// Multiplicative decay applied every `decay_every` steps.
    pub decay_factor: f64,
    pub decay_every: usize,
    pub clip_global_norm: Option<f64>,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            decay_factor: 0.9,
            decay_every: 100,
            clip_global_norm: Some(5.0),
        }
    }
}

pub struct Sgd {
    cfg: SgdConfig,
    steps: usize,
}

impl Sgd {
    pub fn new(cfg: SgdConfig) -> Self {
        assert!(cfg.learning_rate > 0.0, "learning rate must be > 0");
        Self { cfg, steps: 0 }
    }

    pub fn current_lr(&self) -> f64 {
        let decays = (self.steps / self.cfg.decay_every.max(1)) as i32;
        self.cfg.learning_rate * self.cfg.decay_factor.powi(decays)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Restore the schedule to its initial state; the next step uses the
    /// initial learning rate exactly.
    pub fn reset_schedule(&mut self) {
        self.steps = 0;
    }

    pub fn step<T: Scalar>(&mut self, store: &mut ParamStore<T>, grads: &Gradients<T>) {
        let lr = self.current_lr();
        let scale = match self.cfg.clip_global_norm {
            Some(clip) => {
                let norm = grads.global_norm();
                if norm > clip {
                    clip / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        let factor = T::from_f64(lr * scale);
        for id in grads.param_ids() {
            let g = grads.for_param(id).expect("listed id");
            let values = store.values_mut(id);
            for (v, &gi) in values.iter_mut().zip(g.iter()) {
                *v -= factor * gi;
            }
        }
        self.steps += 1;
    }
}
