//! Mini-batch bookkeeping shared by both trainers: gradient averaging,
//! clipping, scheduled optimizer steps.

use bwm_tensor::{LrSchedule, OptimConfig, Optimizer, ParamStore};
use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Samples whose gradients are averaged per optimizer step.
    pub batch_size: usize,
    pub optim: OptimConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 8,
            optim: OptimConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn steps_per_epoch(&self, n_samples: usize) -> usize {
        n_samples.div_ceil(self.batch_size.max(1))
    }
}

pub struct Stepper {
    optimizer: Optimizer,
    schedule: LrSchedule,
    clip: Option<f64>,
    step: usize,
}

impl Stepper {
    pub fn new(cfg: &TrainConfig, n_samples: usize) -> Self {
        let total = cfg.epochs * cfg.steps_per_epoch(n_samples);
        Self {
            optimizer: Optimizer::from_config(&cfg.optim),
            schedule: LrSchedule {
                base_lr: cfg.optim.lr,
                final_lr: cfg.optim.lr * cfg.optim.final_lr_ratio,
                warmup_steps: cfg.optim.warmup_steps,
                total_steps: total,
            },
            clip: cfg.optim.grad_clip,
            step: 0,
        }
    }

    /// Average the accumulated gradients over `batch_len`, clip, step, then
    /// zero the gradients for the next batch.
    pub fn apply(&mut self, store: &mut ParamStore, batch_len: usize) -> Result<()> {
        store.scale_grads(1.0 / batch_len.max(1) as f64);
        if let Some(c) = self.clip {
            store.clip_grad_norm(c);
        }
        let lr = self.schedule.lr_at(self.step);
        self.optimizer.step(store, lr)?;
        self.step += 1;
        store.zero_grad();
        Ok(())
    }
}
