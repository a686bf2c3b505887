//! Optimizers and learning-rate schedules.

use serde::{Deserialize, Serialize};

use crate::params::ParamStore;
use crate::tensor::{Result, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Hyperparameters shared by both optimizers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub warmup_steps: usize,
    /// Final learning rate as a fraction of `lr`.
    pub final_lr_ratio: f64,
    pub grad_clip: Option<f64>,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr: 1e-3,
            weight_decay: 0.06,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            warmup_steps: 100,
            final_lr_ratio: 0.1,
            grad_clip: Some(5.0),
        }
    }
}

/// Linear warm-up to `base_lr`, then linear decay to `final_lr` at
/// `total_steps`. Step indices are zero-based; step 0 of an `n`-step
/// warm-up uses `base_lr / n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub final_lr: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

impl LrSchedule {
    pub fn lr_at(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.base_lr * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let decay_steps = self.total_steps.saturating_sub(self.warmup_steps);
        if decay_steps == 0 {
            return self.base_lr;
        }
        let frac = ((step - self.warmup_steps) as f64 / decay_steps as f64).min(1.0);
        self.base_lr + (self.final_lr - self.base_lr) * frac
    }
}

fn check_grads(store: &ParamStore) -> Result<()> {
    match store.iter().find(|(_, t)| t.requires_grad() && t.grad().is_none()) {
        Some((name, _)) => Err(TensorError::State(format!("parameter '{name}' has no gradient"))),
        None => Ok(()),
    }
}

/// Plain gradient descent with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub weight_decay: f64,
}

impl Sgd {
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) -> Result<()> {
        check_grads(store)?;
        for (_, t) in store.iter_mut() {
            let g = t.grad().expect("checked").to_vec();
            for (p, gi) in t.data_mut().iter_mut().zip(g) {
                *p -= lr * (gi + self.weight_decay * *p);
            }
        }
        Ok(())
    }
}

/// Adam with decoupled weight decay (AdamW form).
#[derive(Debug, Clone)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            weight_decay,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, store: &mut ParamStore, lr: f64) -> Result<()> {
        check_grads(store)?;
        if self.m.is_empty() {
            self.m = store.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (k, (_, t)) in store.iter_mut().enumerate() {
            let g = t.grad().expect("checked").to_vec();
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, p) in t.data_mut().iter_mut().enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                *p -= lr * (mhat / (vhat.sqrt() + self.eps) + self.weight_decay * *p);
            }
        }
        Ok(())
    }
}

/// Either optimizer behind one interface, selected by [`OptimConfig::kind`].
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd(Sgd),
    Adam(Adam),
}

impl Optimizer {
    pub fn from_config(cfg: &OptimConfig) -> Self {
        match cfg.kind {
            OptimizerKind::Sgd => Optimizer::Sgd(Sgd {
                weight_decay: cfg.weight_decay,
            }),
            OptimizerKind::Adam => {
                Optimizer::Adam(Adam::new(cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay))
            }
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, lr: f64) -> Result<()> {
        match self {
            Optimizer::Sgd(o) => o.step(store, lr),
            Optimizer::Adam(o) => o.step(store, lr),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tensor;

    fn one(value: f64, grad: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("p", Tensor::row(&[value])).unwrap();
        s.get_mut("p").unwrap().set_grad(Some(vec![grad])).unwrap();
        s
    }

    #[test]
    fn sgd_basic_step() {
        let mut s = one(1.0, 1.0);
        Sgd { weight_decay: 0.0 }.step(&mut s, 0.1).unwrap();
        assert!((s.get("p").unwrap().data()[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn decoupled_decay_only() {
        let mut s = one(2.0, 0.0);
        Adam::new(0.9, 0.999, 1e-8, 0.06).step(&mut s, 1.0).unwrap();
        assert!((s.get("p").unwrap().data()[0] - 2.0 * (1.0 - 0.06)).abs() < 1e-15);

        let mut s = one(2.0, 0.0);
        Sgd { weight_decay: 0.06 }.step(&mut s, 1.0).unwrap();
        assert!((s.get("p").unwrap().data()[0] - 2.0 * (1.0 - 0.06)).abs() < 1e-15);
    }

    #[test]
    fn missing_gradient_is_state_error() {
        let mut s = ParamStore::new();
        s.insert("p", Tensor::row(&[1.0])).unwrap();
        assert!(matches!(
            Adam::new(0.9, 0.999, 1e-8, 0.0).step(&mut s, 0.1),
            Err(TensorError::State(_))
        ));
        assert!(matches!(
            Sgd { weight_decay: 0.0 }.step(&mut s, 0.1),
            Err(TensorError::State(_))
        ));
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut s = one(1.0, 3.0);
        Adam::new(0.9, 0.999, 1e-8, 0.0).step(&mut s, 0.01).unwrap();
        assert!((s.get("p").unwrap().data()[0] - 0.99).abs() < 1e-8);
    }

    #[test]
    fn warmup_then_decay() {
        let s = LrSchedule {
            base_lr: 1e-6,
            final_lr: 1e-7,
            warmup_steps: 100,
            total_steps: 1100,
        };
        assert!((s.lr_at(0) - 1e-6 / 100.0).abs() < 1e-20);
        assert!((s.lr_at(99) - 1e-6).abs() < 1e-20);
        assert!((s.lr_at(100) - 1e-6).abs() < 1e-20);
        assert!((s.lr_at(600) - 5.5e-7).abs() < 1e-18);
        assert!((s.lr_at(1100) - 1e-7).abs() < 1e-20);
        assert!((s.lr_at(5000) - 1e-7).abs() < 1e-20);
    }
}
