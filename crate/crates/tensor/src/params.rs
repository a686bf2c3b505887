use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::graph::{Gradients, Graph};
use crate::tensor::{Result, Tensor, TensorError};

pub const CHECKPOINT_FORMAT: &str = "bwm-params";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Named, ordered collection of trainable tensors.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    #[serde(default)]
    meta: BTreeMap<String, Value>,
    params: Vec<CheckpointEntry>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointEntry {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(TensorError::Parameter(format!("duplicate parameter '{name}'")));
        }
        self.index.insert(name.to_string(), self.entries.len());
        self.entries
            .push((name.to_string(), tensor.with_requires_grad(true)));
        Ok(())
    }

    /// Uniform initialisation in `[-bound, bound]`.
    pub fn init_uniform(
        &mut self,
        name: &str,
        shape: &[usize],
        bound: f64,
        rng: &mut dyn RngCore,
    ) -> Result<()> {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
        self.insert(name, Tensor::new(shape.to_vec(), data)?)
    }

    /// Glorot-uniform weight for a `fan_in × fan_out` matrix.
    pub fn init_glorot(
        &mut self,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut dyn RngCore,
    ) -> Result<()> {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        self.init_uniform(name, &[fan_in, fan_out], bound, rng)
    }

    pub fn init_zeros(&mut self, name: &str, shape: &[usize]) -> Result<()> {
        self.insert(name, Tensor::zeros(shape))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let i = self.index_of(name)?;
        Some(&mut self.entries[i].1)
    }

    pub fn get_index(&self, idx: usize) -> &Tensor {
        &self.entries[idx].1
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    /// `(name, shape)` pairs in store order.
    pub fn shapes(&self) -> Vec<(String, Vec<usize>)> {
        self.entries
            .iter()
            .map(|(n, t)| (n.clone(), t.shape().to_vec()))
            .collect()
    }

    /// Set every gradient buffer to zeros.
    pub fn zero_grad(&mut self) {
        for (_, t) in &mut self.entries {
            let n = t.numel();
            t.set_grad(Some(vec![0.0; n])).expect("same length");
        }
    }

    /// Add the parameter gradients of one backward pass into the stored
    /// gradient buffers.
    pub fn accumulate(&mut self, graph: &Graph, grads: &Gradients) {
        for (idx, g) in graph.param_grads(grads) {
            let t = &mut self.entries[idx].1;
            match t.grad_mut() {
                Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
                None => t.set_grad(Some(g.to_vec())).expect("same length"),
            }
        }
    }

    /// Multiply every gradient by `c`.
    pub fn scale_grads(&mut self, c: f64) {
        for (_, t) in &mut self.entries {
            if let Some(g) = t.grad_mut() {
                g.iter_mut().for_each(|v| *v *= c);
            }
        }
    }

    /// Rescale all gradients so their global L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self
            .entries
            .iter()
            .filter_map(|(_, t)| t.grad())
            .flatten()
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt();
        if norm > max_norm && norm > 0.0 {
            self.scale_grads(max_norm / norm);
        }
        norm
    }

    pub fn to_json(&self, meta: &BTreeMap<String, Value>) -> Result<String> {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            meta: meta.clone(),
            params: self
                .entries
                .iter()
                .map(|(n, t)| CheckpointEntry {
                    name: n.clone(),
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                })
                .collect(),
        };
        serde_json::to_string(&ck).map_err(|e| TensorError::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<(Self, BTreeMap<String, Value>)> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| TensorError::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(TensorError::Checkpoint(format!("unknown format '{}'", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(TensorError::Checkpoint(format!(
                "unsupported version {}",
                ck.version
            )));
        }
        let mut store = Self::new();
        for e in ck.params {
            store.insert(&e.name, Tensor::new(e.shape, e.data)?)?;
        }
        Ok((store, ck.meta))
    }

    pub fn save(&self, path: &Path, meta: &BTreeMap<String, Value>) -> Result<()> {
        fs::write(path, self.to_json(meta)?)
            .map_err(|e| TensorError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<(Self, BTreeMap<String, Value>)> {
        let text = fs::read_to_string(path)
            .map_err(|e| TensorError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
