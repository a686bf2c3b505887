//! Reusable layers built from [`Graph`] primitives. Parameters live in a
//! [`ParamStore`] under a dotted name prefix.

use rand::RngCore;

use crate::graph::{Graph, Var};
use crate::params::ParamStore;
use crate::tensor::{Result, TensorError};

/// Affine map `x·W + b`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub prefix: String,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        store.init_glorot(&format!("{prefix}.w"), fan_in, fan_out, rng)?;
        store.init_zeros(&format!("{prefix}.b"), &[fan_out])?;
        Ok(Self::named(prefix, fan_in, fan_out))
    }

    /// Handle to parameters that already exist in a store.
    pub fn named(prefix: &str, fan_in: usize, fan_out: usize) -> Self {
        Self {
            prefix: prefix.to_string(),
            fan_in,
            fan_out,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, &format!("{}.w", self.prefix))?;
        let b = g.param(store, &format!("{}.b", self.prefix))?;
        let y = g.matmul(x, w)?;
        g.add(y, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionConfig {
    pub model_dim: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub pre_norm: bool,
}

/// Scaled dot-product attention followed by a residual connection and a
/// two-layer ReLU feedforward with its own residual.
#[derive(Debug, Clone)]
pub struct AttentionBlock {
    pub prefix: String,
    pub cfg: AttentionConfig,
    ff1: Linear,
    ff2: Linear,
}

/// Block output plus the per-head attention weight matrices.
#[derive(Debug, Clone)]
pub struct AttentionOutput {
    pub out: Var,
    pub weights: Vec<Var>,
}

impl AttentionBlock {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        cfg: AttentionConfig,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        if cfg.heads == 0 || cfg.model_dim % cfg.heads != 0 {
            return Err(TensorError::Dimension(format!(
                "model dim {} not divisible by {} heads",
                cfg.model_dim, cfg.heads
            )));
        }
        let d = cfg.model_dim;
        for m in ["wq", "wk", "wv", "wo"] {
            store.init_glorot(&format!("{prefix}.{m}"), d, d, rng)?;
        }
        Linear::init(store, &format!("{prefix}.ff1"), d, cfg.ff_dim, rng)?;
        Linear::init(store, &format!("{prefix}.ff2"), cfg.ff_dim, d, rng)?;
        Ok(Self::named(prefix, cfg))
    }

    pub fn named(prefix: &str, cfg: AttentionConfig) -> Self {
        Self {
            prefix: prefix.to_string(),
            cfg,
            ff1: Linear::named(&format!("{prefix}.ff1"), cfg.model_dim, cfg.ff_dim),
            ff2: Linear::named(&format!("{prefix}.ff2"), cfg.ff_dim, cfg.model_dim),
        }
    }

    /// `queries[m×D]` attend over `source[n×D]`. With `causal`, query row
    /// `i` sees source rows `0..=i + (n − m)`.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        queries: Var,
        source: Var,
        causal: bool,
    ) -> Result<AttentionOutput> {
        let d = self.cfg.model_dim;
        let (_, qd) = g.value(queries).dims2()?;
        let (_, sd) = g.value(source).dims2()?;
        if qd != d || sd != d {
            return Err(TensorError::Dimension(format!(
                "attention expects width {d}, got queries {qd} / source {sd}"
            )));
        }
        let p = |m: &str| format!("{}.{m}", self.prefix);
        let (qn, sn) = if self.cfg.pre_norm {
            let qn = g.layer_norm(queries)?;
            let sn = if source == queries { qn } else { g.layer_norm(source)? };
            (qn, sn)
        } else {
            (queries, source)
        };
        let wq = g.param(store, &p("wq"))?;
        let wk = g.param(store, &p("wk"))?;
        let wv = g.param(store, &p("wv"))?;
        let wo = g.param(store, &p("wo"))?;
        let q = g.matmul(qn, wq)?;
        let k = g.matmul(sn, wk)?;
        let v = g.matmul(sn, wv)?;

        let dh = d / self.cfg.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut ctx = Vec::with_capacity(self.cfg.heads);
        let mut weights = Vec::with_capacity(self.cfg.heads);
        for h in 0..self.cfg.heads {
            let (qh, kh, vh) = if self.cfg.heads == 1 {
                (q, k, v)
            } else {
                (
                    g.slice_cols(q, h * dh, dh)?,
                    g.slice_cols(k, h * dh, dh)?,
                    g.slice_cols(v, h * dh, dh)?,
                )
            };
            let kt = g.transpose(kh)?;
            let scores = g.matmul(qh, kt)?;
            let scores = g.scale(scores, scale);
            let w = if causal {
                g.causal_softmax(scores)?
            } else {
                g.softmax(scores)?
            };
            weights.push(w);
            ctx.push(g.matmul(w, vh)?);
        }
        let ctx = if ctx.len() == 1 { ctx[0] } else { g.concat_cols(&ctx)? };
        let attn = g.matmul(ctx, wo)?;
        let x1 = g.add(queries, attn)?;

        let hn = if self.cfg.pre_norm { g.layer_norm(x1)? } else { x1 };
        let h = self.ff1.forward(g, store, hn)?;
        let h = g.relu(h);
        let h = self.ff2.forward(g, store, h)?;
        let out = g.add(x1, h)?;
        Ok(AttentionOutput { out, weights })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn block(heads: usize) -> (ParamStore, AttentionBlock) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut s = ParamStore::new();
        let cfg = AttentionConfig {
            model_dim: 4,
            heads,
            ff_dim: 8,
            pre_norm: true,
        };
        let b = AttentionBlock::init(&mut s, "att", cfg, &mut rng).unwrap();
        (s, b)
    }

    #[test]
    fn single_key_gets_all_weight() {
        let (s, b) = block(2);
        let mut g = Graph::new();
        let q = g.constant(Tensor::from_rows(&[vec![1.0, -2.0, 0.5, 3.0], vec![0.0, 1.0, 2.0, 0.0]]).unwrap());
        let src = g.constant(Tensor::row(&[9.0, -1.0, 4.0, 2.0]));
        let out = b.forward(&mut g, &s, q, src, false).unwrap();
        for w in out.weights {
            assert_eq!(g.value(w).data(), &[1.0, 1.0]);
        }
    }

    #[test]
    fn identical_keys_give_uniform_weights() {
        let (s, b) = block(1);
        let mut g = Graph::new();
        let q = g.constant(Tensor::row(&[1.0, 2.0, 3.0, 4.0]));
        let row = vec![0.3, -0.7, 1.1, 0.2];
        let src = g.constant(Tensor::from_rows(&[row.clone(), row.clone(), row]).unwrap());
        let out = b.forward(&mut g, &s, q, src, false).unwrap();
        for v in g.value(out.weights[0]).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn width_mismatch_is_error() {
        let (s, b) = block(2);
        let mut g = Graph::new();
        let q = g.constant(Tensor::zeros(&[1, 3]));
        let src = g.constant(Tensor::zeros(&[2, 4]));
        assert!(b.forward(&mut g, &s, q, src, false).is_err());
    }

    #[test]
    fn heads_must_divide_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = ParamStore::new();
        let cfg = AttentionConfig {
            model_dim: 5,
            heads: 2,
            ff_dim: 4,
            pre_norm: false,
        };
        assert!(AttentionBlock::init(&mut s, "a", cfg, &mut rng).is_err());
    }
}
