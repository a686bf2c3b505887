//! Behavior-conditioned latent world model.
//!
//! History latents are embedded into view tokens; learned waypoint queries
//! cross-attend over the views with the projected behavior appended to both
//! sides; an action-aware MLP mixes pooled views, flattened waypoints and
//! (optionally) the behavior into a token that attends over the views to
//! forecast the next latent frame.

mod train;

use bwm_tensor::{AttentionBlock, AttentionConfig, Graph, Linear, ParamStore, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::ENCODING_WIDTH;
use crate::error::{Error, Result};
use crate::sim::{Trajectory, FEATURE_DIM, N_FUTURE, N_HISTORY};

pub use train::{
    build_samples, evaluate_wm, predict_all, train_wm, WmEpochMetrics, WmSample, WmTrainReport,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WmConfig {
    pub latent_dim: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub n_waypoints: usize,
    pub history_len: usize,
    pub behavior_width: usize,
    /// Feed the behavior into the latent predictor as well.
    pub concat_in_wm_head: bool,
    /// Append the projected behavior row in the waypoint decoder.
    pub condition_waypoint_decoder: bool,
    pub latent_loss_weight: f64,
    /// Waypoint head outputs are multiplied by this (meters).
    pub waypoint_scale: f64,
}

impl Default for WmConfig {
    fn default() -> Self {
        Self {
            latent_dim: FEATURE_DIM,
            model_dim: 32,
            heads: 2,
            ff_dim: 64,
            n_waypoints: N_FUTURE,
            history_len: N_HISTORY,
            behavior_width: ENCODING_WIDTH,
            concat_in_wm_head: true,
            condition_waypoint_decoder: true,
            latent_loss_weight: 1.0,
            waypoint_scale: 10.0,
        }
    }
}

impl WmConfig {
    fn validate(&self) -> Result<()> {
        if self.n_waypoints != N_FUTURE {
            return Err(Error::Config(format!("n_waypoints must be {N_FUTURE}")));
        }
        if self.behavior_width != ENCODING_WIDTH {
            return Err(Error::Config(format!("behavior_width must be {ENCODING_WIDTH}")));
        }
        if self.heads == 0 || self.model_dim % self.heads != 0 {
            return Err(Error::Config("model_dim must be divisible by heads".into()));
        }
        Ok(())
    }

    fn attention(&self) -> AttentionConfig {
        AttentionConfig {
            model_dim: self.model_dim,
            heads: self.heads,
            ff_dim: self.ff_dim,
            pre_norm: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WorldModel {
    pub cfg: WmConfig,
    pub store: ParamStore,
    embed: Linear,
    view_block: AttentionBlock,
    behavior_proj: Linear,
    wp_block: AttentionBlock,
    wp_head: Linear,
    mlp1: Linear,
    mlp2: Linear,
    wm_block: AttentionBlock,
    latent_head: Linear,
}

impl WorldModel {
    /// Parameter shapes depend only on widths, never on the conditioning flags.
    pub fn new(cfg: WmConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new();
        let (d, f) = (cfg.model_dim, cfg.latent_dim);
        let att = cfg.attention();
        let embed = Linear::init(&mut s, "enc.embed", f, d, &mut rng)?;
        s.init_uniform("enc.pos", &[cfg.history_len, d], 0.1, &mut rng)?;
        let view_block = AttentionBlock::init(&mut s, "enc.block", att, &mut rng)?;
        s.init_uniform("wp.queries", &[cfg.n_waypoints, d], 0.5, &mut rng)?;
        let behavior_proj = Linear::init(&mut s, "wp.behavior", cfg.behavior_width, d, &mut rng)?;
        let wp_block = AttentionBlock::init(&mut s, "wp.block", att, &mut rng)?;
        let wp_head = Linear::init(&mut s, "wp.head", d, 2, &mut rng)?;
        let mlp_in = d + 2 * cfg.n_waypoints + cfg.behavior_width;
        let mlp1 = Linear::init(&mut s, "wm.mlp1", mlp_in, d, &mut rng)?;
        let mlp2 = Linear::init(&mut s, "wm.mlp2", d, d, &mut rng)?;
        let wm_block = AttentionBlock::init(&mut s, "wm.block", att, &mut rng)?;
        let latent_head = Linear::init(&mut s, "wm.head", d, f, &mut rng)?;
        Ok(Self {
            cfg,
            store: s,
            embed,
            view_block,
            behavior_proj,
            wp_block,
            wp_head,
            mlp1,
            mlp2,
            wm_block,
            latent_head,
        })
    }

    /// Rebuild from a parameter store whose shapes match `cfg`.
    pub fn from_store(cfg: WmConfig, store: ParamStore) -> Result<Self> {
        let mut m = Self::new(cfg, 0)?;
        if m.store.shapes() != store.shapes() {
            return Err(Error::Config("checkpoint shapes do not match the world-model config".into()));
        }
        m.store = store;
        Ok(m)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut meta = std::collections::BTreeMap::new();
        meta.insert("model".to_string(), serde_json::json!("world_model"));
        meta.insert("config".to_string(), serde_json::to_value(&self.cfg)?);
        Ok(self.store.save(path, &meta)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Config(format!("world-model checkpoint {} not found", path.display())));
        }
        let (store, meta) = ParamStore::load(path)?;
        if meta.get("model").and_then(|m| m.as_str()) != Some("world_model") {
            return Err(Error::Config(format!("{} is not a world-model checkpoint", path.display())));
        }
        let cfg = meta
            .get("config")
            .cloned()
            .ok_or_else(|| Error::Config("checkpoint lacks config".into()))?;
        Self::from_store(serde_json::from_value(cfg)?, store)
    }

    /// History frames `[history_len × F]` → view tokens `[history_len × D]`.
    pub fn encode_views(&self, g: &mut Graph, history: &[Vec<f64>]) -> Result<Var> {
        if history.len() != self.cfg.history_len {
            return Err(Error::Input(format!(
                "expected {} history frames, got {}",
                self.cfg.history_len,
                history.len()
            )));
        }
        if history.iter().any(|f| f.len() != self.cfg.latent_dim) {
            return Err(Error::Input(format!("history frames must have {} features", self.cfg.latent_dim)));
        }
        let h = g.constant(Tensor::from_rows(history)?);
        self.encode_views_var(g, h)
    }

    fn encode_views_var(&self, g: &mut Graph, h: Var) -> Result<Var> {
        let x = self.embed.forward(g, &self.store, h)?;
        let pos = g.param(&self.store, "enc.pos")?;
        let x = g.add(x, pos)?;
        Ok(self.view_block.forward(g, &self.store, x, x, false)?.out)
    }

    fn check_behavior(&self, behavior: &[f64]) -> Result<()> {
        if behavior.len() != self.cfg.behavior_width {
            return Err(Error::Input(format!(
                "behavior width {} (expected {})",
                behavior.len(),
                self.cfg.behavior_width
            )));
        }
        Ok(())
    }

    /// Waypoints `[n_waypoints × 2]` in meters.
    pub fn waypoint_decode(&self, g: &mut Graph, views: Var, behavior: &[f64]) -> Result<Var> {
        self.check_behavior(behavior)?;
        let b = g.constant(Tensor::row(behavior));
        self.waypoint_decode_var(g, views, b)
    }

    fn waypoint_decode_var(&self, g: &mut Graph, views: Var, b: Var) -> Result<Var> {
        let q = g.param(&self.store, "wp.queries")?;
        let out = if self.cfg.condition_waypoint_decoder {
            let c = self.behavior_proj.forward(g, &self.store, b)?;
            let qc = g.concat_rows(&[q, c])?;
            let vc = g.concat_rows(&[views, c])?;
            let o = self.wp_block.forward(g, &self.store, qc, vc, false)?.out;
            g.slice_rows(o, 0, self.cfg.n_waypoints)?
        } else {
            self.wp_block.forward(g, &self.store, q, views, false)?.out
        };
        let wp = self.wp_head.forward(g, &self.store, out)?;
        Ok(g.scale(wp, self.cfg.waypoint_scale))
    }

    /// Next latent `[1 × F]`. With `concat` off the behavior slots are fed as
    /// zeros, so the argument never reaches the computation.
    pub fn wm_predict(&self, g: &mut Graph, views: Var, waypoints: Var, behavior: &[f64], concat: bool) -> Result<Var> {
        self.check_behavior(behavior)?;
        let b = if concat {
            g.constant(Tensor::row(behavior))
        } else {
            g.constant(Tensor::zeros(&[1, self.cfg.behavior_width]))
        };
        self.wm_predict_var(g, views, waypoints, b)
    }

    fn wm_predict_var(&self, g: &mut Graph, views: Var, waypoints: Var, b: Var) -> Result<Var> {
        let pooled = g.mean_rows(views)?;
        let flat = g.reshape(waypoints, &[1, 2 * self.cfg.n_waypoints])?;
        let flat = g.scale(flat, 1.0 / self.cfg.waypoint_scale);
        let x = g.concat_cols(&[pooled, flat, b])?;
        let h = self.mlp1.forward(g, &self.store, x)?;
        let h = g.relu(h);
        let token = self.mlp2.forward(g, &self.store, h)?;
        let src = g.concat_rows(&[views, token])?;
        let out = self.wm_block.forward(g, &self.store, token, src, false)?.out;
        Ok(self.latent_head.forward(g, &self.store, out)?)
    }

    /// Full forward for one sample: (waypoints `[6×2]`, next latent `[1×F]`).
    pub fn forward(&self, g: &mut Graph, history: &[Vec<f64>], behavior: &[f64]) -> Result<(Var, Var)> {
        let views = self.encode_views(g, history)?;
        let wp = self.waypoint_decode(g, views, behavior)?;
        let z = self.wm_predict(g, views, wp, behavior, self.cfg.concat_in_wm_head)?;
        Ok((wp, z))
    }

    /// Trajectory and next-latent forecast as plain values.
    pub fn predict(&self, history: &[Vec<f64>], behavior: &[f64]) -> Result<(Trajectory, Vec<f64>)> {
        let mut g = Graph::new();
        let (wp, z) = self.forward(&mut g, history, behavior)?;
        Ok((Trajectory::from_flat(g.value(wp).data())?, g.value(z).data().to_vec()))
    }

    /// Trajectory at t₀ plus `n_waypoints` latents forecast by feeding each
    /// prediction back into the history window.
    pub fn rollout(&self, history: &[Vec<f64>], behavior: &[f64]) -> Result<(Trajectory, Vec<Vec<f64>>)> {
        let mut window = history.to_vec();
        let mut traj = None;
        let mut latents = Vec::with_capacity(self.cfg.n_waypoints);
        for _ in 0..self.cfg.n_waypoints {
            let (t, z) = self.predict(&window, behavior)?;
            traj.get_or_insert(t);
            window.remove(0);
            window.push(z.clone());
            latents.push(z);
        }
        Ok((traj.expect("at least one step"), latents))
    }

    /// d(output)/d(behavior slot) by central differences on the predicted
    /// waypoints (`latent = false`) or latent (`latent = true`), summed.
    pub fn behavior_sensitivity(&self, history: &[Vec<f64>], behavior: &[f64], slot: usize, latent: bool) -> Result<f64> {
        let h = 1e-4;
        let eval = |b: &[f64]| -> Result<f64> {
            let (t, z) = self.predict(history, b)?;
            Ok(if latent { z.iter().sum() } else { t.flat().iter().sum() })
        };
        let mut plus = behavior.to_vec();
        let mut minus = behavior.to_vec();
        plus[slot] += h;
        minus[slot] -= h;
        Ok((eval(&plus)? - eval(&minus)?) / (2.0 * h))
    }
}

/// Mean squared Euclidean waypoint error plus λ · latent MSE.
pub fn loss_wm(g: &mut Graph, pred_traj: Var, gt_traj: Var, pred_latent: Var, next_latent: Var, lambda: f64) -> Result<Var> {
    // mse averages over both coordinates; the per-waypoint squared norm is twice that
    let wp = g.mse(pred_traj, gt_traj)?;
    let wp = g.scale(wp, 2.0);
    let lat = g.mse(pred_latent, next_latent)?;
    let lat = g.scale(lat, lambda);
    Ok(g.add(wp, lat)?)
}
