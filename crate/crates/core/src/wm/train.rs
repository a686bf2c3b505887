//! Teacher-forced training and evaluation of the world model.

use bwm_tensor::{Graph, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{loss_wm, WmConfig, WorldModel};
use crate::codec::BehaviorEncoding;
use crate::error::{Error, Result};
use crate::metrics::{L2Protocol, PlanMetrics};
use crate::sim::{featurize, Episode, Trajectory, N_HISTORY};
use crate::training::{Stepper, TrainConfig};

/// One supervised example: history latents, conditioning, and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct WmSample {
    pub scene_id: u64,
    pub history: Vec<Vec<f64>>,
    pub next_latent: Vec<f64>,
    pub gt: Trajectory,
    pub behavior: Vec<f64>,
}

pub fn build_samples(episodes: &[Episode], behaviors: &[BehaviorEncoding]) -> Result<Vec<WmSample>> {
    if episodes.len() != behaviors.len() {
        return Err(Error::Input(format!(
            "{} episodes but {} behavior encodings",
            episodes.len(),
            behaviors.len()
        )));
    }
    episodes
        .iter()
        .zip(behaviors)
        .map(|(ep, b)| {
            let history = (0..N_HISTORY)
                .map(|t| featurize(ep, t).map(|f| f.features))
                .collect::<Result<Vec<_>>>()?;
            Ok(WmSample {
                scene_id: ep.scene_id,
                history,
                next_latent: featurize(ep, N_HISTORY)?.features,
                gt: ep.ego_future.clone(),
                behavior: b.values.to_vec(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WmEpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val: PlanMetrics,
    pub val_latent_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WmTrainReport {
    pub epochs: Vec<WmEpochMetrics>,
}

fn sample_loss(model: &WorldModel, g: &mut Graph, s: &WmSample) -> Result<bwm_tensor::Var> {
    let (wp, z) = model.forward(g, &s.history, &s.behavior)?;
    let gt = g.constant(Tensor::new(vec![s.gt.len(), 2], s.gt.flat())?);
    let next = g.constant(Tensor::row(&s.next_latent));
    loss_wm(g, wp, gt, z, next, model.cfg.latent_loss_weight)
}

/// Predicted trajectories and next latents for every sample, in order.
pub fn predict_all(model: &WorldModel, samples: &[WmSample]) -> Result<Vec<(Trajectory, Vec<f64>)>> {
    samples
        .par_iter()
        .map(|s| model.predict(&s.history, &s.behavior))
        .collect()
}

/// Plan metrics on `episodes` (aligned with `samples`) and the mean latent MSE.
pub fn evaluate_wm(
    model: &WorldModel,
    samples: &[WmSample],
    episodes: &[Episode],
    protocol: L2Protocol,
) -> Result<(PlanMetrics, f64)> {
    let preds = predict_all(model, samples)?;
    let trajs: Vec<Trajectory> = preds.iter().map(|(t, _)| t.clone()).collect();
    let metrics = PlanMetrics::compute(&trajs, episodes, protocol)?;
    let lat = if samples.is_empty() {
        0.0
    } else {
        preds
            .iter()
            .zip(samples)
            .map(|((_, z), s)| z.iter().zip(&s.next_latent).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / z.len() as f64)
            .sum::<f64>()
            / samples.len() as f64
    };
    Ok((metrics, lat))
}

/// Train a fresh model initialised from `seed`. Validation metrics are
/// computed after every epoch.
pub fn train_wm(
    cfg: WmConfig,
    train: &[WmSample],
    val: &[WmSample],
    val_episodes: &[Episode],
    tcfg: &TrainConfig,
    seed: u64,
    protocol: L2Protocol,
) -> Result<(WorldModel, WmTrainReport)> {
    if train.is_empty() {
        return Err(Error::Input("empty training set".into()));
    }
    let mut model = WorldModel::new(cfg, seed)?;
    let mut stepper = Stepper::new(tcfg, train.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD47A);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut report = WmTrainReport { epochs: Vec::new() };
    model.store.zero_grad();
    for epoch in 0..tcfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(tcfg.batch_size.max(1)) {
            for &i in batch {
                let mut g = Graph::new();
                let loss = sample_loss(&model, &mut g, &train[i])?;
                total += g.scalar(loss);
                let grads = g.backward(loss)?;
                model.store.accumulate(&g, &grads);
            }
            stepper.apply(&mut model.store, batch.len())?;
        }
        let (val_metrics, val_latent_mse) = evaluate_wm(&model, val, val_episodes, protocol)?;
        report.epochs.push(WmEpochMetrics {
            epoch: epoch + 1,
            train_loss: total / train.len() as f64,
            val: val_metrics,
            val_latent_mse,
        });
    }
    Ok((model, report))
}
