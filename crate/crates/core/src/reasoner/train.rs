//! Training and evaluation loops for the reasoner.

use std::path::Path;

use bwm_tensor::Graph;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{select_positions, Reasoner, ReasonerConfig};
use crate::annotation::{assemble_prompt, detokenize, Vocab};
use crate::codec::derive_target;
use crate::error::{Error, Result};
use crate::metrics::{mae_behavior, TextMetrics};
use crate::sim::Episode;
use crate::training::{Stepper, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ReasonerSample {
    pub scene_id: u64,
    pub prompt: Vec<usize>,
    /// Target output span, `[J]` … `[EOS]`.
    pub text: Vec<usize>,
    /// `(α, v)` from the ground-truth future.
    pub target: (f64, f64),
}

pub fn build_reasoner_samples(episodes: &[Episode], vocab: &Vocab) -> Result<Vec<ReasonerSample>> {
    episodes
        .iter()
        .map(|ep| {
            let t = derive_target(&ep.ego_future)?;
            Ok(ReasonerSample {
                scene_id: ep.scene_id,
                prompt: assemble_prompt(ep).ids(vocab),
                text: vocab.encode_record(&ep.annotation),
                target: (t.alpha, t.v),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasonerEpoch {
    pub epoch: usize,
    /// Mean training ℓ_text.
    pub text_loss: f64,
    /// Mean training ℓ_behavior (dropout active).
    pub behavior_loss: f64,
    /// Teacher-forced validation MAE.
    pub mae_angle: f64,
    pub mae_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasonerReport {
    /// Validation MAE `(angle, speed)` of the freshly initialised model.
    pub untrained_mae: (f64, f64),
    pub epochs: Vec<ReasonerEpoch>,
}

/// Generation-mode evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasonerEval {
    pub mae_angle: f64,
    pub mae_speed: f64,
    pub text: TextMetrics,
    /// Fraction of outputs that parse as a valid record.
    pub parse_rate: f64,
    pub n_samples: usize,
}

/// Teacher-forced `(α̂, v̂)` for one sample, dropout off.
fn teacher_forced_behavior(model: &Reasoner, s: &ReasonerSample) -> Result<(f64, f64)> {
    let (seq, span) = model.training_sequence(&s.prompt, &s.text);
    let mut g = Graph::new();
    let h = model.hidden_states(&mut g, &seq)?;
    let idx = select_positions(model.cfg.behavior_strategy, span)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let b = model.behavior_forward(&mut g, h, &idx, false, &mut rng)?;
    let v = g.value(b).data();
    Ok((v[0], v[1]))
}

/// Teacher-forced validation MAE `(angle, speed)`.
pub fn validation_mae(model: &Reasoner, samples: &[ReasonerSample]) -> Result<(f64, f64)> {
    let preds = samples
        .par_iter()
        .map(|s| teacher_forced_behavior(model, s))
        .collect::<Result<Vec<_>>>()?;
    let targets: Vec<_> = samples.iter().map(|s| s.target).collect();
    mae_behavior(&preds, &targets)
}

fn sample_rng(seed: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    let mut z = seed ^ ((epoch as u64) << 32) ^ index as u64;
    // splitmix64 finaliser
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

/// Optimise `ℓ = ℓ_text + ℓ_behavior` on `train`, logging teacher-forced
/// validation MAE on `val` after every epoch.
pub fn train_reasoner(
    cfg: ReasonerConfig,
    train: &[ReasonerSample],
    val: &[ReasonerSample],
    tcfg: &TrainConfig,
    seed: u64,
) -> Result<(Reasoner, ReasonerReport)> {
    if train.is_empty() {
        return Err(Error::Input("empty training set".into()));
    }
    let mut model = Reasoner::new(cfg, seed)?;
    let untrained_mae = if val.is_empty() { (0.0, 0.0) } else { validation_mae(&model, val)? };
    let mut stepper = Stepper::new(tcfg, train.len());
    let mut shuffle = ChaCha8Rng::seed_from_u64(seed ^ 0x5EA5);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs = Vec::with_capacity(tcfg.epochs);
    model.store.zero_grad();
    for epoch in 0..tcfg.epochs {
        order.shuffle(&mut shuffle);
        let (mut text_sum, mut beh_sum) = (0.0, 0.0);
        for batch in order.chunks(tcfg.batch_size.max(1)) {
            // per-sample graphs in parallel, accumulated in batch order
            let results = batch
                .par_iter()
                .map(|&i| {
                    let s = &train[i];
                    let mut rng = sample_rng(seed, epoch, i);
                    let mut g = Graph::new();
                    let l = model.example_loss(&mut g, &s.prompt, &s.text, s.target, true, &mut rng)?;
                    let grads = g.backward(l.total)?;
                    let (t, b) = (g.scalar(l.text), g.scalar(l.behavior));
                    Ok((g, grads, t, b))
                })
                .collect::<Result<Vec<_>>>()?;
            for (g, grads, t, b) in &results {
                model.store.accumulate(g, grads);
                text_sum += t;
                beh_sum += b;
            }
            stepper.apply(&mut model.store, batch.len())?;
        }
        let (mae_angle, mae_speed) = if val.is_empty() { (0.0, 0.0) } else { validation_mae(&model, val)? };
        epochs.push(ReasonerEpoch {
            epoch: epoch + 1,
            text_loss: text_sum / train.len() as f64,
            behavior_loss: beh_sum / train.len() as f64,
            mae_angle,
            mae_speed,
        });
    }
    Ok((model, ReasonerReport { untrained_mae, epochs }))
}

/// Human-readable words of an output span: markers and enum tokens dropped.
fn surface_text(vocab: &Vocab, ids: &[usize]) -> String {
    let end = ids.iter().position(|&t| t == Vocab::EOS).unwrap_or(ids.len());
    let stop = ids[..end].iter().position(|&t| t == Vocab::T).unwrap_or(end);
    let words: Vec<&str> = ids[..stop]
        .iter()
        .filter(|&&t| t > Vocab::UNK && !vocab.is_beh(t))
        .map(|&t| vocab.token(t))
        .collect();
    detokenize(&words)
}

/// Greedy generation on every sample: behavior MAE, text overlap with the
/// reference annotation, and the parse rate. Also returns the per-sample
/// `(α̂, v̂)` in input order.
pub fn evaluate_reasoner(model: &Reasoner, samples: &[ReasonerSample]) -> Result<(ReasonerEval, Vec<(f64, f64)>)> {
    let outs = samples
        .par_iter()
        .map(|s| model.predict_behavior(&s.prompt))
        .collect::<Result<Vec<_>>>()?;
    let preds: Vec<(f64, f64)> = outs.iter().map(|(b, _)| *b).collect();
    let targets: Vec<_> = samples.iter().map(|s| s.target).collect();
    let (mae_angle, mae_speed) = if samples.is_empty() { (0.0, 0.0) } else { mae_behavior(&preds, &targets)? };
    let pairs: Vec<(String, String)> = outs
        .iter()
        .zip(samples)
        .map(|((_, o), s)| (surface_text(&model.vocab, &o.text), surface_text(&model.vocab, &s.text)))
        .collect();
    let parsed = outs.iter().filter(|(_, o)| o.record.is_some()).count();
    let eval = ReasonerEval {
        mae_angle,
        mae_speed,
        text: TextMetrics::compute(&pairs),
        parse_rate: if samples.is_empty() { 0.0 } else { parsed as f64 / samples.len() as f64 },
        n_samples: samples.len(),
    };
    Ok((eval, preds))
}

/// One row per epoch: `epoch,text_loss,behavior_loss,MAE_angle,MAE_speed`.
pub fn write_epoch_csv(path: &Path, report: &ReasonerReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Input(format!("{other:?}")),
    })?;
    w.write_record(["epoch", "text_loss", "behavior_loss", "MAE_angle", "MAE_speed"])?;
    for e in &report.epochs {
        w.write_record([
            e.epoch.to_string(),
            format!("{:.6}", e.text_loss),
            format!("{:.6}", e.behavior_loss),
            format!("{:.6}", e.mae_angle),
            format!("{:.6}", e.mae_speed),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
