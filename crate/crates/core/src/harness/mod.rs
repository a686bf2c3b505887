//! Experiment orchestration behind the `bwm` command line: dataset
//! generation, two-stage training, evaluation and the ablation grids.
//!
//! Every command writes `resolved_config.json` and `provenance.json` next
//! to its outputs. Nothing time-dependent is recorded, so reruns with the
//! same config and seed produce byte-identical files.

mod config;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::annotation::{parse_record, Vocab};
use crate::codec::{attach_nav, encode_motion_vector, ground_truth_encoding, BehaviorEncoding, BehaviorTarget, Conditioning, MotionMode};
use crate::error::{Error, Result};
use crate::metrics::{write_mae_csv, write_plan_csv, write_text_csv, MaeRow, PlanMetrics, PlanRow, TextRow};
use crate::reasoner::{
    build_reasoner_samples, evaluate_reasoner, train_reasoner, write_epoch_csv, BehaviorStrategy, Reasoner,
    ReasonerEval, ReasonerReport,
};
use crate::sim::{generate_dataset, read_dataset, read_split, DatasetSummary, Episode};
use crate::wm::{build_samples, evaluate_wm, train_wm, WmConfig, WmTrainReport, WorldModel};

pub use config::{ArmDescriptor, ExperimentConfig, OUT_ENV};

pub const REASONER_DIR: &str = "reasoner";
pub const WM_DIR: &str = "wm";
pub const DATASET_DIR: &str = "dataset";
pub const REASONER_CKPT: &str = "reasoner.json";
pub const WM_CKPT: &str = "wm.json";
pub const ARM_FILE: &str = "arm.json";

/// Train/validation episodes of a dataset directory.
pub struct LoadedDataset {
    pub train: Vec<Episode>,
    pub val: Vec<Episode>,
}

pub fn load_dataset(dir: &Path) -> Result<LoadedDataset> {
    let (_, episodes) = read_dataset(dir)?;
    let split = read_split(dir, &episodes)?;
    let pick = |ids: &[u64]| -> Vec<Episode> {
        let set: std::collections::BTreeSet<u64> = ids.iter().copied().collect();
        episodes.iter().filter(|e| set.contains(&e.scene_id)).cloned().collect()
    };
    Ok(LoadedDataset {
        train: pick(&split.train),
        val: pick(&split.val),
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

/// `resolved_config.json` + `provenance.json` in `dir`.
fn write_run_files(dir: &Path, command: &str, cfg: &ExperimentConfig) -> Result<()> {
    write_json(&dir.join("resolved_config.json"), cfg)?;
    write_json(
        &dir.join("provenance.json"),
        &serde_json::json!({
            "command": command,
            "seed": cfg.seed,
            "git_describe": git_describe(),
            "crate_version": env!("CARGO_PKG_VERSION"),
        }),
    )
}

/// Generate a dataset into `cfg.dataset_dir()`.
pub fn cmd_gen(cfg: &ExperimentConfig) -> Result<DatasetSummary> {
    let dir = cfg.dataset_dir();
    let summary = generate_dataset(cfg.n_scenes, cfg.seed, &cfg.mix, &dir)?;
    write_run_files(&dir, "gen", cfg)?;
    Ok(summary)
}

/// Output of a reasoner training run.
pub struct ReasonerRun {
    pub model: Reasoner,
    pub report: ReasonerReport,
    pub eval: ReasonerEval,
    pub dir: PathBuf,
}

fn reasoner_config(cfg: &ExperimentConfig, strategy: BehaviorStrategy) -> crate::reasoner::ReasonerConfig {
    let mut rc = cfg.reasoner.clone();
    rc.behavior_strategy = strategy;
    rc
}

fn run_reasoner(cfg: &ExperimentConfig, data: &LoadedDataset, strategy: BehaviorStrategy) -> Result<(Reasoner, ReasonerReport, ReasonerEval)> {
    let vocab = Vocab::builtin();
    let train = build_reasoner_samples(&data.train, &vocab)?;
    let val = build_reasoner_samples(&data.val, &vocab)?;
    let (model, report) = train_reasoner(reasoner_config(cfg, strategy), &train, &val, &cfg.reasoner_train, cfg.seed)?;
    let (eval, _) = evaluate_reasoner(&model, &val)?;
    Ok((model, report, eval))
}

/// Stage one: train the reasoner with the arm's behavior strategy.
pub fn cmd_train_reasoner(cfg: &ExperimentConfig) -> Result<ReasonerRun> {
    let data = load_dataset(&cfg.dataset_dir())?;
    let (model, report, eval) = run_reasoner(cfg, &data, cfg.arm.behavior_strategy)?;
    let dir = cfg.out.join(REASONER_DIR);
    create_dir(&dir)?;
    model.save(&dir.join(REASONER_CKPT))?;
    write_epoch_csv(&dir.join("epochs.csv"), &report)?;
    write_reasoner_eval(&dir, &cfg.arm.behavior_strategy.label(), &eval)?;
    write_run_files(&dir, "train-reasoner", cfg)?;
    Ok(ReasonerRun { model, report, eval, dir })
}

fn write_reasoner_eval(dir: &Path, label: &str, eval: &ReasonerEval) -> Result<()> {
    write_text_csv(
        &dir.join("text_metrics.csv"),
        &[TextRow {
            arm: label.to_string(),
            metrics: eval.text,
        }],
    )?;
    write_mae_csv(
        &dir.join("behavior_mae.csv"),
        &[MaeRow {
            method: label.to_string(),
            mae_angle: eval.mae_angle,
            mae_speed: eval.mae_speed,
        }],
    )?;
    write_json(&dir.join("eval.json"), eval)
}

/// Conditioning vectors for `episodes` under `arm`. Reasoner conditioning
/// runs greedy generation and encodes the predicted motion vector.
pub fn arm_encodings(arm: &ArmDescriptor, episodes: &[Episode], reasoner: Option<&Reasoner>) -> Result<Vec<BehaviorEncoding>> {
    match arm.conditioning {
        Conditioning::Reasoner => {
            let model = reasoner.ok_or_else(|| Error::Config("reasoner conditioning requires a trained reasoner checkpoint".into()))?;
            let vocab = &model.vocab;
            episodes
                .par_iter()
                .map(|ep| {
                    let prompt = crate::annotation::assemble_prompt(ep).ids(vocab);
                    let ((alpha, v), _) = model.predict_behavior(&prompt)?;
                    let enc = encode_motion_vector(BehaviorTarget { alpha, v }, MotionMode::Full);
                    Ok(attach_nav(enc, ep.nav, arm.nav))
                })
                .collect()
        }
        c => episodes.iter().map(|ep| ground_truth_encoding(ep, c, arm.nav)).collect(),
    }
}

fn wm_config(cfg: &ExperimentConfig, arm: &ArmDescriptor) -> WmConfig {
    let mut w = cfg.wm.clone();
    w.concat_in_wm_head = arm.concat;
    w
}

/// Train and validate one world-model arm.
pub fn run_wm_arm(
    cfg: &ExperimentConfig,
    data: &LoadedDataset,
    arm: &ArmDescriptor,
    reasoner: Option<&Reasoner>,
) -> Result<(WorldModel, WmTrainReport, PlanMetrics)> {
    let train = build_samples(&data.train, &arm_encodings(arm, &data.train, reasoner)?)?;
    let val = build_samples(&data.val, &arm_encodings(arm, &data.val, reasoner)?)?;
    let (model, report) = train_wm(wm_config(cfg, arm), &train, &val, &data.val, &cfg.wm_train, cfg.seed, cfg.protocol)?;
    let (metrics, _) = evaluate_wm(&model, &val, &data.val, cfg.protocol)?;
    Ok((model, report, metrics))
}

fn resolve_reasoner(cfg: &ExperimentConfig) -> Result<Option<Reasoner>> {
    if cfg.arm.conditioning != Conditioning::Reasoner {
        return Ok(None);
    }
    let path = cfg.reasoner_checkpoint_path();
    if !path.is_file() {
        return Err(Error::Config(format!(
            "arm uses reasoner conditioning but no reasoner checkpoint exists at {}; run train-reasoner first",
            path.display()
        )));
    }
    Reasoner::load(&path).map(Some)
}

pub struct WmRun {
    pub model: WorldModel,
    pub report: WmTrainReport,
    pub metrics: PlanMetrics,
    pub dir: PathBuf,
}

fn write_wm_epochs(path: &Path, report: &WmTrainReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Input(e.to_string()))?;
    w.write_record(["epoch", "train_loss", "L2_1s", "L2_2s", "L2_3s", "Col_1s", "Col_2s", "Col_3s", "latent_mse"])?;
    for e in &report.epochs {
        let mut rec = vec![e.epoch.to_string(), format!("{:.6}", e.train_loss)];
        rec.extend(e.val.l2.iter().chain(&e.val.collision).map(|v| format!("{v:.6}")));
        rec.push(format!("{:.6}", e.val_latent_mse));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Stage two: train the world model for the configured arm. Fails before
/// writing anything when reasoner conditioning lacks a checkpoint.
pub fn cmd_train_wm(cfg: &ExperimentConfig) -> Result<WmRun> {
    let reasoner = resolve_reasoner(cfg)?;
    let data = load_dataset(&cfg.dataset_dir())?;
    let (model, report, metrics) = run_wm_arm(cfg, &data, &cfg.arm, reasoner.as_ref())?;
    let dir = cfg.out.join(WM_DIR);
    create_dir(&dir)?;
    model.save(&dir.join(WM_CKPT))?;
    write_json(&dir.join(ARM_FILE), &cfg.arm_record())?;
    write_wm_epochs(&dir.join("epochs.csv"), &report)?;
    write_plan_csv(&dir.join("plan_metrics.csv"), &[plan_row(&cfg.arm, metrics.clone())])?;
    write_run_files(&dir, "train-wm", cfg)?;
    Ok(WmRun { model, report, metrics, dir })
}

fn plan_row(arm: &ArmDescriptor, metrics: PlanMetrics) -> PlanRow {
    PlanRow {
        arm: arm.conditioning.label().to_string(),
        nav: arm.nav,
        concat: arm.concat,
        metrics,
    }
}

/// What `eval` produced.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalOutput {
    Plan { metrics: PlanMetrics, csv: PathBuf },
    Reasoner { eval: ReasonerEval, csv: PathBuf },
}

fn checkpoint_kind(path: &Path) -> Result<String> {
    if !path.is_file() {
        return Err(Error::Config(format!("checkpoint {} not found", path.display())));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let v: serde_json::Value = serde_json::from_str(&text)?;
    v.pointer("/meta/model")
        .and_then(|m| m.as_str())
        .map(String::from)
        .ok_or_else(|| Error::Config(format!("{} carries no model kind", path.display())))
}

/// Evaluate a checkpoint on the validation split. World-model checkpoints
/// read their arm from the `arm.json` beside them.
pub fn cmd_eval(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<EvalOutput> {
    let kind = checkpoint_kind(checkpoint)?;
    let data = load_dataset(&cfg.dataset_dir())?;
    let dir = cfg.out.join("eval");
    match kind.as_str() {
        "reasoner" => {
            let model = Reasoner::load(checkpoint)?;
            let val = build_reasoner_samples(&data.val, &model.vocab)?;
            let (eval, _) = evaluate_reasoner(&model, &val)?;
            create_dir(&dir)?;
            write_reasoner_eval(&dir, &model.cfg.behavior_strategy.label(), &eval)?;
            write_run_files(&dir, "eval", cfg)?;
            Ok(EvalOutput::Reasoner {
                eval,
                csv: dir.join("text_metrics.csv"),
            })
        }
        "world_model" => {
            let model = WorldModel::load(checkpoint)?;
            let arm_path = checkpoint.with_file_name(ARM_FILE);
            let arm: ArmDescriptor = match fs::read_to_string(&arm_path) {
                Ok(text) => serde_json::from_str::<config::ArmRecord>(&text)?.arm,
                Err(_) => cfg.arm.clone(),
            };
            let reasoner = if arm.conditioning == Conditioning::Reasoner {
                let mut c = cfg.clone();
                c.arm = arm.clone();
                resolve_reasoner(&c)?
            } else {
                None
            };
            let val = build_samples(&data.val, &arm_encodings(&arm, &data.val, reasoner.as_ref())?)?;
            let (metrics, _) = evaluate_wm(&model, &val, &data.val, cfg.protocol)?;
            create_dir(&dir)?;
            let csv = dir.join("plan_metrics.csv");
            write_plan_csv(&csv, &[plan_row(&arm, metrics.clone())])?;
            write_run_files(&dir, "eval", cfg)?;
            Ok(EvalOutput::Plan { metrics, csv })
        }
        other => Err(Error::Config(format!("unknown checkpoint kind '{other}'"))),
    }
}

/// The three ablation grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grid {
    /// {none, motion vector} × behavior in the latent predictor on/off.
    Concat,
    /// Every conditioning variant.
    Conditioning,
    /// Behavior-head token positions.
    Tokens,
}

impl Grid {
    pub fn as_str(self) -> &'static str {
        match self {
            Grid::Concat => "concat",
            Grid::Conditioning => "conditioning",
            Grid::Tokens => "tokens",
        }
    }

    /// World-model arms in report order (empty for the token grid).
    pub fn arms(self, base: &ArmDescriptor) -> Vec<ArmDescriptor> {
        let arm = |conditioning, nav, concat| ArmDescriptor {
            conditioning,
            nav,
            concat,
            behavior_strategy: base.behavior_strategy,
        };
        use Conditioning as C;
        match self {
            Grid::Concat => vec![
                arm(C::None, true, true),
                arm(C::MotionVector, false, true),
                arm(C::None, true, false),
                arm(C::MotionVector, false, false),
            ],
            Grid::Conditioning => vec![
                arm(C::None, true, base.concat),
                arm(C::ActionNavSpeed, false, base.concat),
                arm(C::ActionNavSpeed, true, base.concat),
                arm(C::MotionVector, false, base.concat),
                arm(C::MotionVector, true, base.concat),
                arm(C::AngleOnly, false, base.concat),
                arm(C::SpeedOnly, false, base.concat),
                arm(C::DiscreteSpeedAction, false, base.concat),
                arm(C::DiscreteSpeedGoal, false, base.concat),
            ],
            Grid::Tokens => Vec::new(),
        }
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Grid {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concat" => Ok(Grid::Concat),
            "conditioning" => Ok(Grid::Conditioning),
            "tokens" => Ok(Grid::Tokens),
            _ => Err(Error::Config(format!("unknown grid '{s}' (concat, conditioning, tokens)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AblationRows {
    Plan(Vec<PlanRow>),
    Mae(Vec<MaeRow>),
}

/// Run every arm of `grid` with the shared seed and write one combined CSV,
/// rows in table order. Arms run in parallel; each is deterministic.
pub fn cmd_ablate(cfg: &ExperimentConfig, grid: Grid) -> Result<(AblationRows, PathBuf)> {
    let data = load_dataset(&cfg.dataset_dir())?;
    let dir = cfg.out.join(format!("ablate_{grid}"));
    let csv = dir.join(format!("{grid}.csv"));
    let rows = match grid {
        Grid::Tokens => {
            let rows = BehaviorStrategy::MENU
                .par_iter()
                .map(|&s| {
                    let (_, _, eval) = run_reasoner(cfg, &data, s)?;
                    Ok(MaeRow {
                        method: s.label(),
                        mae_angle: eval.mae_angle,
                        mae_speed: eval.mae_speed,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            create_dir(&dir)?;
            write_mae_csv(&csv, &rows)?;
            AblationRows::Mae(rows)
        }
        _ => {
            let rows = grid
                .arms(&cfg.arm)
                .par_iter()
                .map(|arm| Ok(plan_row(arm, run_wm_arm(cfg, &data, arm, None)?.2)))
                .collect::<Result<Vec<_>>>()?;
            create_dir(&dir)?;
            write_plan_csv(&csv, &rows)?;
            AblationRows::Plan(rows)
        }
    };
    write_run_files(&dir, &format!("ablate-{grid}"), cfg)?;
    Ok((rows, csv))
}

/// One line of an annotation validation report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineReport {
    pub line: usize,
    /// `None` when the record is valid, else `(code, message)`.
    pub error: Option<(String, String)>,
}

impl fmt::Display for LineReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.error {
            None => write!(f, "line {}: ok", self.line),
            // the message already leads with its code
            Some((_, msg)) => write!(f, "line {}: {msg}", self.line),
        }
    }
}

/// Check every non-blank line of a JSONL file of annotation records.
/// Lines may be bare records or episodes carrying an `annotation` field.
pub fn cmd_validate_annotations(path: &Path) -> Result<Vec<LineReport>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record_text = match serde_json::from_str::<serde_json::Value>(line) {
            Ok(v) if v.get("kind").and_then(|k| k.as_str()) == Some("header") => continue,
            Ok(v) => match v.get("annotation") {
                Some(a) if v.get("scene_id").is_some() => a.to_string(),
                _ => line.to_string(),
            },
            Err(_) => line.to_string(),
        };
        let error = parse_record(&record_text).err().map(|e| (e.code().to_string(), e.to_string()));
        out.push(LineReport { line: i + 1, error });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rows() {
        let base = ArmDescriptor::default();
        assert_eq!(Grid::Concat.arms(&base).len(), 4);
        let c = Grid::Conditioning.arms(&base);
        assert_eq!(c.len(), 9);
        assert_eq!(c[0].conditioning, Conditioning::None);
        assert!(c[0].nav);
        assert!(c.iter().all(|a| a.conditioning != Conditioning::Reasoner));
        assert!(Grid::Tokens.arms(&base).is_empty());
        assert!("diagonal".parse::<Grid>().is_err());
    }

    #[test]
    fn reasoner_arm_without_checkpoint_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::with_out(dir.path());
        cfg.arm.conditioning = Conditioning::Reasoner;
        let err = cmd_train_wm(&cfg).err().unwrap();
        assert!(matches!(err, Error::Config(_)), "{err}");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }
}
