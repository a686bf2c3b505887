use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{DATASET_DIR, REASONER_CKPT, REASONER_DIR};
use crate::codec::Conditioning;
use crate::error::{Error, Result};
use crate::metrics::L2Protocol;
use crate::reasoner::{BehaviorStrategy, ReasonerConfig};
use crate::sim::ScenarioMix;
use crate::training::TrainConfig;
use crate::wm::WmConfig;

/// Environment variable holding the default output root.
pub const OUT_ENV: &str = "BWM_OUT";

/// One experimental arm.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmDescriptor {
    pub conditioning: Conditioning,
    /// Append the navigation one-hot to the conditioning vector.
    pub nav: bool,
    /// Also feed the conditioning into the latent predictor.
    pub concat: bool,
    pub behavior_strategy: BehaviorStrategy,
}

impl Default for ArmDescriptor {
    fn default() -> Self {
        Self {
            conditioning: Conditioning::MotionVector,
            nav: false,
            concat: true,
            behavior_strategy: BehaviorStrategy::FirstN(16),
        }
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key} expects a boolean, got '{v}'"))),
    }
}

impl ArmDescriptor {
    /// Override fields from `key=value` pairs separated by commas, e.g.
    /// `conditioning=speed_only,nav=true,strategy=beh_5`. A bare word is
    /// taken as the conditioning variant.
    pub fn apply(&mut self, params: &str) -> Result<()> {
        for part in params.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part.split_once('=') {
                None => self.conditioning = part.parse()?,
                Some((k, v)) => match k.trim() {
                    "conditioning" | "cond" => self.conditioning = v.trim().parse()?,
                    "nav" => self.nav = parse_bool(k, v.trim())?,
                    "concat" => self.concat = parse_bool(k, v.trim())?,
                    "strategy" | "behavior_strategy" => self.behavior_strategy = v.trim().parse()?,
                    other => return Err(Error::Config(format!("unknown arm field '{other}'"))),
                },
            }
        }
        Ok(())
    }
}

impl FromStr for ArmDescriptor {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let mut arm = Self::default();
        arm.apply(s)?;
        Ok(arm)
    }
}

/// Contents of `arm.json` beside a world-model checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmRecord {
    pub arm: ArmDescriptor,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Run root; commands write into subdirectories of it.
    pub out: PathBuf,
    /// Dataset directory; defaults to `<out>/dataset`.
    pub dataset: Option<PathBuf>,
    pub n_scenes: usize,
    pub mix: ScenarioMix,
    pub arm: ArmDescriptor,
    pub reasoner: ReasonerConfig,
    /// Defaults to `<out>/reasoner/reasoner.json`.
    pub reasoner_checkpoint: Option<PathBuf>,
    pub wm: WmConfig,
    pub reasoner_train: TrainConfig,
    pub wm_train: TrainConfig,
    pub protocol: L2Protocol,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut reasoner_train = TrainConfig::default();
        reasoner_train.optim.lr = 2e-3;
        Self {
            seed: 0,
            out: std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs")),
            dataset: None,
            n_scenes: 200,
            mix: ScenarioMix::default(),
            arm: ArmDescriptor::default(),
            reasoner: ReasonerConfig::default(),
            reasoner_checkpoint: None,
            wm: WmConfig::default(),
            reasoner_train,
            wm_train: TrainConfig::default(),
            protocol: L2Protocol::Avg,
        }
    }
}

impl ExperimentConfig {
    pub fn with_out(out: &Path) -> Self {
        Self {
            out: out.to_path_buf(),
            ..Self::default()
        }
    }

    /// Read a JSON config; missing fields take their defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.reasoner.validate()?;
        let mut rc = self.reasoner.clone();
        rc.behavior_strategy = self.arm.behavior_strategy;
        rc.validate()?;
        if self.reasoner_train.batch_size == 0 || self.wm_train.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.dataset.clone().unwrap_or_else(|| self.out.join(DATASET_DIR))
    }

    pub fn reasoner_checkpoint_path(&self) -> PathBuf {
        self.reasoner_checkpoint
            .clone()
            .unwrap_or_else(|| self.out.join(REASONER_DIR).join(REASONER_CKPT))
    }

    pub fn arm_record(&self) -> ArmRecord {
        ArmRecord {
            arm: self.arm.clone(),
            seed: self.seed,
        }
    }

    /// Set both trainers' epoch count.
    pub fn set_epochs(&mut self, epochs: usize) {
        self.reasoner_train.epochs = epochs;
        self.wm_train.epochs = epochs;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arm_overrides() {
        let mut a = ArmDescriptor::default();
        a.apply("speed_only, nav=true").unwrap();
        assert_eq!(a.conditioning, Conditioning::SpeedOnly);
        assert!(a.nav && a.concat);
        a.apply("concat=false,strategy=beh_tokens(5)").unwrap();
        assert!(!a.concat);
        assert_eq!(a.behavior_strategy, BehaviorStrategy::BehTokens(5));
        assert!(matches!(a.apply("colour=red"), Err(Error::Config(_))));
        assert!(matches!("nav=maybe".parse::<ArmDescriptor>(), Err(Error::Config(_))));
    }

    #[test]
    fn partial_json_takes_defaults() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"seed": 4, "arm": {"conditioning": "angle_only"}, "wm_train": {"epochs": 3}}"#).unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.arm.conditioning, Conditioning::AngleOnly);
        assert!(cfg.arm.concat);
        assert_eq!(cfg.wm_train.epochs, 3);
        assert_eq!(cfg.wm_train.batch_size, 8);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"sead": 4}"#).is_err());
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
