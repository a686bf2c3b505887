//! JSONL dataset files and the train/validation split manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scenario::generate_scene;
use super::{feature_names, Episode, ScenarioKind, FEATURE_DIM};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const EPISODES_FILE: &str = "episodes.jsonl";
pub const SPLIT_FILE: &str = "split.json";
const TRAIN_FRACTION: f64 = 0.8;

/// Relative weights of scenario kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMix(pub BTreeMap<ScenarioKind, f64>);

impl Default for ScenarioMix {
    fn default() -> Self {
        use ScenarioKind::*;
        Self(BTreeMap::from([
            (Straight, 0.35),
            (LeftTurn, 0.1),
            (RightTurn, 0.1),
            (LaneChangeLeft, 0.1),
            (LaneChangeRight, 0.1),
            (Stop, 0.15),
            (YieldVru, 0.1),
        ]))
    }
}

impl ScenarioMix {
    fn sample(&self, rng: &mut impl Rng) -> ScenarioKind {
        let total: f64 = self.0.values().sum();
        let mut u = rng.random_range(0.0..total);
        for (&k, &w) in &self.0 {
            if u < w {
                return k;
            }
            u -= w;
        }
        *self.0.keys().next_back().expect("non-empty mix")
    }

    fn validate(&self) -> Result<()> {
        if self.0.values().any(|w| !w.is_finite() || *w < 0.0) || self.0.values().sum::<f64>() <= 0.0 {
            return Err(Error::Input("scenario mix needs non-negative weights with a positive sum".into()));
        }
        Ok(())
    }
}

/// `straight=3,stop=1` style; unlisted kinds get weight 0.
impl FromStr for ScenarioMix {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for part in s.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, w) = part
                .split_once('=')
                .ok_or_else(|| Error::Input(format!("mix entry '{part}' is not kind=weight")))?;
            let w: f64 = w
                .trim()
                .parse()
                .map_err(|_| Error::Input(format!("bad weight in '{part}'")))?;
            map.insert(k.trim().parse()?, w);
        }
        let mix = Self(map);
        mix.validate()?;
        Ok(mix)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub kind: String,
    pub schema_version: u32,
    pub feature_dim: usize,
    pub feature_names: Vec<String>,
    pub n_scenes: usize,
    pub seed: u64,
    pub mix: ScenarioMix,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train: Vec<u64>,
    pub val: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSummary {
    pub n_train: usize,
    pub n_val: usize,
    pub counts: BTreeMap<ScenarioKind, usize>,
}

impl std::fmt::Display for DatasetSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} train / {} val scenes", self.n_train, self.n_val)
    }
}

fn scene_seed(seed: u64, i: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed ^ i.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// floor(0.8·n) scenes for training, the rest for validation, chosen by a
/// seeded shuffle; both lists are returned sorted.
pub fn split_scenes(ids: &[u64], seed: u64) -> SplitManifest {
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_5EED));
    let n_train = (ids.len() as f64 * TRAIN_FRACTION).floor() as usize;
    let mut train = shuffled[..n_train].to_vec();
    let mut val = shuffled[n_train..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    SplitManifest { train, val }
}

/// Generate `n_scenes` episodes into `out_dir/episodes.jsonl` (header line
/// first) plus `out_dir/split.json`.
pub fn generate_dataset(n_scenes: usize, seed: u64, mix: &ScenarioMix, out_dir: &Path) -> Result<DatasetSummary> {
    if n_scenes < 5 {
        return Err(Error::Input(format!("need at least 5 scenes, got {n_scenes}")));
    }
    mix.validate()?;
    let episodes: Vec<Episode> = (0..n_scenes as u64)
        .into_par_iter()
        .map(|i| {
            let s = scene_seed(seed, i);
            let kind = mix.sample(&mut ChaCha8Rng::seed_from_u64(s));
            generate_scene(i, s.wrapping_add(1), kind)
        })
        .collect();

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let header = DatasetHeader {
        kind: "header".into(),
        schema_version: SCHEMA_VERSION,
        feature_dim: FEATURE_DIM,
        feature_names: feature_names(),
        n_scenes,
        seed,
        mix: mix.clone(),
    };
    let path = out_dir.join(EPISODES_FILE);
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(&path, e);
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n").map_err(io)?;
    for ep in &episodes {
        serde_json::to_writer(&mut w, ep)?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)?;

    let ids: Vec<u64> = episodes.iter().map(|e| e.scene_id).collect();
    let split = split_scenes(&ids, seed);
    let split_path = out_dir.join(SPLIT_FILE);
    fs::write(&split_path, serde_json::to_string_pretty(&split)? + "\n").map_err(|e| Error::io(&split_path, e))?;

    let mut counts = BTreeMap::new();
    for ep in &episodes {
        *counts.entry(ep.scenario_kind).or_insert(0) += 1;
    }
    Ok(DatasetSummary {
        n_train: split.train.len(),
        n_val: split.val.len(),
        counts,
    })
}

/// Read a dataset directory (or an episodes file directly).
pub fn read_dataset(path: &Path) -> Result<(DatasetHeader, Vec<Episode>)> {
    let file_path = if path.is_dir() { path.join(EPISODES_FILE) } else { path.to_path_buf() };
    let file = fs::File::open(&file_path).map_err(|e| Error::io(&file_path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Validation(format!("{} is empty", file_path.display())))?
        .map_err(|e| Error::io(&file_path, e))?;
    let header: DatasetHeader = serde_json::from_str(&first)
        .map_err(|e| Error::Validation(format!("line 1: bad header: {e}")))?;
    if header.schema_version != SCHEMA_VERSION || header.feature_dim != FEATURE_DIM {
        return Err(Error::Validation(format!(
            "unsupported dataset (schema {}, feature dim {})",
            header.schema_version, header.feature_dim
        )));
    }
    let mut episodes = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(&file_path, e))?;
        let ep: Episode = serde_json::from_str(&line)
            .map_err(|e| Error::Validation(format!("line {}: {e}", i + 2)))?;
        episodes.push(ep);
    }
    Ok((header, episodes))
}

/// Read `split.json` from a dataset directory and check it partitions `episodes`.
pub fn read_split(dir: &Path, episodes: &[Episode]) -> Result<SplitManifest> {
    let path = dir.join(SPLIT_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let split: SplitManifest = serde_json::from_str(&text)?;
    let all: BTreeSet<u64> = episodes.iter().map(|e| e.scene_id).collect();
    let train: BTreeSet<u64> = split.train.iter().copied().collect();
    let val: BTreeSet<u64> = split.val.iter().copied().collect();
    if !train.is_disjoint(&val) || train.union(&val).copied().collect::<BTreeSet<_>>() != all {
        return Err(Error::Validation("split manifest is not a partition of the episodes".into()));
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes() {
        for (n, tr) in [(10, 8), (5, 4), (7, 5), (100, 80)] {
            let ids: Vec<u64> = (0..n).collect();
            let s = split_scenes(&ids, 3);
            assert_eq!(s.train.len(), tr);
            assert_eq!(s.val.len(), n as usize - tr);
            assert!(s.train.iter().all(|i| !s.val.contains(i)));
        }
    }

    #[test]
    fn mix_parsing() {
        let m: ScenarioMix = "straight=3, stop=1".parse().unwrap();
        assert_eq!(m.0.len(), 2);
        assert!("straight".parse::<ScenarioMix>().is_err());
        assert!("flying=1".parse::<ScenarioMix>().is_err());
        assert!("straight=-1".parse::<ScenarioMix>().is_err());
    }

    #[test]
    fn too_few_scenes() {
        let dir = std::env::temp_dir();
        assert!(generate_dataset(4, 0, &ScenarioMix::default(), &dir).is_err());
    }
}
