//! Prompt assembly: quantized scene features, navigation, speed and task text.

use super::{split_words, Grammar, Vocab};
use crate::sim::{featurize, Episode, NavCommand, N_HISTORY};

/// Quantization levels for scene-feature tokens over [−1, 1].
pub const QUANT_LEVELS: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub tokens: Vec<String>,
}

impl Prompt {
    pub fn ids(&self, vocab: &Vocab) -> Vec<usize> {
        self.tokens.iter().map(|t| vocab.id(t)).collect()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Speed bucket index: 0, (0,2], (2,5], (5,10], >10 m/s.
pub fn speed_bucket(speed: f64) -> usize {
    match speed {
        s if s <= 0.0 => 0,
        s if s <= 2.0 => 1,
        s if s <= 5.0 => 2,
        s if s <= 10.0 => 3,
        _ => 4,
    }
}

fn quantize(x: f64) -> usize {
    let level = ((x.clamp(-1.0, 1.0) + 1.0) / 2.0 * QUANT_LEVELS as f64).floor() as usize;
    level.min(QUANT_LEVELS - 1)
}

/// `[BOS]`, one token per scene feature at t₀, nav token, speed bucket, task text.
pub fn assemble_prompt(ep: &Episode) -> Prompt {
    let mut tokens = vec!["[BOS]".to_string()];
    let frame = featurize(ep, N_HISTORY - 1).expect("episodes carry full history");
    tokens.extend(frame.features.iter().map(|&x| format!("<q{}>", quantize(x))));
    tokens.push(
        match ep.nav {
            NavCommand::TurnLeft => "NAV_LEFT",
            NavCommand::TurnRight => "NAV_RIGHT",
            NavCommand::GoStraight => "NAV_STRAIGHT",
        }
        .to_string(),
    );
    tokens.push(format!("SPD_{}", speed_bucket(ep.ego_speed)));
    tokens.extend(split_words(&Grammar::builtin().prompt));
    Prompt { tokens }
}
