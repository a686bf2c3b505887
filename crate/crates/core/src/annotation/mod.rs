//! Justification / action records, their strict JSON wire format, the
//! template grammar that annotates synthetic scenes, and prompt assembly.

mod grammar;
mod prompt;
mod tokenizer;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use grammar::{template_generate, Grammar};
pub use prompt::{assemble_prompt, speed_bucket, Prompt, QUANT_LEVELS};
pub use tokenizer::{detokenize, split_words, Vocab, BEH_SLOTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Lateral {
    LeftTurn,
    RightTurn,
    Straight,
    FollowLane,
    LanechangeToLeft,
    LanechangeToRight,
}

impl Lateral {
    pub const ALL: [Lateral; 6] = [
        Lateral::LeftTurn,
        Lateral::RightTurn,
        Lateral::Straight,
        Lateral::FollowLane,
        Lateral::LanechangeToLeft,
        Lateral::LanechangeToRight,
    ];

    pub fn surface(self) -> &'static str {
        match self {
            Lateral::LeftTurn => "Left Turn",
            Lateral::RightTurn => "Right Turn",
            Lateral::Straight => "Straight",
            Lateral::FollowLane => "Follow Lane",
            Lateral::LanechangeToLeft => "Lanechange to Left",
            Lateral::LanechangeToRight => "Lanechange to Right",
        }
    }

    pub fn from_surface(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.surface() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Longitudinal {
    Stop,
    Accelerate,
    SlowDown,
    Maintain,
}

impl Longitudinal {
    pub const ALL: [Longitudinal; 4] = [
        Longitudinal::Stop,
        Longitudinal::Accelerate,
        Longitudinal::SlowDown,
        Longitudinal::Maintain,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn surface(self) -> &'static str {
        match self {
            Longitudinal::Stop => "Stop",
            Longitudinal::Accelerate => "Accelerate",
            Longitudinal::SlowDown => "Slow Down",
            Longitudinal::Maintain => "Maintain",
        }
    }

    pub fn from_surface(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.surface() == s)
    }
}

/// `Lateral|Longitudinal` with the exact surface strings.
pub fn action_token(lateral: Lateral, longitudinal: Longitudinal) -> String {
    format!("{}|{}", lateral.surface(), longitudinal.surface())
}

pub fn parse_action_token(s: &str) -> Result<(Lateral, Longitudinal), RecordError> {
    let (lat, long) = s
        .split_once('|')
        .ok_or_else(|| RecordError::Enum(format!("action token '{s}' lacks a '|' separator")))?;
    let lateral =
        Lateral::from_surface(lat).ok_or_else(|| RecordError::Enum(format!("unknown lateral action '{lat}'")))?;
    let longitudinal = Longitudinal::from_surface(long)
        .ok_or_else(|| RecordError::Enum(format!("unknown longitudinal action '{long}'")))?;
    Ok((lateral, longitudinal))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RecordError {
    #[error("E_PARSE: {0}")]
    Parse(String),
    #[error("E_SCHEMA: {0}")]
    Schema(String),
    #[error("E_ENUM: {0}")]
    Enum(String),
}

impl RecordError {
    pub fn code(&self) -> &'static str {
        match self {
            RecordError::Parse(_) => "E_PARSE",
            RecordError::Schema(_) => "E_SCHEMA",
            RecordError::Enum(_) => "E_ENUM",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RecordWire", into = "RecordWire")]
pub struct AnnotationRecord {
    pub justification: String,
    pub action: String,
    pub lateral: Lateral,
    pub longitudinal: Longitudinal,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordWire {
    justification: String,
    action: String,
    action_token: String,
}

impl TryFrom<RecordWire> for AnnotationRecord {
    type Error = RecordError;
    fn try_from(w: RecordWire) -> Result<Self, RecordError> {
        AnnotationRecord::from_parts(w.justification, w.action, &w.action_token)
    }
}

impl From<AnnotationRecord> for RecordWire {
    fn from(r: AnnotationRecord) -> Self {
        RecordWire {
            action_token: r.action_token(),
            justification: r.justification,
            action: r.action,
        }
    }
}

const FIELDS: [&str; 3] = ["justification", "action", "action_token"];

impl AnnotationRecord {
    fn from_parts(justification: String, action: String, token: &str) -> Result<Self, RecordError> {
        if justification.trim().is_empty() {
            return Err(RecordError::Schema("justification is empty".into()));
        }
        if action.trim().is_empty() {
            return Err(RecordError::Schema("action is empty".into()));
        }
        let (lateral, longitudinal) = parse_action_token(token)?;
        Ok(Self {
            justification,
            action,
            lateral,
            longitudinal,
        })
    }

    pub(crate) fn placeholder() -> Self {
        Self {
            justification: "pending".into(),
            action: "pending".into(),
            lateral: Lateral::Straight,
            longitudinal: Longitudinal::Maintain,
        }
    }

    pub fn action_token(&self) -> String {
        action_token(self.lateral, self.longitudinal)
    }
}

impl fmt::Display for AnnotationRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize(self))
    }
}

/// Strict parse: exactly the three string fields, non-empty texts, and an
/// action token from the closed set.
pub fn parse_record(text: &str) -> Result<AnnotationRecord, RecordError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| RecordError::Parse(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| RecordError::Schema("record must be a JSON object".into()))?;
    if let Some(k) = obj.keys().find(|k| !FIELDS.contains(&k.as_str())) {
        return Err(RecordError::Schema(format!("unknown field '{k}'")));
    }
    let field = |name: &str| -> Result<String, RecordError> {
        match obj.get(name) {
            None => Err(RecordError::Schema(format!("missing field '{name}'"))),
            Some(serde_json::Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(RecordError::Schema(format!("field '{name}' must be a string"))),
        }
    };
    let justification = field("justification")?;
    let action = field("action")?;
    let token = field("action_token")?;
    AnnotationRecord::from_parts(justification, action, &token)
}

/// Canonical JSON with fields in the order justification, action, action_token.
pub fn serialize(record: &AnnotationRecord) -> String {
    serde_json::to_string(&RecordWire::from(record.clone())).expect("strings always serialize")
}
