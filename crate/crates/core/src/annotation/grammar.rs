//! Template grammar for synthetic annotations, loaded from `data/grammar.json`.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::Deserialize;

use super::{split_words, AnnotationRecord, Lateral, Longitudinal};
use crate::codec::{end_speed, speed_action_label, SpeedActionLabel};
use crate::sim::{Agent, AgentKind, Episode, ScenarioKind};

const GRAMMAR_JSON: &str = include_str!("../../data/grammar.json");

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grammar {
    pub version: u32,
    pub prompt: String,
    pub agent_words: BTreeMap<String, String>,
    /// (upper bound in meters, phrase), ascending.
    pub distance_words: Vec<(f64, String)>,
    pub side_words: BTreeMap<String, String>,
    pub justification: BTreeMap<String, Vec<String>>,
    /// Keyed by lateral surface string.
    pub action: BTreeMap<String, Vec<String>>,
    /// Keyed by longitudinal surface string.
    pub longitudinal: BTreeMap<String, Vec<String>>,
}

impl Grammar {
    pub fn builtin() -> &'static Grammar {
        static G: OnceLock<Grammar> = OnceLock::new();
        G.get_or_init(|| serde_json::from_str(GRAMMAR_JSON).expect("bundled grammar is valid"))
    }

    /// Every word the grammar can emit, slots expanded.
    pub fn words(&self) -> BTreeSet<String> {
        let fills = self
            .agent_words
            .values()
            .chain(self.side_words.values())
            .chain(self.distance_words.iter().map(|(_, w)| w));
        let templates = std::iter::once(&self.prompt)
            .chain(self.justification.values().flatten())
            .chain(self.action.values().flatten())
            .chain(self.longitudinal.values().flatten());
        fills
            .chain(templates)
            .flat_map(|t| split_words(&t.replace("{agent}", "").replace("{dist}", "").replace("{side}", "")))
            .collect()
    }

    fn distance_phrase(&self, d: f64) -> &str {
        self.distance_words
            .iter()
            .find(|(bound, _)| d < *bound)
            .or(self.distance_words.last())
            .map(|(_, w)| w.as_str())
            .unwrap_or("")
    }

    fn agent_word(&self, kind: AgentKind) -> &str {
        let key = match kind {
            AgentKind::Vehicle => "vehicle",
            AgentKind::Pedestrian => "pedestrian",
            AgentKind::Static => "static",
        };
        self.agent_words.get(key).map(String::as_str).unwrap_or(key)
    }

    fn side_phrase(&self, agent: &Agent) -> &str {
        let key = if agent.pose.x < -1.75 {
            "left"
        } else if agent.pose.x > 1.75 {
            "right"
        } else {
            "ego"
        };
        self.side_words.get(key).map(String::as_str).unwrap_or(key)
    }
}

fn distance(a: &Agent) -> f64 {
    a.pose.x.hypot(a.pose.y)
}

fn nearest<'a>(agents: impl Iterator<Item = &'a Agent>) -> Option<&'a Agent> {
    agents.min_by(|a, b| distance(a).total_cmp(&distance(b)))
}

fn pick<'a>(options: Option<&'a Vec<String>>, rng: &mut impl Rng) -> &'a str {
    options
        .and_then(|o| o.choose(rng))
        .map(String::as_str)
        .unwrap_or("proceed")
}

pub fn longitudinal_for(ep: &Episode) -> Longitudinal {
    match speed_action_label(ep.ego_speed, end_speed(&ep.ego_future)) {
        SpeedActionLabel::Halt | SpeedActionLabel::Stop => Longitudinal::Stop,
        SpeedActionLabel::Accelerate => Longitudinal::Accelerate,
        SpeedActionLabel::Decelerate => Longitudinal::SlowDown,
        SpeedActionLabel::Maintain => Longitudinal::Maintain,
    }
}

/// Annotate an episode from the bundled grammar. The longitudinal label
/// follows the trajectory's speed-action class (Halt and Stop both map to Stop).
pub fn template_generate(ep: &Episode, rng: &mut impl Rng) -> AnnotationRecord {
    let g = Grammar::builtin();
    let in_lane_ahead = |a: &&Agent| a.pose.x.abs() < 1.75 && a.pose.y > 0.0;
    let (branch, subject) = match ep.scenario_kind {
        ScenarioKind::Straight => match nearest(ep.agents.iter()) {
            Some(a) => ("traffic", Some(a)),
            None => ("clear_road", None),
        },
        ScenarioKind::LeftTurn => ("left_turn", None),
        ScenarioKind::RightTurn => ("right_turn", None),
        ScenarioKind::LaneChangeLeft => ("lane_change_left", nearest(ep.agents.iter().filter(in_lane_ahead))),
        ScenarioKind::LaneChangeRight => ("lane_change_right", nearest(ep.agents.iter().filter(in_lane_ahead))),
        ScenarioKind::Stop => ("stop", nearest(ep.agents.iter().filter(in_lane_ahead))),
        ScenarioKind::YieldVru => (
            "yield_vru",
            nearest(ep.agents.iter().filter(|a| a.kind == AgentKind::Pedestrian)),
        ),
    };
    let needs_agent = !matches!(branch, "clear_road" | "left_turn" | "right_turn");
    let (branch, subject) = match subject {
        None if needs_agent => ("clear_road", None),
        s => (branch, s),
    };

    let mut justification = pick(g.justification.get(branch), rng).to_string();
    if let Some(a) = subject {
        justification = justification
            .replace("{agent}", g.agent_word(a.kind))
            .replace("{dist}", g.distance_phrase(distance(a)))
            .replace("{side}", g.side_phrase(a));
    }

    let lateral = match ep.scenario_kind {
        ScenarioKind::LeftTurn => Lateral::LeftTurn,
        ScenarioKind::RightTurn => Lateral::RightTurn,
        ScenarioKind::LaneChangeLeft => Lateral::LanechangeToLeft,
        ScenarioKind::LaneChangeRight => Lateral::LanechangeToRight,
        _ => {
            if rng.random_bool(0.5) {
                Lateral::Straight
            } else {
                Lateral::FollowLane
            }
        }
    };
    let longitudinal = longitudinal_for(ep);
    let action = format!(
        "{} {}",
        pick(g.action.get(lateral.surface()), rng),
        pick(g.longitudinal.get(longitudinal.surface()), rng)
    );
    AnnotationRecord {
        justification,
        action,
        lateral,
        longitudinal,
    }
}
