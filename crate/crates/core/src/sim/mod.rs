//! Synthetic driving scenes: kinematic ego maneuvers, constant-velocity
//! agents, per-frame scene features and JSONL datasets.
//!
//! Frame convention: x points right, y points forward, headings are
//! radians counter-clockwise from +x, so driving straight ahead has heading
//! π/2. Futures are expressed in the ego frame at t₀.

mod collision;
mod dataset;
mod features;
mod scenario;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::annotation::AnnotationRecord;
use crate::error::{Error, Result};

pub use collision::{boxes_overlap, ego_box_at, occupancy_collision, OrientedBox, EGO_LENGTH, EGO_WIDTH};
pub use dataset::{
    generate_dataset, read_dataset, read_split, split_scenes, DatasetHeader, DatasetSummary,
    ScenarioMix, SplitManifest, EPISODES_FILE, SCHEMA_VERSION, SPLIT_FILE,
};
pub use features::{feature_names, featurize, LatentFrame, FEATURE_DIM, N_FRAMES, N_SECTORS, SENSOR_RANGE};
pub use scenario::{generate_episode, max_curvature, PathProfile, ScenarioParams, SpeedProfile};

/// Waypoint spacing in seconds (2 Hz).
pub const DT: f64 = 0.5;
pub const N_FUTURE: usize = 6;
pub const N_HISTORY: usize = 4;
pub const MAX_SPEED: f64 = 20.0;
pub const MAX_CURVATURE: f64 = 0.2;
pub const LANE_WIDTH: f64 = 3.5;

/// Wrap an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: wrap_angle(heading),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Vehicle,
    Pedestrian,
    Static,
}

/// A road user moving at constant velocity. `pose` is its state at t₀.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub pose: Pose,
    /// (length, width) in meters.
    pub extent: (f64, f64),
    /// (vx, vy) in m/s.
    pub velocity: (f64, f64),
    pub kind: AgentKind,
}

impl Agent {
    pub fn position_at(&self, t: f64) -> (f64, f64) {
        (
            self.pose.x + self.velocity.0 * t,
            self.pose.y + self.velocity.1 * t,
        )
    }

    pub fn box_at(&self, t: f64) -> OrientedBox {
        let (x, y) = self.position_at(t);
        OrientedBox {
            cx: x,
            cy: y,
            heading: self.pose.heading,
            length: self.extent.0,
            width: self.extent.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NavCommand {
    TurnLeft,
    TurnRight,
    GoStraight,
}

impl NavCommand {
    pub const ALL: [NavCommand; 3] = [NavCommand::TurnLeft, NavCommand::TurnRight, NavCommand::GoStraight];

    /// Position in the (left, right, straight) one-hot order.
    pub fn index(self) -> usize {
        match self {
            NavCommand::TurnLeft => 0,
            NavCommand::TurnRight => 1,
            NavCommand::GoStraight => 2,
        }
    }

    pub fn one_hot(self) -> [f64; 3] {
        let mut v = [0.0; 3];
        v[self.index()] = 1.0;
        v
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NavCommand::TurnLeft => "turn_left",
            NavCommand::TurnRight => "turn_right",
            NavCommand::GoStraight => "go_straight",
        }
    }
}

impl fmt::Display for NavCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NavCommand {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        NavCommand::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::Input(format!("unknown nav command '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Straight,
    LeftTurn,
    RightTurn,
    LaneChangeLeft,
    LaneChangeRight,
    Stop,
    YieldVru,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 7] = [
        ScenarioKind::Straight,
        ScenarioKind::LeftTurn,
        ScenarioKind::RightTurn,
        ScenarioKind::LaneChangeLeft,
        ScenarioKind::LaneChangeRight,
        ScenarioKind::Stop,
        ScenarioKind::YieldVru,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Straight => "straight",
            ScenarioKind::LeftTurn => "left_turn",
            ScenarioKind::RightTurn => "right_turn",
            ScenarioKind::LaneChangeLeft => "lane_change_left",
            ScenarioKind::LaneChangeRight => "lane_change_right",
            ScenarioKind::Stop => "stop",
            ScenarioKind::YieldVru => "yield_vru",
        }
    }

    pub fn nav(self) -> NavCommand {
        match self {
            ScenarioKind::LeftTurn => NavCommand::TurnLeft,
            ScenarioKind::RightTurn => NavCommand::TurnRight,
            _ => NavCommand::GoStraight,
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Input(format!("unknown scenario kind '{s}'")))
    }
}

/// Future ego waypoints in the t₀ ego frame, spaced `dt` seconds apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub waypoints: Vec<[f64; 2]>,
    pub dt: f64,
}

impl Trajectory {
    pub fn new(waypoints: Vec<[f64; 2]>) -> Self {
        Self { waypoints, dt: DT }
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    /// Timestamp of waypoint `i` (the first waypoint is one step after t₀).
    pub fn time_of(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.dt
    }

    pub fn flat(&self) -> Vec<f64> {
        self.waypoints.iter().flat_map(|p| p.iter().copied()).collect()
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() % 2 != 0 {
            return Err(Error::Input(format!("odd flat waypoint length {}", flat.len())));
        }
        Ok(Self::new(flat.chunks(2).map(|c| [c[0], c[1]]).collect()))
    }

    pub fn is_finite(&self) -> bool {
        self.waypoints.iter().all(|p| p[0].is_finite() && p[1].is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub scene_id: u64,
    pub scenario_kind: ScenarioKind,
    /// Poses at t = −1.5, −1.0, −0.5, 0 s in the t₀ ego frame; the last is the origin.
    pub ego_history: Vec<Pose>,
    pub ego_future: Trajectory,
    pub ego_speed: f64,
    pub nav: NavCommand,
    pub agents: Vec<Agent>,
    pub annotation: AnnotationRecord,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert_eq!(wrap_angle(0.25), 0.25);
    }

    #[test]
    fn nav_parse_and_index() {
        for n in NavCommand::ALL {
            assert_eq!(n.as_str().parse::<NavCommand>().unwrap(), n);
        }
        assert_eq!(NavCommand::TurnRight.one_hot(), [0.0, 1.0, 0.0]);
        assert!("left".parse::<NavCommand>().is_err());
    }

    #[test]
    fn turns_map_to_matching_nav() {
        assert_eq!(ScenarioKind::LeftTurn.nav(), NavCommand::TurnLeft);
        assert_eq!(ScenarioKind::RightTurn.nav(), NavCommand::TurnRight);
        assert_eq!(ScenarioKind::Stop.nav(), NavCommand::GoStraight);
    }
}
