//! Steering/velocity targets from future trajectories and the fixed-width
//! conditioning vectors built from them.
//!
//! Layout of the 11 slots: 0–7 payload, 8–10 navigation one-hot in the
//! order (left, right, straight).

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::annotation::Longitudinal;
use crate::error::{Error, Result};
use crate::sim::{NavCommand, Trajectory, DT};

pub const ENCODING_WIDTH: usize = 11;
pub const PAYLOAD_WIDTH: usize = 8;
pub const NAV_OFFSET: usize = 8;
/// Displacement normalizer for `v` in meters.
pub const DISPLACEMENT_SCALE: f64 = 30.0;
const STATIONARY_EPS: f64 = 1e-6;

/// Normalized heading `alpha` of the net displacement and its length `v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorTarget {
    pub alpha: f64,
    pub v: f64,
}

/// α = (atan2(Δy, Δx) + π)/(2π) − 0.75, so straight ahead (+y) maps to 0.
pub fn alpha_of(dx: f64, dy: f64) -> f64 {
    if dx.hypot(dy) < STATIONARY_EPS {
        return 0.0;
    }
    (dy.atan2(dx) + PI) / (2.0 * PI) - 0.75
}

/// Inverse of [`alpha_of`]: the direction angle in (−π, π].
pub fn angle_of_alpha(alpha: f64) -> f64 {
    (alpha + 0.75) * 2.0 * PI - PI
}

/// Behavior target from the first and last waypoint.
pub fn derive_target(traj: &Trajectory) -> Result<BehaviorTarget> {
    let w = &traj.waypoints;
    if w.len() < 2 {
        return Err(Error::Input(format!("need at least 2 waypoints, got {}", w.len())));
    }
    let (f, l) = (w[0], w[w.len() - 1]);
    let (dx, dy) = (l[0] - f[0], l[1] - f[1]);
    Ok(BehaviorTarget {
        alpha: alpha_of(dx, dy),
        v: dx.hypot(dy) / DISPLACEMENT_SCALE,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingVariant {
    MotionVector,
    AngleOnly,
    SpeedOnly,
    DiscreteSpeedAction,
    DiscreteGoalSpeed,
    ActionNavSpeed,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionMode {
    Full,
    AngleOnly,
    SpeedOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorEncoding {
    pub values: [f64; ENCODING_WIDTH],
    pub variant: EncodingVariant,
}

impl BehaviorEncoding {
    pub fn payload(&self) -> &[f64] {
        &self.values[..PAYLOAD_WIDTH]
    }

    pub fn nav_slots(&self) -> &[f64] {
        &self.values[NAV_OFFSET..]
    }
}

pub fn encode_motion_vector(target: BehaviorTarget, mode: MotionMode) -> BehaviorEncoding {
    let mut values = [0.0; ENCODING_WIDTH];
    let variant = match mode {
        MotionMode::Full => {
            values[0] = target.alpha;
            values[1] = target.v;
            EncodingVariant::MotionVector
        }
        MotionMode::AngleOnly => {
            values[0] = target.alpha;
            EncodingVariant::AngleOnly
        }
        MotionMode::SpeedOnly => {
            values[1] = target.v;
            EncodingVariant::SpeedOnly
        }
    };
    BehaviorEncoding { values, variant }
}

pub fn encode_none() -> BehaviorEncoding {
    BehaviorEncoding {
        values: [0.0; ENCODING_WIDTH],
        variant: EncodingVariant::None,
    }
}

/// Write (or clear) the navigation one-hot; the payload is untouched.
pub fn attach_nav(mut enc: BehaviorEncoding, nav: NavCommand, enabled: bool) -> BehaviorEncoding {
    let slots = if enabled { nav.one_hot() } else { [0.0; 3] };
    enc.values[NAV_OFFSET..].copy_from_slice(&slots);
    enc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpeedActionLabel {
    Halt,
    Accelerate,
    Stop,
    Maintain,
    Decelerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GoalSpeedLabel {
    Halt,
    VerySlow,
    Slow,
    Moderate,
    Fast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedScheme {
    Action,
    Goal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpeedLabel {
    Action(SpeedActionLabel),
    Goal(GoalSpeedLabel),
}

impl SpeedLabel {
    /// Slot of the one-hot within the payload.
    pub fn index(self) -> usize {
        match self {
            SpeedLabel::Action(a) => a as usize,
            SpeedLabel::Goal(g) => g as usize,
        }
    }
}

const REST: f64 = 0.2;
const ACCEL_BAND: f64 = 0.5;

pub fn speed_action_label(v0: f64, v_end: f64) -> SpeedActionLabel {
    if v_end < REST {
        if v0 < REST {
            SpeedActionLabel::Halt
        } else {
            SpeedActionLabel::Stop
        }
    } else if v_end - v0 > ACCEL_BAND {
        SpeedActionLabel::Accelerate
    } else if v_end - v0 < -ACCEL_BAND {
        SpeedActionLabel::Decelerate
    } else {
        SpeedActionLabel::Maintain
    }
}

pub fn goal_speed_label(v_end: f64) -> GoalSpeedLabel {
    match v_end {
        v if v < REST => GoalSpeedLabel::Halt,
        v if v < 2.0 => GoalSpeedLabel::VerySlow,
        v if v < 5.0 => GoalSpeedLabel::Slow,
        v if v < 10.0 => GoalSpeedLabel::Moderate,
        _ => GoalSpeedLabel::Fast,
    }
}

/// Speed over the last waypoint segment, m/s.
pub fn end_speed(traj: &Trajectory) -> f64 {
    let w = &traj.waypoints;
    match w.len() {
        0 => 0.0,
        1 => w[0][0].hypot(w[0][1]) / DT,
        n => (w[n - 1][0] - w[n - 2][0]).hypot(w[n - 1][1] - w[n - 2][1]) / traj.dt,
    }
}

/// Discrete five-class speed label as a one-hot in payload slots 0–4.
pub fn discretize_speed(traj: &Trajectory, ego_speed_t0: f64, scheme: SpeedScheme) -> (SpeedLabel, BehaviorEncoding) {
    let v_end = end_speed(traj);
    let (label, variant) = match scheme {
        SpeedScheme::Action => (
            SpeedLabel::Action(speed_action_label(ego_speed_t0, v_end)),
            EncodingVariant::DiscreteSpeedAction,
        ),
        SpeedScheme::Goal => (SpeedLabel::Goal(goal_speed_label(v_end)), EncodingVariant::DiscreteGoalSpeed),
    };
    let mut values = [0.0; ENCODING_WIDTH];
    values[label.index()] = 1.0;
    (label, BehaviorEncoding { values, variant })
}

/// Factored nav × longitudinal one-hot: nav in slots 0–2, longitudinal in 3–6.
pub fn encode_action(nav: NavCommand, longitudinal: Longitudinal) -> BehaviorEncoding {
    let mut values = [0.0; ENCODING_WIDTH];
    values[nav.index()] = 1.0;
    values[3 + longitudinal.index()] = 1.0;
    BehaviorEncoding {
        values,
        variant: EncodingVariant::ActionNavSpeed,
    }
}

/// [`encode_action`] from wire strings such as `go_straight` and `Slow Down`.
pub fn encode_action_str(nav: &str, longitudinal: &str) -> Result<BehaviorEncoding> {
    let nav: NavCommand = nav.parse()?;
    let long = Longitudinal::from_surface(longitudinal)
        .ok_or_else(|| Error::Input(format!("unknown longitudinal action '{longitudinal}'")))?;
    Ok(encode_action(nav, long))
}

/// Where the conditioning vector of a world-model arm comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    None,
    MotionVector,
    AngleOnly,
    SpeedOnly,
    DiscreteSpeedAction,
    DiscreteSpeedGoal,
    ActionNavSpeed,
    /// Motion vector predicted by a trained reasoner.
    Reasoner,
}

impl Conditioning {
    pub const ALL: [Conditioning; 8] = [
        Conditioning::None,
        Conditioning::MotionVector,
        Conditioning::AngleOnly,
        Conditioning::SpeedOnly,
        Conditioning::DiscreteSpeedAction,
        Conditioning::DiscreteSpeedGoal,
        Conditioning::ActionNavSpeed,
        Conditioning::Reasoner,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Conditioning::None => "none",
            Conditioning::MotionVector => "motion_vector",
            Conditioning::AngleOnly => "angle_only",
            Conditioning::SpeedOnly => "speed_only",
            Conditioning::DiscreteSpeedAction => "discrete_speed_action",
            Conditioning::DiscreteSpeedGoal => "discrete_speed_goal",
            Conditioning::ActionNavSpeed => "action_nav_speed",
            Conditioning::Reasoner => "reasoner",
        }
    }

    /// Row label used in result tables.
    pub fn label(self) -> &'static str {
        match self {
            Conditioning::None => "No Behavior",
            Conditioning::MotionVector => "Motion Vector",
            Conditioning::AngleOnly => "Motion Vector angle only",
            Conditioning::SpeedOnly => "Motion Vector speed only",
            Conditioning::DiscreteSpeedAction => "Discrete Speed Action",
            Conditioning::DiscreteSpeedGoal => "Discrete Speed Goal",
            Conditioning::ActionNavSpeed => "Action (Nav x Speed)",
            Conditioning::Reasoner => "Reasoner Motion Vector",
        }
    }
}

impl fmt::Display for Conditioning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Conditioning {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Conditioning::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown conditioning '{s}'")))
    }
}

/// Ground-truth conditioning for an episode. `Reasoner` needs predictions
/// and is handled by the caller via [`encode_motion_vector`].
pub fn ground_truth_encoding(ep: &crate::sim::Episode, cond: Conditioning, nav: bool) -> Result<BehaviorEncoding> {
    let enc = match cond {
        Conditioning::None => encode_none(),
        Conditioning::MotionVector => encode_motion_vector(derive_target(&ep.ego_future)?, MotionMode::Full),
        Conditioning::AngleOnly => encode_motion_vector(derive_target(&ep.ego_future)?, MotionMode::AngleOnly),
        Conditioning::SpeedOnly => encode_motion_vector(derive_target(&ep.ego_future)?, MotionMode::SpeedOnly),
        Conditioning::DiscreteSpeedAction => discretize_speed(&ep.ego_future, ep.ego_speed, SpeedScheme::Action).1,
        Conditioning::DiscreteSpeedGoal => discretize_speed(&ep.ego_future, ep.ego_speed, SpeedScheme::Goal).1,
        Conditioning::ActionNavSpeed => encode_action(ep.nav, ep.annotation.longitudinal),
        Conditioning::Reasoner => {
            return Err(Error::Config("reasoner conditioning needs reasoner predictions".into()))
        }
    };
    Ok(attach_nav(enc, ep.nav, nav))
}
