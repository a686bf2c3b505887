//! Kinematic ego maneuvers and agent placement.

use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    occupancy_collision, wrap_angle, Agent, AgentKind, Episode, Pose, ScenarioKind,
    Trajectory, DT, LANE_WIDTH, MAX_SPEED, N_FUTURE, N_HISTORY,
};
use crate::annotation::{template_generate, AnnotationRecord};

const SIM_DT: f64 = 0.05;
const STEPS_PER_FRAME: usize = 10;
/// Simulation starts at the oldest history frame.
const T_START: f64 = -((N_HISTORY - 1) as f64) * DT;
const VEHICLE: (f64, f64) = (4.5, 1.9);
const PEDESTRIAN: (f64, f64) = (0.6, 0.6);

/// Longitudinal profile for t ≥ 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpeedProfile {
    Constant,
    /// Constant acceleration, speed clamped to [0, MAX_SPEED].
    Linear { accel: f64 },
    /// Constant deceleration reaching rest at `t_stop`.
    StopAt { t_stop: f64 },
}

/// Lateral profile for t ≥ 0; history is always straight lane-following.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathProfile {
    Straight,
    /// Constant curvature from `start` until the heading has changed by `heading_change`.
    Arc { start: f64, curvature: f64, heading_change: f64 },
    /// Smooth lateral shift of `offset` meters (positive = left) over `duration` seconds.
    LaneChange { start: f64, duration: f64, offset: f64 },
}

/// Everything that determines an episode apart from annotation wording.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioParams {
    pub kind: ScenarioKind,
    /// Ego speed at t₀.
    pub speed: f64,
    /// Acceleration over the history window.
    pub history_accel: f64,
    pub speed_profile: SpeedProfile,
    pub path: PathProfile,
    /// Agents that define the scenario; never dropped.
    pub key_agents: Vec<Agent>,
    /// Optional traffic; any that the ground-truth future would hit are dropped.
    pub background: Vec<Agent>,
}

impl ScenarioParams {
    /// Agent-free constant-speed drive straight ahead.
    pub fn straight(speed: f64) -> Self {
        Self {
            kind: ScenarioKind::Straight,
            speed,
            history_accel: 0.0,
            speed_profile: SpeedProfile::Constant,
            path: PathProfile::Straight,
            key_agents: Vec::new(),
            background: Vec::new(),
        }
    }

    pub fn with_speed_profile(mut self, p: SpeedProfile) -> Self {
        self.speed_profile = p;
        self
    }

    pub fn with_background(mut self, agents: Vec<Agent>) -> Self {
        self.background = agents;
        self
    }

    /// Draw a random scenario of the given kind.
    pub fn sample(kind: ScenarioKind, rng: &mut impl Rng) -> Self {
        let mut params = match kind {
            ScenarioKind::Straight => {
                let speed = rng.random_range(2.0..16.0);
                let profile = if rng.random_bool(0.4) {
                    SpeedProfile::Constant
                } else {
                    let a = rng.random_range(0.5..2.0);
                    SpeedProfile::Linear {
                        accel: if rng.random_bool(0.5) { a } else { -a },
                    }
                };
                Self::straight(speed).with_speed_profile(profile)
            }
            ScenarioKind::LeftTurn | ScenarioKind::RightTurn => {
                let radius = rng.random_range(8.0..20.0);
                let sign = if kind == ScenarioKind::LeftTurn { 1.0 } else { -1.0 };
                Self {
                    kind,
                    speed: rng.random_range(3.0..8.0),
                    history_accel: 0.0,
                    speed_profile: SpeedProfile::Linear {
                        accel: rng.random_range(-0.5..1.0),
                    },
                    path: PathProfile::Arc {
                        start: rng.random_range(0.0..0.5),
                        curvature: sign / radius,
                        heading_change: FRAC_PI_2,
                    },
                    key_agents: Vec::new(),
                    background: Vec::new(),
                }
            }
            ScenarioKind::LaneChangeLeft | ScenarioKind::LaneChangeRight => {
                let sign = if kind == ScenarioKind::LaneChangeLeft { 1.0 } else { -1.0 };
                let speed = rng.random_range(6.0..15.0);
                let lead_speed = (speed - rng.random_range(2.0..4.0f64)).max(1.0);
                let lead = vehicle(0.0, rng.random_range(12.0..20.0), lead_speed);
                Self {
                    kind,
                    speed,
                    history_accel: 0.0,
                    speed_profile: SpeedProfile::Linear {
                        accel: rng.random_range(-0.3..0.8),
                    },
                    path: PathProfile::LaneChange {
                        start: rng.random_range(0.0..0.5),
                        duration: rng.random_range(2.5..3.5),
                        offset: sign * LANE_WIDTH,
                    },
                    key_agents: vec![lead],
                    background: Vec::new(),
                }
            }
            ScenarioKind::Stop | ScenarioKind::YieldVru => {
                let speed = rng.random_range(3.0..12.0);
                let t_stop = rng.random_range(1.0..2.5);
                // distance covered while braking linearly to rest
                let stop_y = speed * t_stop / 2.0;
                let key = if kind == ScenarioKind::Stop {
                    let gap = rng.random_range(1.5..4.0);
                    let mut a = vehicle(0.0, stop_y + 2.0 + VEHICLE.0 / 2.0 + gap, 0.0);
                    a.kind = AgentKind::Static;
                    a
                } else {
                    let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    Agent {
                        pose: Pose::new(side * rng.random_range(2.0..6.0), stop_y + 2.0 + rng.random_range(2.0..5.0), 0.0),
                        extent: PEDESTRIAN,
                        velocity: (-side * rng.random_range(1.0..1.5), 0.0),
                        kind: AgentKind::Pedestrian,
                    }
                };
                Self {
                    kind,
                    speed,
                    history_accel: 0.0,
                    speed_profile: SpeedProfile::StopAt { t_stop },
                    path: PathProfile::Straight,
                    key_agents: vec![key],
                    background: Vec::new(),
                }
            }
        };
        // Mild history acceleration, independent of what happens after t₀.
        let max_back = params.speed / (-T_START);
        params.history_accel = rng.random_range(-0.5..0.5f64).min(max_back);
        params.background = sample_background(kind, params.speed, rng);
        params
    }

    fn speed_at(&self, t: f64) -> f64 {
        let v = if t < 0.0 {
            self.speed + self.history_accel * t
        } else {
            match self.speed_profile {
                SpeedProfile::Constant => self.speed,
                SpeedProfile::Linear { accel } => self.speed + accel * t,
                SpeedProfile::StopAt { t_stop } => self.speed * (1.0 - t / t_stop).max(0.0),
            }
        };
        v.clamp(0.0, MAX_SPEED)
    }

    /// Integrate the ego motion and return the poses at every 2 Hz frame from
    /// the oldest history frame to the last future waypoint, in the t₀ frame.
    pub fn ego_frames(&self) -> Vec<Pose> {
        let n_steps = (N_HISTORY - 1 + N_FUTURE) * STEPS_PER_FRAME;
        let (mut x, mut y, mut th) = (0.0f64, 0.0f64, FRAC_PI_2);
        let mut turned = 0.0f64;
        let mut frames = vec![Pose::new(x, y, th)];
        for k in 0..n_steps {
            let t0 = T_START + k as f64 * SIM_DT;
            let t1 = T_START + (k + 1) as f64 * SIM_DT;
            let ds = 0.5 * (self.speed_at(t0) + self.speed_at(t1)) * SIM_DT;
            let tm = 0.5 * (t0 + t1);
            match self.path {
                PathProfile::Straight => {
                    x += ds * th.cos();
                    y += ds * th.sin();
                }
                PathProfile::Arc {
                    start,
                    curvature,
                    heading_change,
                } => {
                    let dth = if tm >= start && turned < heading_change {
                        (curvature * ds).clamp(-(heading_change - turned), heading_change - turned)
                    } else {
                        0.0
                    };
                    turned += dth.abs();
                    let mid = th + dth / 2.0;
                    x += ds * mid.cos();
                    y += ds * mid.sin();
                    th += dth;
                }
                PathProfile::LaneChange {
                    start,
                    duration,
                    offset,
                } => {
                    let mid = FRAC_PI_2 + self.lane_change_angle(tm, start, duration, offset);
                    x += ds * mid.cos();
                    y += ds * mid.sin();
                    th = FRAC_PI_2 + self.lane_change_angle(t1, start, duration, offset);
                }
            }
            if (k + 1) % STEPS_PER_FRAME == 0 {
                frames.push(Pose::new(x, y, th));
            }
        }
        // Re-express everything relative to the t₀ pose.
        let origin = frames[N_HISTORY - 1];
        let rot = FRAC_PI_2 - origin.heading;
        let (s, c) = rot.sin_cos();
        frames
            .into_iter()
            .map(|p| {
                let (dx, dy) = (p.x - origin.x, p.y - origin.y);
                Pose::new(c * dx - s * dy, s * dx + c * dy, wrap_angle(p.heading + rot))
            })
            .collect()
    }

    /// Heading offset from the lane direction that produces the lateral
    /// profile offset·(τ/T − sin(2πτ/T)/2π).
    fn lane_change_angle(&self, t: f64, start: f64, duration: f64, offset: f64) -> f64 {
        let tau = t - start;
        if tau <= 0.0 || tau >= duration {
            return 0.0;
        }
        let lateral_speed = offset / duration * (1.0 - (2.0 * std::f64::consts::PI * tau / duration).cos());
        let v = self.speed_at(t).max(1e-6);
        (lateral_speed / v).clamp(-1.0, 1.0).asin()
    }

    /// Build the episode. Background agents the future would collide with are
    /// dropped; key agents are pushed forward until clear.
    pub fn build(&self, scene_id: u64, rng: &mut impl Rng) -> Episode {
        let frames = self.ego_frames();
        let future = Trajectory::new(frames[N_HISTORY..].iter().map(|p| [p.x, p.y]).collect());
        let mut episode = Episode {
            scene_id,
            scenario_kind: self.kind,
            ego_history: frames[..N_HISTORY].to_vec(),
            ego_future: future,
            ego_speed: self.speed_at(0.0),
            nav: self.kind.nav(),
            agents: Vec::new(),
            annotation: AnnotationRecord::placeholder(),
        };
        for agent in &self.key_agents {
            let mut a = *agent;
            while collides_with(&episode, a) {
                a.pose.y += 2.0;
            }
            episode.agents.push(a);
        }
        for agent in &self.background {
            if !collides_with(&episode, *agent) {
                episode.agents.push(*agent);
            }
        }
        episode.annotation = template_generate(&episode, rng);
        episode
    }
}

fn collides_with(episode: &Episode, agent: Agent) -> bool {
    let probe = Episode {
        agents: vec![agent],
        annotation: AnnotationRecord::placeholder(),
        ego_history: Vec::new(),
        ..episode.clone()
    };
    occupancy_collision(&episode.ego_future, &probe, f64::INFINITY)
}

fn vehicle(x: f64, y: f64, speed: f64) -> Agent {
    Agent {
        pose: Pose::new(x, y, FRAC_PI_2),
        extent: VEHICLE,
        velocity: (0.0, speed),
        kind: AgentKind::Vehicle,
    }
}

fn sample_background(kind: ScenarioKind, ego_speed: f64, rng: &mut impl Rng) -> Vec<Agent> {
    let n = rng.random_range(0..=3);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let lane = match kind {
            // keep the target lane free
            ScenarioKind::LaneChangeLeft => LANE_WIDTH,
            ScenarioKind::LaneChangeRight => -LANE_WIDTH,
            _ => {
                if rng.random_bool(0.5) {
                    LANE_WIDTH
                } else {
                    -LANE_WIDTH
                }
            }
        };
        let speed = (ego_speed + rng.random_range(-3.0..3.0)).clamp(0.0, MAX_SPEED);
        out.push(vehicle(lane, rng.random_range(-20.0..45.0), speed));
    }
    if kind == ScenarioKind::Straight && rng.random_bool(0.3) {
        // a faster lead vehicle well ahead in the ego lane
        let speed = (ego_speed + rng.random_range(0.0..3.0)).min(MAX_SPEED);
        out.push(vehicle(0.0, rng.random_range(25.0..50.0), speed));
    }
    out
}

/// Deterministic in `(seed, kind)`; the scene id equals the seed.
pub fn generate_episode(seed: u64, kind: ScenarioKind) -> Episode {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ScenarioParams::sample(kind, &mut rng);
    params.build(seed, &mut rng)
}

pub(crate) fn generate_scene(scene_id: u64, seed: u64, kind: ScenarioKind) -> Episode {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ScenarioParams::sample(kind, &mut rng);
    params.build(scene_id, &mut rng)
}

/// Largest |Δheading| / distance over consecutive waypoints (origin first).
pub fn max_curvature(traj: &Trajectory) -> f64 {
    let mut pts = vec![[0.0, 0.0]];
    pts.extend(traj.waypoints.iter().copied());
    let mut worst = 0.0f64;
    for w in pts.windows(3) {
        let h1 = (w[1][1] - w[0][1]).atan2(w[1][0] - w[0][0]);
        let h2 = (w[2][1] - w[1][1]).atan2(w[2][0] - w[1][0]);
        let ds = (w[2][0] - w[1][0]).hypot(w[2][1] - w[1][1]);
        if ds > 0.5 {
            worst = worst.max(wrap_angle(h2 - h1).abs() / ds);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{NavCommand, MAX_CURVATURE};

    #[test]
    fn straight_constant_speed_reaches_thirty_meters() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ep = ScenarioParams::straight(10.0).build(0, &mut rng);
        let last = ep.ego_future.waypoints[5];
        assert!(last[0].abs() < 1e-9, "{last:?}");
        assert!((last[1] - 30.0).abs() < 1e-9, "{last:?}");
        assert_eq!(ep.ego_history.len(), 4);
        assert_eq!(ep.ego_history[3], Pose::new(0.0, 0.0, FRAC_PI_2));
        assert!((ep.ego_history[0].y + 15.0).abs() < 1e-9);
    }

    #[test]
    fn stop_decelerates_to_rest() {
        for seed in 0..50 {
            let ep = generate_episode(seed, ScenarioKind::Stop);
            let w = &ep.ego_future.waypoints;
            let d = (w[5][0] - w[0][0]).hypot(w[5][1] - w[0][1]);
            assert!(d < 30.0);
            assert!((w[5][1] - w[4][1]).abs() < 1e-9, "at rest by 3 s");
        }
    }

    #[test]
    fn same_seed_same_episode() {
        for kind in ScenarioKind::ALL {
            let a = generate_episode(42, kind);
            let b = generate_episode(42, kind);
            assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        }
    }

    #[test]
    fn turns_bend_the_right_way() {
        for seed in 0..20 {
            let l = generate_episode(seed, ScenarioKind::LeftTurn);
            let r = generate_episode(seed, ScenarioKind::RightTurn);
            assert!(l.ego_future.waypoints[5][0] < -1.0);
            assert!(r.ego_future.waypoints[5][0] > 1.0);
            assert_eq!(l.nav, NavCommand::TurnLeft);
            assert_eq!(r.nav, NavCommand::TurnRight);
        }
    }

    #[test]
    fn lane_change_shifts_sideways() {
        let params = ScenarioParams {
            kind: ScenarioKind::LaneChangeLeft,
            path: PathProfile::LaneChange {
                start: 0.0,
                duration: 2.5,
                offset: LANE_WIDTH,
            },
            ..ScenarioParams::straight(10.0)
        };
        let frames = params.ego_frames();
        let end = frames.last().unwrap();
        assert!((end.x + LANE_WIDTH).abs() < 0.05, "{end:?}");
        assert!((end.heading - FRAC_PI_2).abs() < 1e-9);
    }

    #[test]
    fn generator_contract_holds() {
        for seed in 0..300 {
            let kind = ScenarioKind::ALL[seed as usize % 7];
            let ep = generate_episode(seed, kind);
            assert!(max_curvature(&ep.ego_future) <= MAX_CURVATURE, "{kind} {seed}");
            assert!(ep.ego_speed <= MAX_SPEED);
            for w in ep.ego_future.waypoints.windows(2) {
                let v = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]) / DT;
                assert!(v <= MAX_SPEED + 1e-9);
            }
            assert!(!occupancy_collision(&ep.ego_future, &ep, 3.0), "{kind} {seed}");
        }
    }
}
