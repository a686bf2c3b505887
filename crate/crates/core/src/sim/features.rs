//! Fixed-width per-frame scene descriptors fed to the world model.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{ego_box_at, wrap_angle, Episode, DT, LANE_WIDTH, MAX_SPEED, N_FUTURE, N_HISTORY};
use crate::error::{Error, Result};

/// Agents farther than this (meters) are invisible; distances saturate here.
pub const SENSOR_RANGE: f64 = 50.0;
/// Angular sectors, sector 0 straight ahead, counter-clockwise.
pub const N_SECTORS: usize = 8;
/// History frames followed by future frames.
pub const N_FRAMES: usize = N_HISTORY + N_FUTURE;
/// speed, nav one-hot, per-sector distance and closing speed, lane offset, curvature.
pub const FEATURE_DIM: usize = 1 + 3 + 2 * N_SECTORS + 2;

const CURVATURE_GAIN: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentFrame {
    pub features: Vec<f64>,
}

pub fn feature_names() -> Vec<String> {
    let mut names = vec!["speed".to_string(), "nav_left".into(), "nav_right".into(), "nav_straight".into()];
    names.extend((0..N_SECTORS).map(|s| format!("sector{s}_dist")));
    names.extend((0..N_SECTORS).map(|s| format!("sector{s}_closing")));
    names.push("lane_offset".into());
    names.push("curvature".into());
    names
}

fn positions(ep: &Episode) -> Vec<[f64; 2]> {
    ep.ego_history
        .iter()
        .map(|p| [p.x, p.y])
        .chain(ep.ego_future.waypoints.iter().copied())
        .collect()
}

/// Describe frame `t` (0..=3 history, 4..=9 future) from the ego's point of view.
pub fn featurize(ep: &Episode, t: usize) -> Result<LatentFrame> {
    if ep.ego_history.len() != N_HISTORY || ep.ego_future.len() != N_FUTURE {
        return Err(Error::Input(format!(
            "episode {} has {} history / {} future frames",
            ep.scene_id,
            ep.ego_history.len(),
            ep.ego_future.len()
        )));
    }
    if t >= N_FRAMES {
        return Err(Error::Index(format!("frame {t} outside 0..{N_FRAMES}")));
    }
    let pos = positions(ep);
    let [ex, ey] = pos[t];
    let heading = if t < N_HISTORY {
        ep.ego_history[t].heading
    } else {
        ego_box_at(&ep.ego_future, t - N_HISTORY).heading
    };
    let step = |a: usize, b: usize| (pos[b][0] - pos[a][0]).hypot(pos[b][1] - pos[a][1]);
    let speed = match t {
        3 => ep.ego_speed,
        0 => step(0, 1) / DT,
        _ => step(t - 1, t) / DT,
    };

    let mut f = Vec::with_capacity(FEATURE_DIM);
    f.push(speed / MAX_SPEED);
    f.extend(ep.nav.one_hot());

    let mut dist = [SENSOR_RANGE; N_SECTORS];
    let mut closing = [0.0; N_SECTORS];
    let time = (t as f64 - (N_HISTORY - 1) as f64) * DT;
    let (hs, hc) = heading.sin_cos();
    let (evx, evy) = (speed * hc, speed * hs);
    for a in &ep.agents {
        let (ax, ay) = a.position_at(time);
        let (dx, dy) = (ax - ex, ay - ey);
        let d = dx.hypot(dy);
        if d >= SENSOR_RANGE {
            continue;
        }
        let forward = dx * hc + dy * hs;
        let left = -dx * hs + dy * hc;
        let bearing = left.atan2(forward);
        let sector = ((bearing / (2.0 * PI / N_SECTORS as f64)).round() as i64).rem_euclid(N_SECTORS as i64) as usize;
        if d < dist[sector] {
            dist[sector] = d;
            closing[sector] = if d > 1e-9 {
                let rv = ((a.velocity.0 - evx) * dx + (a.velocity.1 - evy) * dy) / d;
                (-rv / MAX_SPEED).clamp(-1.0, 1.0)
            } else {
                0.0
            };
        }
    }
    f.extend(dist.iter().map(|d| d / SENSOR_RANGE));
    f.extend(closing);

    f.push((ex / LANE_WIDTH).clamp(-1.0, 1.0));
    let curvature = if t >= 2 {
        let h1 = (pos[t - 1][1] - pos[t - 2][1]).atan2(pos[t - 1][0] - pos[t - 2][0]);
        let h2 = (pos[t][1] - pos[t - 1][1]).atan2(pos[t][0] - pos[t - 1][0]);
        let ds = step(t - 1, t);
        if ds > 0.5 && step(t - 2, t - 1) > 0.5 {
            wrap_angle(h2 - h1) / ds
        } else {
            0.0
        }
    } else {
        0.0
    };
    f.push((curvature * CURVATURE_GAIN).clamp(-1.0, 1.0));
    debug_assert_eq!(f.len(), FEATURE_DIM);
    Ok(LatentFrame { features: f })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Agent, AgentKind, Pose, ScenarioParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn straight(speed: f64, agents: Vec<Agent>) -> Episode {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ep = ScenarioParams::straight(speed).build(0, &mut rng);
        ep.agents = agents;
        ep
    }

    #[test]
    fn no_agents_saturates_every_sector() {
        let ep = straight(8.0, vec![]);
        for t in 0..N_FRAMES {
            let f = featurize(&ep, t).unwrap().features;
            assert_eq!(f.len(), FEATURE_DIM);
            assert!(f[4..12].iter().all(|v| *v == 1.0));
            assert!(f[12..20].iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn stationary_ego_has_zero_speed_feature() {
        let ep = straight(0.0, vec![]);
        assert_eq!(featurize(&ep, 3).unwrap().features[0], 0.0);
    }

    #[test]
    fn agent_ten_meters_ahead() {
        let agent = Agent {
            pose: Pose::new(0.0, 10.0, std::f64::consts::FRAC_PI_2),
            extent: (4.5, 1.9),
            velocity: (0.0, 0.0),
            kind: AgentKind::Static,
        };
        let ep = straight(5.0, vec![agent]);
        let f = featurize(&ep, 3).unwrap().features;
        assert!((f[4] - 0.2).abs() < 1e-12);
        // approaching a static object at 5 m/s
        assert!((f[12] - 0.25).abs() < 1e-12);
        // left of the ego lands in sector 2, right in sector 6
        let mut side = agent;
        side.pose.x = -5.0;
        side.pose.y = 0.0;
        let f = featurize(&straight(5.0, vec![side]), 3).unwrap().features;
        assert!((f[4 + 2] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn frame_out_of_range() {
        let ep = straight(5.0, vec![]);
        assert!(matches!(featurize(&ep, N_FRAMES), Err(Error::Index(_))));
        assert_eq!(feature_names().len(), FEATURE_DIM);
    }
}
