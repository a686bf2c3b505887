//! Planning metrics: displacement error, collision rate, behavior MAE.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{occupancy_collision, Episode, Trajectory};

pub const HORIZONS: [f64; 3] = [1.0, 2.0, 3.0];

/// How displacement error is aggregated within a horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum L2Protocol {
    /// Mean over every waypoint up to the horizon.
    #[default]
    Avg,
    /// Error of the waypoint at the horizon only.
    AtHorizon,
}

impl FromStr for L2Protocol {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avg" => Ok(L2Protocol::Avg),
            "at-horizon" => Ok(L2Protocol::AtHorizon),
            _ => Err(Error::Config(format!("unknown L2 protocol '{s}' (avg | at-horizon)"))),
        }
    }
}

impl fmt::Display for L2Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            L2Protocol::Avg => "avg",
            L2Protocol::AtHorizon => "at-horizon",
        })
    }
}

/// L2 error at 1, 2 and 3 s.
pub fn l2_at_horizons(pred: &Trajectory, gt: &Trajectory, protocol: L2Protocol) -> Result<[f64; 3]> {
    if pred.len() != gt.len() {
        return Err(Error::Input(format!("trajectory lengths differ: {} vs {}", pred.len(), gt.len())));
    }
    let dist: Vec<f64> = pred
        .waypoints
        .iter()
        .zip(&gt.waypoints)
        .map(|(p, g)| (p[0] - g[0]).hypot(p[1] - g[1]))
        .collect();
    let mut out = [0.0; 3];
    for (o, h) in out.iter_mut().zip(HORIZONS) {
        let n = (0..gt.len()).take_while(|&i| gt.time_of(i) <= h + 1e-9).count();
        if n == 0 {
            continue;
        }
        *o = match protocol {
            L2Protocol::Avg => dist[..n].iter().sum::<f64>() / n as f64,
            L2Protocol::AtHorizon => dist[n - 1],
        };
    }
    Ok(out)
}

/// Percentage of samples whose prediction collides within each horizon.
pub fn collision_rate(preds: &[Trajectory], episodes: &[Episode]) -> Result<[f64; 3]> {
    if preds.len() != episodes.len() {
        return Err(Error::Input(format!(
            "{} predictions for {} episodes",
            preds.len(),
            episodes.len()
        )));
    }
    if preds.is_empty() {
        return Ok([0.0; 3]);
    }
    let mut hits = [0usize; 3];
    for (p, e) in preds.iter().zip(episodes) {
        for (k, h) in HORIZONS.into_iter().enumerate() {
            if occupancy_collision(p, e, h) {
                hits[k] += 1;
            }
        }
    }
    Ok(hits.map(|c| 100.0 * c as f64 / preds.len() as f64))
}

/// Mean absolute error of (angle, speed) pairs.
pub fn mae_behavior(preds: &[(f64, f64)], targets: &[(f64, f64)]) -> Result<(f64, f64)> {
    if preds.len() != targets.len() {
        return Err(Error::Input(format!("{} predictions for {} targets", preds.len(), targets.len())));
    }
    if preds.is_empty() {
        return Ok((0.0, 0.0));
    }
    let n = preds.len() as f64;
    let (a, v) = preds
        .iter()
        .zip(targets)
        .fold((0.0, 0.0), |(a, v), (p, t)| (a + (p.0 - t.0).abs(), v + (p.1 - t.1).abs()));
    Ok((a / n, v / n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanMetrics {
    pub l2: [f64; 3],
    pub collision: [f64; 3],
    pub n_samples: usize,
}

impl PlanMetrics {
    pub fn compute(preds: &[Trajectory], episodes: &[Episode], protocol: L2Protocol) -> Result<Self> {
        let collision = collision_rate(preds, episodes)?;
        let mut l2 = [0.0; 3];
        for (p, e) in preds.iter().zip(episodes) {
            let r = l2_at_horizons(p, &e.ego_future, protocol)?;
            for k in 0..3 {
                l2[k] += r[k];
            }
        }
        if !preds.is_empty() {
            l2.iter_mut().for_each(|v| *v /= preds.len() as f64);
        }
        Ok(Self {
            l2,
            collision,
            n_samples: preds.len(),
        })
    }
}
