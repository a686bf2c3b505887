//! Planning metrics on hand-made predictions: L2 at 1/2/3 s under both
//! aggregation protocols, and occupancy collision rates.
//!
//! ```text
//! cargo run --example plan_metrics
//! ```

use bwm::metrics::{l2_at_horizons, L2Protocol, PlanMetrics};
use bwm::sim::{generate_episode, ScenarioKind, Trajectory};

fn main() -> bwm::Result<()> {
    let episodes: Vec<_> = [ScenarioKind::Straight, ScenarioKind::Stop, ScenarioKind::YieldVru]
        .into_iter()
        .enumerate()
        .map(|(i, k)| generate_episode(i as u64, k))
        .collect();

    // a planner that always drives straight at 8 m/s
    let straight = Trajectory::new((1..=6).map(|i| [0.0, 4.0 * i as f64]).collect());
    // one that copies the ground truth with a 0.5 m lateral offset
    let offset: Vec<Trajectory> = episodes
        .iter()
        .map(|e| Trajectory::new(e.ego_future.waypoints.iter().map(|w| [w[0] + 0.5, w[1]]).collect()))
        .collect();

    for ep in &episodes {
        let avg = l2_at_horizons(&straight, &ep.ego_future, L2Protocol::Avg)?;
        let at = l2_at_horizons(&straight, &ep.ego_future, L2Protocol::AtHorizon)?;
        println!(
            "{:<10} constant-speed L2 avg {:.2}/{:.2}/{:.2} m, at horizon {:.2}/{:.2}/{:.2} m",
            ep.scenario_kind.as_str(),
            avg[0],
            avg[1],
            avg[2],
            at[0],
            at[1],
            at[2]
        );
    }

    for (name, preds) in [("constant speed", vec![straight; episodes.len()]), ("offset truth", offset)] {
        let m = PlanMetrics::compute(&preds, &episodes, L2Protocol::Avg)?;
        println!(
            "{name:<15} L2 {:.2}/{:.2}/{:.2} m  collision {:.1}/{:.1}/{:.1} %",
            m.l2[0], m.l2[1], m.l2[2], m.collision[0], m.collision[1], m.collision[2]
        );
    }
    Ok(())
}
