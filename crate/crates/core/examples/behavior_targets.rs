//! Behavior targets and conditioning vectors for every scenario kind.
//!
//! ```text
//! cargo run --example behavior_targets
//! ```

use bwm::codec::{derive_target, ground_truth_encoding, Conditioning};
use bwm::sim::{generate_episode, ScenarioKind};

fn main() -> bwm::Result<()> {
    println!("{:<18} {:>8} {:>7}", "scenario", "alpha", "v");
    for kind in ScenarioKind::ALL {
        let ep = generate_episode(3, kind);
        let t = derive_target(&ep.ego_future)?;
        println!("{:<18} {:>+8.4} {:>7.4}", kind.as_str(), t.alpha, t.v);
    }

    let ep = generate_episode(3, ScenarioKind::LeftTurn);
    println!("\nencodings for a left turn (payload | nav):");
    for cond in [
        Conditioning::None,
        Conditioning::MotionVector,
        Conditioning::AngleOnly,
        Conditioning::SpeedOnly,
        Conditioning::DiscreteSpeedAction,
        Conditioning::DiscreteSpeedGoal,
        Conditioning::ActionNavSpeed,
    ] {
        let e = ground_truth_encoding(&ep, cond, true)?;
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:+.2}")).collect::<Vec<_>>().join(" ");
        println!("  {:<22} {} | {}", cond.as_str(), fmt(e.payload()), fmt(e.nav_slots()));
    }
    Ok(())
}
