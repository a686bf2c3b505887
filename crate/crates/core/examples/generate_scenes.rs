//! Generate a small synthetic dataset, read it back and inspect one episode.
//!
//! ```text
//! cargo run --example generate_scenes
//! ```

use bwm::sim::{featurize, generate_dataset, read_dataset, read_split, ScenarioMix, N_HISTORY};

fn main() -> bwm::Result<()> {
    let dir = std::env::temp_dir().join("bwm_generate_scenes");
    let summary = generate_dataset(60, 42, &ScenarioMix::default(), &dir)?;
    println!("{summary} in {}", dir.display());
    for (kind, n) in &summary.counts {
        println!("  {:<18} {n}", kind.as_str());
    }

    let (header, episodes) = read_dataset(&dir)?;
    let split = read_split(&dir, &episodes)?;
    println!("schema v{}, {} features per frame", header.schema_version, header.feature_dim);
    println!("first validation scenes: {:?}", &split.val[..split.val.len().min(5)]);

    let ep = &episodes[0];
    println!(
        "\nscene {} ({}), nav {}, speed {:.2} m/s, {} agents",
        ep.scene_id,
        ep.scenario_kind.as_str(),
        ep.nav.as_str(),
        ep.ego_speed,
        ep.agents.len()
    );
    for (i, w) in ep.ego_future.waypoints.iter().enumerate() {
        println!("  t = {:.1} s  x {:+7.2}  y {:+7.2}", ep.ego_future.time_of(i), w[0], w[1]);
    }
    let frame = featurize(ep, N_HISTORY - 1)?;
    for (name, v) in header.feature_names.iter().zip(&frame.features).take(8) {
        println!("  {name:<14} {v:+.3}");
    }
    println!("  ...");
    Ok(())
}
