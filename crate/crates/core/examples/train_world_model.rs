//! Train the world model with ground-truth motion-vector conditioning and
//! roll it forward on one validation scene.
//!
//! ```text
//! cargo run --release --example train_world_model
//! ```

use bwm::codec::Conditioning;
use bwm::harness::{arm_encodings, load_dataset, ArmDescriptor};
use bwm::metrics::L2Protocol;
use bwm::sim::{generate_dataset, ScenarioMix};
use bwm::training::TrainConfig;
use bwm::wm::{build_samples, train_wm, WmConfig};

fn main() -> bwm::Result<()> {
    let dir = std::env::temp_dir().join("bwm_train_world_model");
    generate_dataset(500, 2, &ScenarioMix::default(), &dir)?;
    let data = load_dataset(&dir)?;
    let arm = ArmDescriptor {
        conditioning: Conditioning::MotionVector,
        ..Default::default()
    };
    let train = build_samples(&data.train, &arm_encodings(&arm, &data.train, None)?)?;
    let val = build_samples(&data.val, &arm_encodings(&arm, &data.val, None)?)?;

    let tcfg = TrainConfig {
        epochs: 10,
        ..Default::default()
    };
    let (model, report) = train_wm(WmConfig::default(), &train, &val, &data.val, &tcfg, 0, L2Protocol::Avg)?;
    for e in &report.epochs {
        println!(
            "epoch {:>2}  loss {:.4}  L2 {:.3}/{:.3}/{:.3} m  latent mse {:.4}",
            e.epoch, e.train_loss, e.val.l2[0], e.val.l2[1], e.val.l2[2], e.val_latent_mse
        );
    }

    let s = &val[0];
    let (traj, latents) = model.rollout(&s.history, &s.behavior)?;
    println!("\nscene {}: predicted vs ground truth waypoints", s.scene_id);
    for (p, g) in traj.waypoints.iter().zip(&s.gt.waypoints) {
        println!("  ({:+6.2}, {:+6.2})  ({:+6.2}, {:+6.2})", p[0], p[1], g[0], g[1]);
    }
    println!("rollout produced {} latent frames; speed feature: {:?}", latents.len(), latents.iter().map(|z| (z[0] * 100.0).round() / 100.0).collect::<Vec<_>>());
    let dv = model.behavior_sensitivity(&s.history, &s.behavior, 1, false)?;
    println!("sum of waypoint coordinates changes by {dv:.2} per unit of v");
    Ok(())
}
