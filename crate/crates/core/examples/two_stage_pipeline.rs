//! The full pipeline: generate scenes, train the reasoner, condition the
//! world model on the reasoner's predicted motion vectors, then evaluate.
//!
//! ```text
//! cargo run --release --example two_stage_pipeline
//! ```

use bwm::codec::Conditioning;
use bwm::harness::{cmd_eval, cmd_gen, cmd_train_reasoner, cmd_train_wm, EvalOutput, ExperimentConfig};

fn main() -> bwm::Result<()> {
    let out = std::env::temp_dir().join("bwm_two_stage");
    let mut cfg = ExperimentConfig::with_out(&out);
    cfg.n_scenes = 800;
    cfg.set_epochs(15);
    println!("{}", cmd_gen(&cfg)?);

    let reasoner = cmd_train_reasoner(&cfg)?;
    println!(
        "reasoner: generation MAE angle {:.3} speed {:.3}, parse rate {:.2}",
        reasoner.eval.mae_angle, reasoner.eval.mae_speed, reasoner.eval.parse_rate
    );

    for cond in [Conditioning::None, Conditioning::Reasoner, Conditioning::MotionVector] {
        let mut c = cfg.clone();
        c.arm.conditioning = cond;
        let run = cmd_train_wm(&c)?;
        let m = run.metrics;
        println!(
            "{:<24} L2 {:.3}/{:.3}/{:.3} m  collision {:.1}/{:.1}/{:.1} %",
            cond.label(),
            m.l2[0],
            m.l2[1],
            m.l2[2],
            m.collision[0],
            m.collision[1],
            m.collision[2]
        );
    }

    // the last arm's checkpoint, re-evaluated from disk
    if let EvalOutput::Plan { metrics, csv } = cmd_eval(&cfg, &out.join("wm").join("wm.json"))? {
        println!("re-evaluated: L2@3s {:.3} m -> {}", metrics.l2[2], csv.display());
    }
    Ok(())
}
