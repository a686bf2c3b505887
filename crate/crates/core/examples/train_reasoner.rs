//! Train the reasoner on a few hundred scenes, then generate an annotation
//! and a behavior prediction for a validation scene.
//!
//! ```text
//! cargo run --release --example train_reasoner
//! ```

use bwm::harness::load_dataset;
use bwm::reasoner::{build_reasoner_samples, evaluate_reasoner, train_reasoner, BehaviorStrategy, ReasonerConfig};
use bwm::sim::{generate_dataset, ScenarioMix};
use bwm::training::TrainConfig;

fn main() -> bwm::Result<()> {
    let dir = std::env::temp_dir().join("bwm_train_reasoner");
    generate_dataset(600, 1, &ScenarioMix::default(), &dir)?;
    let data = load_dataset(&dir)?;
    let vocab = bwm::annotation::Vocab::builtin();
    let train = build_reasoner_samples(&data.train, &vocab)?;
    let val = build_reasoner_samples(&data.val, &vocab)?;

    let cfg = ReasonerConfig {
        behavior_strategy: BehaviorStrategy::BehTokens(5),
        ..Default::default()
    };
    let mut tcfg = TrainConfig {
        epochs: 15,
        ..Default::default()
    };
    tcfg.optim.lr = 2e-3;
    let (model, report) = train_reasoner(cfg, &train, &val, &tcfg, 0)?;
    println!("untrained MAE angle {:.3} speed {:.3}", report.untrained_mae.0, report.untrained_mae.1);
    for e in &report.epochs {
        println!(
            "epoch {:>2}  text {:.3}  behavior {:.4}  MAE angle {:.3} speed {:.3}",
            e.epoch, e.text_loss, e.behavior_loss, e.mae_angle, e.mae_speed
        );
    }

    let (eval, _) = evaluate_reasoner(&model, &val)?;
    println!(
        "\ngreedy generation: MAE angle {:.3} speed {:.3}, parse rate {:.2}, BLEU-1 {:.3}",
        eval.mae_angle, eval.mae_speed, eval.parse_rate, eval.text.bleu[0]
    );

    let s = &val[0];
    let ((alpha, v), out) = model.predict_behavior(&s.prompt)?;
    println!("\nscene {}: predicted (alpha {alpha:+.3}, v {v:.3}), target ({:+.3}, {:.3})", s.scene_id, s.target.0, s.target.1);
    match &out.record {
        Some(r) => println!("{}", bwm::annotation::serialize(r)),
        None => println!("(unparseable) {}", out.text.iter().map(|&i| model.vocab.token(i)).collect::<Vec<_>>().join(" ")),
    }
    Ok(())
}
