use std::path::PathBuf;
use std::process::ExitCode;

use bwm::harness::{self, AblationRows, EvalOutput, ExperimentConfig, Grid};
use bwm::metrics::L2Protocol;
use bwm::sim::ScenarioMix;
use bwm::{Error, Result};
use clap::{Args, Parser, Subcommand};

/// Synthetic driving scenes, a behavior-predicting reasoner and a
/// behavior-conditioned latent world model.
///
/// Exit codes: 0 ok, 1 other failure, 2 usage, 3 config, 4 I/O, 5 validation.
#[derive(Parser)]
#[command(name = "bwm", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run root (default: $BWM_OUT, else ./runs).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Arm overrides, e.g. `conditioning=speed_only,nav=true,concat=false,strategy=first_16`.
    #[arg(long, global = true)]
    arm: Option<String>,
    /// L2 aggregation: avg or at-horizon.
    #[arg(long, global = true)]
    protocol: Option<L2Protocol>,
    /// Dataset directory (default: <out>/dataset).
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Epochs for every trainer the command runs.
    #[arg(long, global = true)]
    epochs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset and its train/val split.
    Gen {
        #[arg(long)]
        n: Option<usize>,
        /// Scenario weights, e.g. `straight=0.5,stop=0.5`.
        #[arg(long)]
        mix: Option<ScenarioMix>,
    },
    /// Stage one: train the reasoner.
    TrainReasoner,
    /// Stage two: train the world model for one arm.
    TrainWm {
        /// Reasoner checkpoint for `conditioning=reasoner` arms.
        #[arg(long)]
        reasoner_checkpoint: Option<PathBuf>,
    },
    /// Evaluate a reasoner or world-model checkpoint on the validation split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        reasoner_checkpoint: Option<PathBuf>,
    },
    /// Run one ablation grid and write a combined CSV.
    Ablate {
        #[arg(long)]
        grid: Grid,
    },
    /// Check a JSONL file of annotation records line by line.
    ValidateAnnotations { file: PathBuf },
}

fn resolve(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    if let Some(a) = &c.arm {
        cfg.arm.apply(a)?;
    }
    if let Some(p) = c.protocol {
        cfg.protocol = p;
    }
    if let Some(d) = &c.dataset {
        cfg.dataset = Some(d.clone());
    }
    if let Some(e) = c.epochs {
        cfg.set_epochs(e);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = resolve(&cli.common)?;
    match cli.command {
        Command::Gen { n, mix } => {
            if let Some(n) = n {
                cfg.n_scenes = n;
            }
            if let Some(m) = mix {
                cfg.mix = m;
            }
            let summary = harness::cmd_gen(&cfg)?;
            println!("{summary}");
            println!("wrote {}", cfg.dataset_dir().display());
        }
        Command::TrainReasoner => {
            let run = harness::cmd_train_reasoner(&cfg)?;
            if let Some(last) = run.report.epochs.last() {
                println!("final text loss {:.4}, behavior loss {:.4}", last.text_loss, last.behavior_loss);
            }
            println!(
                "validation MAE angle {:.4} speed {:.4}, parse rate {:.3}",
                run.eval.mae_angle, run.eval.mae_speed, run.eval.parse_rate
            );
            println!("wrote {}", run.dir.display());
        }
        Command::TrainWm { reasoner_checkpoint } => {
            if reasoner_checkpoint.is_some() {
                cfg.reasoner_checkpoint = reasoner_checkpoint;
            }
            let run = harness::cmd_train_wm(&cfg)?;
            let m = &run.metrics;
            println!("L2 {:.4} / {:.4} / {:.4} m", m.l2[0], m.l2[1], m.l2[2]);
            println!("collision {:.2} / {:.2} / {:.2} %", m.collision[0], m.collision[1], m.collision[2]);
            println!("wrote {}", run.dir.display());
        }
        Command::Eval {
            checkpoint,
            reasoner_checkpoint,
        } => {
            if reasoner_checkpoint.is_some() {
                cfg.reasoner_checkpoint = reasoner_checkpoint;
            }
            match harness::cmd_eval(&cfg, &checkpoint)? {
                EvalOutput::Plan { metrics, csv } => {
                    println!("L2 {:.4} / {:.4} / {:.4} m", metrics.l2[0], metrics.l2[1], metrics.l2[2]);
                    println!("wrote {}", csv.display());
                }
                EvalOutput::Reasoner { eval, csv } => {
                    println!("MAE angle {:.4} speed {:.4}", eval.mae_angle, eval.mae_speed);
                    println!("BLEU-1 {:.4} ROUGE-L {:.4}", eval.text.bleu[0], eval.text.rouge_l.f1);
                    println!("wrote {}", csv.display());
                }
            }
        }
        Command::Ablate { grid } => {
            let (rows, csv) = harness::cmd_ablate(&cfg, grid)?;
            match rows {
                AblationRows::Plan(rows) => {
                    for r in rows {
                        println!(
                            "{:<28} nav={:<5} concat={:<5} L2@3s {:.4}",
                            r.arm, r.nav, r.concat, r.metrics.l2[2]
                        );
                    }
                }
                AblationRows::Mae(rows) => {
                    for r in rows {
                        println!("{:<10} MAE angle {:.4} speed {:.4}", r.method, r.mae_angle, r.mae_speed);
                    }
                }
            }
            println!("wrote {}", csv.display());
        }
        Command::ValidateAnnotations { file } => {
            let reports = harness::cmd_validate_annotations(&file)?;
            let bad = reports.iter().filter(|r| r.error.is_some()).count();
            for r in &reports {
                println!("{r}");
            }
            if bad > 0 {
                return Err(Error::Validation(format!("{bad} of {} records invalid", reports.len())));
            }
            println!("{} records valid", reports.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
