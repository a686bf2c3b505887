//! Run the concat ablation grid through the harness and print the table.
//! Pass `conditioning` as the first argument for the conditioning grid.
//!
//! ```text
//! cargo run --release --example ablation [concat|conditioning|tokens]
//! ```

use bwm::harness::{cmd_ablate, cmd_gen, AblationRows, ExperimentConfig, Grid};

fn main() -> bwm::Result<()> {
    let grid: Grid = std::env::args().nth(1).as_deref().unwrap_or("concat").parse()?;
    let mut cfg = ExperimentConfig::with_out(&std::env::temp_dir().join("bwm_ablation"));
    cfg.n_scenes = 1000;
    cfg.set_epochs(15);
    cmd_gen(&cfg)?;
    let (rows, csv) = cmd_ablate(&cfg, grid)?;
    match rows {
        AblationRows::Plan(rows) => {
            println!("{:<28} {:>5} {:>6}  {:>20}  {:>20}", "arm", "nav", "concat", "L2 1/2/3 s (m)", "collision (%)");
            for r in rows {
                let m = r.metrics;
                println!(
                    "{:<28} {:>5} {:>6}  {:>6.3} {:>6.3} {:>6.3}  {:>6.1} {:>6.1} {:>6.1}",
                    r.arm, r.nav, r.concat, m.l2[0], m.l2[1], m.l2[2], m.collision[0], m.collision[1], m.collision[2]
                );
            }
        }
        AblationRows::Mae(rows) => {
            for r in rows {
                println!("{:<10} MAE angle {:.3} speed {:.3}", r.method, r.mae_angle, r.mae_speed);
            }
        }
    }
    println!("\n{}", csv.display());
    Ok(())
}
