//! The tensor engine on its own: fit a two-layer network with Adam, then
//! check its gradients against central differences.
//!
//! ```text
//! cargo run --example autodiff
//! ```

use bwm_tensor::{grad_check, Graph, Linear, LrSchedule, OptimConfig, Optimizer, ParamStore, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> bwm_tensor::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let l1 = Linear::init(&mut store, "l1", 2, 16, &mut rng)?;
    let l2 = Linear::init(&mut store, "l2", 16, 1, &mut rng)?;

    // y = sin(x0) * x1 on [-2, 2]²
    let xs: Vec<Vec<f64>> = (0..64).map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
    let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![x[0].sin() * x[1]]).collect();
    let x = Tensor::from_rows(&xs)?;
    let y = Tensor::from_rows(&ys)?;

    let loss_fn = |g: &mut Graph, s: &ParamStore| {
        let xv = g.constant(x.clone());
        let h = l1.forward(g, s, xv)?;
        let h = g.tanh(h);
        let out = l2.forward(g, s, h)?;
        let t = g.constant(y.clone());
        g.mse(out, t)
    };

    let cfg = OptimConfig {
        lr: 1e-2,
        weight_decay: 0.0,
        warmup_steps: 0,
        ..Default::default()
    };
    let steps = 1500;
    let mut opt = Optimizer::from_config(&cfg);
    let schedule = LrSchedule {
        base_lr: cfg.lr,
        final_lr: cfg.lr * cfg.final_lr_ratio,
        warmup_steps: cfg.warmup_steps,
        total_steps: steps,
    };
    for step in 0..=steps {
        let mut g = Graph::new();
        let loss = loss_fn(&mut g, &store)?;
        if step % 300 == 0 {
            println!("step {step:>5}  mse {:.5}", g.scalar(loss));
        }
        if step == steps {
            break;
        }
        let grads = g.backward(loss)?;
        store.zero_grad();
        store.accumulate(&g, &grads);
        opt.step(&mut store, schedule.lr_at(step))?;
    }

    let report = grad_check(&mut store, 1e-5, None, loss_fn)?;
    println!(
        "gradient check: {} coordinates, max relative error {:.2e}",
        report.coords_checked, report.max_rel_error
    );
    Ok(())
}
