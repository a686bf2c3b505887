use bwm_tensor::{AttentionBlock, AttentionConfig, Graph, ParamStore, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-20.0f64..20.0, rows * cols)
        .prop_map(move |d| Tensor::new(vec![rows, cols], d).unwrap())
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(x in matrix(4, 7)) {
        let mut g = Graph::new();
        let v = g.constant(x);
        for s in [g.softmax(v).unwrap(), g.causal_softmax(v).unwrap()] {
            for r in 0..4 {
                let row = g.value(s).row_slice(r);
                prop_assert!(row.iter().all(|w| *w >= 0.0));
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn attention_forward_is_bit_deterministic(q in matrix(3, 8), src in matrix(5, 8), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new();
        let cfg = AttentionConfig { model_dim: 8, heads: 2, ff_dim: 16, pre_norm: true };
        let b = AttentionBlock::init(&mut s, "b", cfg, &mut rng).unwrap();
        let run = || {
            let mut g = Graph::new();
            let qv = g.constant(q.clone());
            let sv = g.constant(src.clone());
            let out = b.forward(&mut g, &s, qv, sv, false).unwrap();
            let w = g.value(out.weights[0]).data().to_vec();
            prop_assert!(w.iter().all(|x| *x >= 0.0));
            Ok(g.value(out.out).data().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
        };
        prop_assert_eq!(run()?, run()?);
    }

    #[test]
    fn broadcast_add_matches_rowwise(x in matrix(3, 4), b in prop::collection::vec(-5.0f64..5.0, 4)) {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let bv = g.constant(Tensor::new(vec![4], b.clone()).unwrap());
        let y = g.add(xv, bv).unwrap();
        for r in 0..3 {
            for c in 0..4 {
                prop_assert_eq!(g.value(y).data()[r * 4 + c], x.data()[r * 4 + c] + b[c]);
            }
        }
    }
}

/// Inverted dropout keeps the expectation: the mean of many masks applied to
/// a constant stays within 3σ of the constant.
#[test]
fn dropout_preserves_expectation() {
    let n_seeds = 400;
    let width = 50;
    let p = 0.5;
    let x = 1.3;
    let mut total = 0.0;
    for seed in 0..n_seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = Graph::new();
        let v = g.constant(Tensor::filled(&[1, width], x));
        let y = g.dropout(v, p, &mut rng, true).unwrap();
        total += g.value(y).data().iter().sum::<f64>();
    }
    let n = (n_seeds as usize * width) as f64;
    let mean = total / n;
    // each element is x/(1-p) with prob (1-p), else 0
    let sigma = x / (1.0 - p) * (p * (1.0 - p)).sqrt() / n.sqrt();
    assert!((mean - x).abs() < 3.0 * sigma, "mean {mean}, sigma {sigma}");
}
