//! BLEU-1..4 and ROUGE-1/2/L on a few candidate/reference pairs.
//!
//! ```text
//! cargo run --example text_metrics
//! ```

use bwm::metrics::{bleu, metric_tokens, rouge, TextMetrics};

fn main() -> bwm::Result<()> {
    let pairs = [
        (
            "the ego vehicle slows down because a pedestrian is crossing ahead.",
            "a pedestrian is crossing ahead, so the ego vehicle slows down.",
        ),
        ("the road ahead is clear.", "the road ahead is clear."),
        ("turn left at the junction.", "keep the current lane and speed."),
    ];
    for (c, r) in &pairs {
        let (ct, rt) = (metric_tokens(c), metric_tokens(r));
        let b = bleu(&ct, &rt, 4)?;
        let ro = rouge(&ct, &rt);
        println!("cand: {c}\nref:  {r}");
        println!(
            "  BLEU-1..4 {:.3} {:.3} {:.3} {:.3}   ROUGE-1 {:.3}  ROUGE-2 {:.3}  ROUGE-L {:.3}\n",
            b[0], b[1], b[2], b[3], ro.rouge1.f1, ro.rouge2.f1, ro.rouge_l.f1
        );
    }
    let corpus: Vec<(String, String)> = pairs.iter().map(|(c, r)| (c.to_string(), r.to_string())).collect();
    let m = TextMetrics::compute(&corpus);
    println!("corpus mean over {} pairs: BLEU-4 {:.3}, ROUGE-L F1 {:.3}", m.n_samples, m.bleu[3], m.rouge_l.f1);
    Ok(())
}
