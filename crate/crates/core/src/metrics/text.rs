//! Sentence-level BLEU and ROUGE over word tokens, single reference.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::annotation::split_words;
use crate::error::{Error, Result};

/// Lowercased word tokens, the tokenization used for all text metrics.
pub fn metric_tokens(text: &str) -> Vec<String> {
    split_words(&text.to_lowercase())
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut m = HashMap::new();
    if n == 0 || tokens.len() < n {
        return m;
    }
    for w in tokens.windows(n) {
        *m.entry(w.iter().map(|s| s.as_ref()).collect()).or_insert(0) += 1;
    }
    m
}

fn clipped_overlap<S: AsRef<str>>(cand: &[S], reference: &[S], n: usize) -> (usize, usize, usize) {
    let c = ngram_counts(cand, n);
    let r = ngram_counts(reference, n);
    let overlap = c.iter().map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0))).sum();
    let total_c = cand.len().saturating_sub(n - 1);
    let total_r = reference.len().saturating_sub(n - 1);
    (overlap, total_c, total_r)
}

/// Clipped n-gram precision p_n.
pub fn modified_precision<S: AsRef<str>>(cand: &[S], reference: &[S], n: usize) -> f64 {
    let (overlap, total, _) = clipped_overlap(cand, reference, n);
    if total == 0 {
        0.0
    } else {
        overlap as f64 / total as f64
    }
}

/// BLEU-1..=max_n without smoothing: BP·exp(mean log p_k), 0 if any p_k = 0.
pub fn bleu<S: AsRef<str>>(cand: &[S], reference: &[S], max_n: usize) -> Result<Vec<f64>> {
    if max_n == 0 {
        return Err(Error::Input("BLEU order must be at least 1".into()));
    }
    if cand.is_empty() {
        return Ok(vec![0.0; max_n]);
    }
    let (c, r) = (cand.len() as f64, reference.len() as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    let mut log_sum = 0.0;
    let mut zero = false;
    let mut out = Vec::with_capacity(max_n);
    for n in 1..=max_n {
        let p = modified_precision(cand, reference, n);
        if p == 0.0 {
            zero = true;
        } else {
            log_sum += p.ln();
        }
        out.push(if zero { 0.0 } else { bp * (log_sum / n as f64).exp() });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(hit: usize, cand_total: usize, ref_total: usize) -> Self {
        let precision = if cand_total == 0 { 0.0 } else { hit as f64 / cand_total as f64 };
        let recall = if ref_total == 0 { 0.0 } else { hit as f64 / ref_total as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self { precision, recall, f1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Rouge {
    pub rouge1: Prf,
    pub rouge2: Prf,
    pub rouge_l: Prf,
}

/// Longest common subsequence length, two-row DP.
pub fn lcs_len<S: AsRef<str>>(a: &[S], b: &[S]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge<S: AsRef<str>>(cand: &[S], reference: &[S]) -> Rouge {
    let n_gram = |n| {
        let (hit, c, r) = clipped_overlap(cand, reference, n);
        Prf::from_counts(hit, c, r)
    };
    Rouge {
        rouge1: n_gram(1),
        rouge2: n_gram(2),
        rouge_l: Prf::from_counts(lcs_len(cand, reference), cand.len(), reference.len()),
    }
}

/// Corpus means of sentence-level scores.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TextMetrics {
    pub bleu: [f64; 4],
    pub rouge1: Prf,
    pub rouge2: Prf,
    pub rouge_l: Prf,
    pub n_samples: usize,
}

impl TextMetrics {
    /// Score each (candidate, reference) text pair and average.
    pub fn compute(pairs: &[(String, String)]) -> Self {
        let mut m = TextMetrics {
            n_samples: pairs.len(),
            ..Default::default()
        };
        if pairs.is_empty() {
            return m;
        }
        let add = |acc: &mut Prf, x: Prf| {
            acc.precision += x.precision;
            acc.recall += x.recall;
            acc.f1 += x.f1;
        };
        for (c, r) in pairs {
            let (c, r) = (metric_tokens(c), metric_tokens(r));
            let b = bleu(&c, &r, 4).expect("order 4");
            for k in 0..4 {
                m.bleu[k] += b[k];
            }
            let ro = rouge(&c, &r);
            add(&mut m.rouge1, ro.rouge1);
            add(&mut m.rouge2, ro.rouge2);
            add(&mut m.rouge_l, ro.rouge_l);
        }
        let n = pairs.len() as f64;
        m.bleu.iter_mut().for_each(|v| *v /= n);
        for p in [&mut m.rouge1, &mut m.rouge2, &mut m.rouge_l] {
            p.precision /= n;
            p.recall /= n;
            p.f1 /= n;
        }
        m
    }
}
