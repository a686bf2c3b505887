//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;

/// All n-grams of `t`, in order.
fn ngrams(t: &[String], n: usize) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    if n == 0 || t.len() < n {
        return out;
    }
    let mut i = 0;
    while i + n <= t.len() {
        out.push(t[i..i + n].to_vec());
        i += 1;
    }
    out
}

fn count(list: &[Vec<String>], g: &[String]) -> usize {
    let mut c = 0;
    for x in list {
        if x.as_slice() == g {
            c += 1;
        }
    }
    c
}

/// (clipped hits, candidate n-grams, reference n-grams).
pub fn naive_overlap(c: &[String], r: &[String], n: usize) -> (usize, usize, usize) {
    let cg = ngrams(c, n);
    let rg = ngrams(r, n);
    let mut seen: Vec<Vec<String>> = Vec::new();
    let mut hits = 0;
    for g in &cg {
        if seen.contains(g) {
            continue;
        }
        seen.push(g.clone());
        hits += count(&cg, g).min(count(&rg, g));
    }
    (hits, cg.len(), rg.len())
}

pub fn naive_bleu(c: &[String], r: &[String], max_n: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for n in 1..=max_n {
        if c.is_empty() {
            out.push(0.0);
            continue;
        }
        let mut prod = 1.0f64;
        for k in 1..=n {
            let (h, tot, _) = naive_overlap(c, r, k);
            let p = if tot == 0 { 0.0 } else { h as f64 / tot as f64 };
            prod *= p;
        }
        let bp = if c.len() > r.len() {
            1.0
        } else {
            (1.0 - r.len() as f64 / c.len() as f64).exp()
        };
        out.push(bp * prod.powf(1.0 / n as f64));
    }
    out
}

/// Full-table LCS.
pub fn naive_lcs(a: &[String], b: &[String]) -> usize {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = if a[i - 1] == b[j - 1] {
                t[i - 1][j - 1] + 1
            } else if t[i - 1][j] >= t[i][j - 1] {
                t[i - 1][j]
            } else {
                t[i][j - 1]
            };
        }
    }
    t[a.len()][b.len()]
}

/// (precision, recall, f1) from raw counts.
pub fn naive_prf(hit: usize, c: usize, r: usize) -> (f64, f64, f64) {
    let p = if c == 0 { 0.0 } else { hit as f64 / c as f64 };
    let rc = if r == 0 { 0.0 } else { hit as f64 / r as f64 };
    let f = if p + rc > 0.0 { 2.0 * p * rc / (p + rc) } else { 0.0 };
    (p, rc, f)
}

pub fn random_tokens(rng: &mut impl Rng, max_len: usize) -> Vec<String> {
    const WORDS: [&str; 6] = ["car", "stop", "the", "left", "slow", "lane"];
    let n = rng.random_range(0..=max_len);
    (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())].to_string()).collect()
}

/// Mean over rows of `logsumexp(row) − row[target]`, plain loops.
pub fn naive_nll(logits: &[f64], vocab: usize, targets: &[usize]) -> f64 {
    let mut total = 0.0;
    for (t, &y) in targets.iter().enumerate() {
        let row = &logits[t * vocab..(t + 1) * vocab];
        let mut m = f64::NEG_INFINITY;
        for &x in row {
            if x > m {
                m = x;
            }
        }
        let mut s = 0.0;
        for &x in row {
            s += (x - m).exp();
        }
        total += m + s.ln() - row[y];
    }
    total / targets.len() as f64
}

pub fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}
