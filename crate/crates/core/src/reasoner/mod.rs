//! Tiny causal language model that writes the annotation text and regresses
//! the behavior target `(α̂, v̂)` from selected hidden states.

mod train;

use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use bwm_tensor::{AttentionBlock, AttentionConfig, Graph, Linear, ParamStore, Tensor, Var};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::{parse_record, AnnotationRecord, Vocab, BEH_SLOTS};
use crate::error::{Error, Result};

pub use train::{
    build_reasoner_samples, evaluate_reasoner, train_reasoner, validation_mae, write_epoch_csv, ReasonerEpoch,
    ReasonerEval, ReasonerReport, ReasonerSample,
};

/// Which hidden states feed the behavior head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorStrategy {
    /// `n` dedicated behavior tokens appended after the text.
    BehTokens(usize),
    /// First `n` positions of the generated text.
    FirstN(usize),
    /// Last `n` positions of the generated text.
    LastN(usize),
}

impl BehaviorStrategy {
    /// The token-position ablation menu, in report row order.
    pub const MENU: [BehaviorStrategy; 8] = [
        BehaviorStrategy::BehTokens(1),
        BehaviorStrategy::BehTokens(5),
        BehaviorStrategy::BehTokens(10),
        BehaviorStrategy::LastN(5),
        BehaviorStrategy::LastN(16),
        BehaviorStrategy::FirstN(8),
        BehaviorStrategy::FirstN(16),
        BehaviorStrategy::FirstN(32),
    ];

    pub fn n(self) -> usize {
        match self {
            Self::BehTokens(n) | Self::FirstN(n) | Self::LastN(n) => n,
        }
    }

    /// Behavior tokens appended after the text span.
    pub fn appended(self) -> usize {
        match self {
            Self::BehTokens(n) => n,
            _ => 0,
        }
    }

    /// Report row label, e.g. `5 BEH`, `First 16`.
    pub fn label(self) -> String {
        match self {
            Self::BehTokens(n) => format!("{n} BEH"),
            Self::FirstN(n) => format!("First {n}"),
            Self::LastN(n) => format!("Last {n}"),
        }
    }
}

impl fmt::Display for BehaviorStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::BehTokens(n) => write!(f, "beh_tokens({n})"),
            Self::FirstN(n) => write!(f, "first_{n}"),
            Self::LastN(n) => write!(f, "last_{n}"),
        }
    }
}

/// Accepts `beh_tokens(5)`, `beh_5`, `first_16`, `last_5`.
impl FromStr for BehaviorStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown behavior strategy '{s}'"));
        let num = |t: &str| t.parse::<usize>().map_err(|_| bad());
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("beh_tokens(").and_then(|r| r.strip_suffix(')')) {
            return Ok(Self::BehTokens(num(rest)?));
        }
        if let Some(rest) = s.strip_prefix("beh_") {
            return Ok(Self::BehTokens(num(rest)?));
        }
        if let Some(rest) = s.strip_prefix("first_") {
            return Ok(Self::FirstN(num(rest)?));
        }
        if let Some(rest) = s.strip_prefix("last_") {
            return Ok(Self::LastN(num(rest)?));
        }
        Err(bad())
    }
}

/// Hidden-state positions for `strategy` within the generated `span`.
///
/// For `BehTokens(n)` the span must end with the `n` appended behavior
/// tokens, so the result is its last `n` positions.
pub fn select_positions(strategy: BehaviorStrategy, span: Range<usize>) -> Result<Vec<usize>> {
    let n = strategy.n();
    let len = span.len();
    if len == 0 {
        return Err(Error::Selection("empty span".into()));
    }
    if n == 0 || n > len {
        return Err(Error::Selection(format!("{strategy} needs {n} positions, span has {len}")));
    }
    Ok(match strategy {
        BehaviorStrategy::FirstN(_) => (span.start..span.start + n).collect(),
        BehaviorStrategy::LastN(_) | BehaviorStrategy::BehTokens(_) => (span.end - n..span.end).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReasonerConfig {
    pub model_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub behavior_strategy: BehaviorStrategy,
    /// Dropout inside the behavior head, training only.
    pub dropout_p: f64,
}

impl Default for ReasonerConfig {
    fn default() -> Self {
        Self {
            model_dim: 32,
            layers: 2,
            heads: 2,
            ff_dim: 64,
            vocab_size: Vocab::builtin().len(),
            max_seq_len: 128,
            behavior_strategy: BehaviorStrategy::FirstN(16),
            dropout_p: 0.5,
        }
    }
}

impl ReasonerConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.heads == 0 || self.model_dim % self.heads != 0 {
            return fail(format!("model_dim {} not divisible by {} heads", self.model_dim, self.heads));
        }
        if self.model_dim < 2 || self.layers == 0 {
            return fail("model_dim ≥ 2 and layers ≥ 1 required".into());
        }
        let n = self.behavior_strategy.n();
        if n == 0 || n > self.max_seq_len {
            return fail(format!("strategy size {n} outside 1..={}", self.max_seq_len));
        }
        if self.behavior_strategy.appended() > BEH_SLOTS {
            return fail(format!("at most {BEH_SLOTS} behavior tokens"));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout_p));
        }
        Ok(())
    }
}

/// Result of greedy decoding.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerateOutput {
    /// Full sequence: prompt, generated text, appended behavior tokens.
    pub tokens: Vec<usize>,
    /// Generated text ids, `[J]` through `[EOS]` when one was emitted.
    pub text: Vec<usize>,
    /// Parsed record, absent when the text is malformed.
    pub record: Option<AnnotationRecord>,
    /// Final-layer hidden states for every position of `tokens`.
    pub hidden: Tensor,
    /// Positions the behavior strategy selects from.
    pub span: Range<usize>,
}

/// The three loss terms as graph nodes.
#[derive(Debug, Clone, Copy)]
pub struct ReasonerLoss {
    pub total: Var,
    pub text: Var,
    pub behavior: Var,
}

#[derive(Debug, Clone)]
pub struct Reasoner {
    pub cfg: ReasonerConfig,
    pub vocab: Vocab,
    pub store: ParamStore,
    blocks: Vec<AttentionBlock>,
    out: Linear,
    head: [Linear; 3],
}

const OUT_INIT: f64 = 0.02;

impl Reasoner {
    pub fn new(cfg: ReasonerConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let vocab = Vocab::builtin();
        if cfg.vocab_size != vocab.len() {
            return Err(Error::Config(format!(
                "vocab_size {} does not match the tokenizer ({})",
                cfg.vocab_size,
                vocab.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = cfg.model_dim;
        store.init_uniform("embed", &[cfg.vocab_size, d], 0.1, &mut rng)?;
        store.init_uniform("pos", &[cfg.max_seq_len, d], 0.1, &mut rng)?;
        for l in 0..cfg.layers {
            AttentionBlock::init(&mut store, &format!("layer{l}"), attn_cfg(&cfg), &mut rng)?;
        }
        store.init_uniform("out.w", &[d, cfg.vocab_size], OUT_INIT, &mut rng)?;
        store.init_zeros("out.b", &[cfg.vocab_size])?;
        Linear::init(&mut store, "head.l1", d, d, &mut rng)?;
        Linear::init(&mut store, "head.l2", d, d / 2, &mut rng)?;
        Linear::init(&mut store, "head.l3", d / 2, 2, &mut rng)?;
        Self::from_store(cfg, store)
    }

    /// Wrap existing parameters; fails if any expected tensor is missing or
    /// misshapen.
    pub fn from_store(cfg: ReasonerConfig, store: ParamStore) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.model_dim;
        let expect = |name: &str, shape: &[usize]| -> Result<()> {
            match store.get(name) {
                Some(t) if t.shape() == shape => Ok(()),
                Some(t) => Err(Error::Config(format!("parameter {name} has shape {:?}, want {shape:?}", t.shape()))),
                None => Err(Error::Config(format!("checkpoint lacks parameter {name}"))),
            }
        };
        expect("embed", &[cfg.vocab_size, d])?;
        expect("pos", &[cfg.max_seq_len, d])?;
        expect("out.w", &[d, cfg.vocab_size])?;
        expect("head.l3.w", &[d / 2, 2])?;
        for l in 0..cfg.layers {
            expect(&format!("layer{l}.wq"), &[d, d])?;
        }
        let blocks = (0..cfg.layers)
            .map(|l| AttentionBlock::named(&format!("layer{l}"), attn_cfg(&cfg)))
            .collect();
        Ok(Self {
            vocab: Vocab::builtin(),
            blocks,
            out: Linear::named("out", d, cfg.vocab_size),
            head: [
                Linear::named("head.l1", d, d),
                Linear::named("head.l2", d, d / 2),
                Linear::named("head.l3", d / 2, 2),
            ],
            store,
            cfg,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut meta = std::collections::BTreeMap::new();
        meta.insert("model".to_string(), serde_json::json!("reasoner"));
        meta.insert("config".to_string(), serde_json::to_value(&self.cfg)?);
        self.store.save(path, &meta).map_err(Error::from)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Config(format!("reasoner checkpoint {} not found", path.display())));
        }
        let (store, meta) = ParamStore::load(path)?;
        if meta.get("model").and_then(|m| m.as_str()) != Some("reasoner") {
            return Err(Error::Config(format!("{} is not a reasoner checkpoint", path.display())));
        }
        let cfg = meta
            .get("config")
            .cloned()
            .ok_or_else(|| Error::Config("checkpoint lacks config".into()))?;
        Self::from_store(serde_json::from_value(cfg)?, store)
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::Input("empty token sequence".into()));
        }
        if tokens.len() > self.cfg.max_seq_len {
            return Err(Error::Length {
                len: tokens.len(),
                max: self.cfg.max_seq_len,
            });
        }
        if let Some(&t) = tokens.iter().find(|&&t| t >= self.cfg.vocab_size) {
            return Err(Error::Input(format!("token id {t} outside vocabulary")));
        }
        Ok(())
    }

    /// Final-layer (normalized) hidden states, `T×D`.
    pub fn hidden_states(&self, g: &mut Graph, tokens: &[usize]) -> Result<Var> {
        self.check_tokens(tokens)?;
        let embed = g.param(&self.store, "embed")?;
        let pos = g.param(&self.store, "pos")?;
        let e = g.gather_rows(embed, tokens)?;
        let p = g.slice_rows(pos, 0, tokens.len())?;
        let mut x = g.add(e, p)?;
        for b in &self.blocks {
            x = b.forward(g, &self.store, x, x, true)?.out;
        }
        Ok(g.layer_norm(x)?)
    }

    pub fn logits(&self, g: &mut Graph, hidden: Var) -> Result<Var> {
        Ok(self.out.forward(g, &self.store, hidden)?)
    }

    /// Causal forward pass: `(logits[T×V], hidden[T×D])`.
    pub fn forward(&self, g: &mut Graph, tokens: &[usize]) -> Result<(Var, Var)> {
        let h = self.hidden_states(g, tokens)?;
        Ok((self.logits(g, h)?, h))
    }

    /// Mean-pool the selected rows of `hidden` and map them to `(α̂, v̂)`
    /// (a `1×2` node). Dropout applies only when `training`.
    pub fn behavior_forward(
        &self,
        g: &mut Graph,
        hidden: Var,
        indices: &[usize],
        training: bool,
        rng: &mut dyn RngCore,
    ) -> Result<Var> {
        if indices.is_empty() {
            return Err(Error::Selection("no positions selected".into()));
        }
        let rows = g.value(hidden).shape()[0];
        if let Some(&i) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::Selection(format!("position {i} outside {rows} hidden rows")));
        }
        let sel = g.gather_rows(hidden, indices)?;
        let mut x = g.mean_rows(sel)?;
        for (k, layer) in self.head.iter().enumerate() {
            x = layer.forward(g, &self.store, x)?;
            if k < 2 {
                x = g.relu(x);
                x = g.dropout(x, self.cfg.dropout_p, rng, training)?;
            }
        }
        Ok(x)
    }

    /// `prompt ++ text ++ [BEH…]` for teacher forcing, plus the behavior span.
    pub fn training_sequence(&self, prompt: &[usize], text: &[usize]) -> (Vec<usize>, Range<usize>) {
        let mut seq = prompt.to_vec();
        seq.extend_from_slice(text);
        let k = self.cfg.behavior_strategy.appended();
        seq.extend((0..k).map(|i| self.vocab.beh_id(i)));
        (seq, prompt.len()..prompt.len() + text.len() + k)
    }

    /// Teacher-forced losses for one example. `text` is the target output
    /// span starting with `[J]`; `target` is `(α, v)`.
    pub fn example_loss(
        &self,
        g: &mut Graph,
        prompt: &[usize],
        text: &[usize],
        target: (f64, f64),
        training: bool,
        rng: &mut dyn RngCore,
    ) -> Result<ReasonerLoss> {
        if text.len() < 2 {
            return Err(Error::Input("target text needs at least two tokens".into()));
        }
        let (seq, span) = self.training_sequence(prompt, text);
        let hidden = self.hidden_states(g, &seq)?;
        // position P+k predicts text[k+1]
        let h_text = g.slice_rows(hidden, prompt.len(), text.len() - 1)?;
        let logits = self.logits(g, h_text)?;
        let idx = select_positions(self.cfg.behavior_strategy, span)?;
        let pred = self.behavior_forward(g, hidden, &idx, training, rng)?;
        loss_total(g, logits, &text[1..], pred, target.0, target.1)
    }

    /// Greedy decoding after `prompt`, starting from a forced `[J]`. Stops at
    /// `[EOS]`, after `max_new` tokens, or at the length limit; behavior
    /// tokens are then appended when the strategy asks for them.
    pub fn generate(&self, prompt: &[usize], max_new: usize) -> Result<GenerateOutput> {
        let k = self.cfg.behavior_strategy.appended();
        let limit = self.cfg.max_seq_len.saturating_sub(k);
        let mut seq = prompt.to_vec();
        seq.push(Vocab::J);
        self.check_tokens(&seq)?;
        if seq.len() > limit {
            return Err(Error::Length { len: seq.len() + k, max: self.cfg.max_seq_len });
        }
        let n_text = self.vocab.text_len();
        let mut produced = 1;
        while produced < max_new && seq.len() < limit {
            let mut g = Graph::new();
            let h = self.hidden_states(&mut g, &seq)?;
            let last = g.slice_rows(h, seq.len() - 1, 1)?;
            let logits = self.logits(&mut g, last)?;
            let row = g.value(logits).data();
            // text tokens only; never BOS
            let next = (1..n_text)
                .max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a)))
                .expect("non-empty vocabulary");
            seq.push(next);
            produced += 1;
            if next == Vocab::EOS {
                break;
            }
        }
        let text = seq[prompt.len()..].to_vec();
        seq.extend((0..k).map(|i| self.vocab.beh_id(i)));
        let mut g = Graph::new();
        let h = self.hidden_states(&mut g, &seq)?;
        let record = self
            .vocab
            .decode_record_json(&text)
            .and_then(|json| parse_record(&json).ok());
        Ok(GenerateOutput {
            span: prompt.len()..seq.len(),
            hidden: g.value(h).clone(),
            tokens: seq,
            text,
            record,
        })
    }

    /// Behavior head applied to a generation result (dropout off).
    pub fn behavior_of(&self, out: &GenerateOutput) -> Result<(f64, f64)> {
        let idx = select_positions(self.cfg.behavior_strategy, out.span.clone())?;
        let mut g = Graph::new();
        let h = g.constant(out.hidden.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = self.behavior_forward(&mut g, h, &idx, false, &mut rng)?;
        let v = g.value(b).data();
        Ok((v[0], v[1]))
    }

    /// Generate, then regress `(α̂, v̂)` from the generated sequence.
    pub fn predict_behavior(&self, prompt: &[usize]) -> Result<((f64, f64), GenerateOutput)> {
        let out = self.generate(prompt, self.cfg.max_seq_len)?;
        Ok((self.behavior_of(&out)?, out))
    }
}

fn attn_cfg(cfg: &ReasonerConfig) -> AttentionConfig {
    AttentionConfig {
        model_dim: cfg.model_dim,
        heads: cfg.heads,
        ff_dim: cfg.ff_dim,
        pre_norm: true,
    }
}

/// `ℓ = ℓ_text + ℓ_behavior` where `ℓ_text` is the mean next-token NLL of
/// `logits` (one row per predicted step) against `targets`, and
/// `ℓ_behavior = (α̂ − α)² + (v̂ − v)²`.
pub fn loss_total(g: &mut Graph, logits: Var, targets: &[usize], pred: Var, alpha: f64, v: f64) -> Result<ReasonerLoss> {
    let text = g.softmax_cross_entropy(logits, targets)?;
    let behavior = behavior_loss(g, pred, alpha, v)?;
    let total = g.add(text, behavior)?;
    Ok(ReasonerLoss { total, text, behavior })
}

/// `MSE(α̂, α) + MSE(v̂, v)` for a `1×2` prediction.
pub fn behavior_loss(g: &mut Graph, pred: Var, alpha: f64, v: f64) -> Result<Var> {
    let a_hat = g.slice_cols(pred, 0, 1)?;
    let v_hat = g.slice_cols(pred, 1, 1)?;
    let a = g.constant(Tensor::row(&[alpha]));
    let vt = g.constant(Tensor::row(&[v]));
    let la = g.mse(a_hat, a)?;
    let lv = g.mse(v_hat, vt)?;
    Ok(g.add(la, lv)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::assemble_prompt;
    use crate::sim::{generate_episode, ScenarioKind};

    fn small(strategy: BehaviorStrategy) -> Reasoner {
        let cfg = ReasonerConfig {
            behavior_strategy: strategy,
            ..Default::default()
        };
        Reasoner::new(cfg, 5).unwrap()
    }

    #[test]
    fn strategy_parsing_and_labels() {
        for s in BehaviorStrategy::MENU {
            assert_eq!(s.to_string().parse::<BehaviorStrategy>().unwrap(), s);
        }
        assert_eq!("beh_5".parse::<BehaviorStrategy>().unwrap(), BehaviorStrategy::BehTokens(5));
        assert!("middle_3".parse::<BehaviorStrategy>().is_err());
        assert_eq!(BehaviorStrategy::FirstN(16).label(), "First 16");
        assert_eq!(BehaviorStrategy::BehTokens(1).label(), "1 BEH");
    }

    #[test]
    fn selection_examples() {
        assert_eq!(select_positions(BehaviorStrategy::FirstN(16), 0..40).unwrap(), (0..16).collect::<Vec<_>>());
        assert_eq!(select_positions(BehaviorStrategy::LastN(5), 0..40).unwrap(), (35..40).collect::<Vec<_>>());
        assert!(matches!(select_positions(BehaviorStrategy::FirstN(41), 0..40), Err(Error::Selection(_))));
        assert!(matches!(select_positions(BehaviorStrategy::LastN(1), 3..3), Err(Error::Selection(_))));
    }

    #[test]
    fn config_validation() {
        let mut c = ReasonerConfig::default();
        c.heads = 3;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = ReasonerConfig {
            behavior_strategy: BehaviorStrategy::BehTokens(BEH_SLOTS + 1),
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn overflow_is_length_error() {
        let r = small(BehaviorStrategy::FirstN(4));
        let mut g = Graph::new();
        let long = vec![Vocab::BOS; 129];
        assert!(matches!(r.forward(&mut g, &long), Err(Error::Length { len: 129, max: 128 })));
    }

    #[test]
    fn generation_appends_behavior_tokens_last() {
        let r = small(BehaviorStrategy::BehTokens(5));
        let ep = generate_episode(1, ScenarioKind::Stop);
        let prompt = assemble_prompt(&ep).ids(&r.vocab);
        let out = r.generate(&prompt, 20).unwrap();
        assert_eq!(out.text[0], Vocab::J);
        assert!(out.text.iter().all(|&t| !r.vocab.is_beh(t)));
        let tail = &out.tokens[out.tokens.len() - 5..];
        assert!(tail.iter().all(|&t| r.vocab.is_beh(t)));
        let idx = select_positions(r.cfg.behavior_strategy, out.span.clone()).unwrap();
        assert!(idx.iter().all(|&i| r.vocab.is_beh(out.tokens[i])));
        assert_eq!(out, r.generate(&prompt, 20).unwrap());
        let (b, _) = r.predict_behavior(&prompt).unwrap();
        assert!(b.0.is_finite() && b.1.is_finite());
    }

    #[test]
    fn checkpoint_round_trip() {
        let r = small(BehaviorStrategy::LastN(5));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        r.save(&p).unwrap();
        let back = Reasoner::load(&p).unwrap();
        assert_eq!(back.cfg, r.cfg);
        let mut g1 = Graph::new();
        let mut g2 = Graph::new();
        let toks = [0, 7, 9, 30];
        let (l1, _) = r.forward(&mut g1, &toks).unwrap();
        let (l2, _) = back.forward(&mut g2, &toks).unwrap();
        assert_eq!(g1.value(l1).data(), g2.value(l2).data());
        assert!(matches!(Reasoner::load(&dir.path().join("missing.json")), Err(Error::Config(_))));
    }
}
