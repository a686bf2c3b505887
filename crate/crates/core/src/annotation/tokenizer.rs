//! Word-level tokenizer over the closed grammar vocabulary.

use std::collections::{BTreeSet, HashMap};

use super::{prompt::QUANT_LEVELS, AnnotationRecord, Grammar, Lateral, Longitudinal};

/// Reserved behavior-token ids, placed above every text token.
pub const BEH_SLOTS: usize = 16;
const PUNCT: &[char] = &['.', ',', ';', ':', '!', '?'];

/// Split on whitespace and peel punctuation into separate tokens.
pub fn split_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for piece in text.split_whitespace() {
        let mut core = piece;
        let mut trailing = Vec::new();
        while let Some(c) = core.chars().last().filter(|c| PUNCT.contains(c)) {
            trailing.push(c.to_string());
            core = &core[..core.len() - c.len_utf8()];
        }
        let mut leading = Vec::new();
        while let Some(c) = core.chars().next().filter(|c| PUNCT.contains(c)) {
            leading.push(c.to_string());
            core = &core[c.len_utf8()..];
        }
        out.extend(leading);
        if !core.is_empty() {
            out.push(core.to_string());
        }
        out.extend(trailing.into_iter().rev());
    }
    out
}

/// Inverse of [`split_words`] for normally spaced text.
pub fn detokenize<S: AsRef<str>>(words: &[S]) -> String {
    let mut s = String::new();
    for w in words {
        let w = w.as_ref();
        let is_punct = w.len() == 1 && w.chars().all(|c| PUNCT.contains(&c));
        if !s.is_empty() && !is_punct {
            s.push(' ');
        }
        s.push_str(w);
    }
    s
}

#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    n_text: usize,
}

impl Vocab {
    pub const BOS: usize = 0;
    pub const EOS: usize = 1;
    /// Marks the start of the justification; also the forced first output token.
    pub const J: usize = 2;
    pub const A: usize = 3;
    pub const T: usize = 4;
    pub const UNK: usize = 5;

    pub fn build(grammar: &Grammar) -> Self {
        let mut tokens: Vec<String> = ["[BOS]", "[EOS]", "[J]", "[A]", "[T]", "[UNK]"].map(String::from).to_vec();
        tokens.extend((0..QUANT_LEVELS).map(|i| format!("<q{i}>")));
        tokens.extend(["NAV_LEFT", "NAV_RIGHT", "NAV_STRAIGHT"].map(String::from));
        tokens.extend((0..5).map(|i| format!("SPD_{i}")));
        tokens.extend(Lateral::ALL.map(|l| format!("<{}>", l.surface())));
        tokens.extend(Longitudinal::ALL.map(|l| format!("<{}>", l.surface())));
        let taken: BTreeSet<String> = tokens.iter().cloned().collect();
        tokens.extend(grammar.words().into_iter().filter(|w| !taken.contains(w)));
        let n_text = tokens.len();
        tokens.extend((0..BEH_SLOTS).map(|i| format!("[BEH{i}]")));
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index, n_text }
    }

    pub fn builtin() -> Self {
        Self::build(Grammar::builtin())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Number of non-behavior tokens.
    pub fn text_len(&self) -> usize {
        self.n_text
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(Self::UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map(String::as_str).unwrap_or("[UNK]")
    }

    pub fn beh_id(&self, i: usize) -> usize {
        assert!(i < BEH_SLOTS, "behavior slot {i} out of range");
        self.n_text + i
    }

    pub fn is_beh(&self, id: usize) -> bool {
        id >= self.n_text && id < self.tokens.len()
    }

    pub fn encode_words(&self, text: &str) -> Vec<usize> {
        split_words(text).iter().map(|w| self.id(w)).collect()
    }

    /// `[J] justification [A] action [T] <lateral> <longitudinal> [EOS]`.
    pub fn encode_record(&self, r: &AnnotationRecord) -> Vec<usize> {
        let mut ids = vec![Self::J];
        ids.extend(self.encode_words(&r.justification));
        ids.push(Self::A);
        ids.extend(self.encode_words(&r.action));
        ids.push(Self::T);
        ids.push(self.id(&format!("<{}>", r.lateral.surface())));
        ids.push(self.id(&format!("<{}>", r.longitudinal.surface())));
        ids.push(Self::EOS);
        ids
    }

    /// Rebuild the JSON record text from generated ids. `None` when the
    /// marker structure is broken; enum validity is left to the parser.
    pub fn decode_record_json(&self, ids: &[usize]) -> Option<String> {
        let end = ids.iter().position(|&t| t == Self::EOS).unwrap_or(ids.len());
        let ids = &ids[..end];
        let j = ids.iter().position(|&t| t == Self::J)?;
        let a = ids.iter().position(|&t| t == Self::A)?;
        let t = ids.iter().position(|&t| t == Self::T)?;
        if !(j < a && a < t) {
            return None;
        }
        let words = |s: &[usize]| detokenize(&s.iter().map(|&i| self.token(i)).collect::<Vec<_>>());
        let strip = |s: &str| s.trim_start_matches('<').trim_end_matches('>').to_string();
        let tail: Vec<String> = ids[t + 1..].iter().map(|&i| strip(self.token(i))).collect();
        let token = tail.join("|");
        // canonical field order, same as `serialize`
        let q = |s: &str| serde_json::Value::from(s).to_string();
        Some(format!(
            "{{\"justification\":{},\"action\":{},\"action_token\":{}}}",
            q(&words(&ids[j + 1..a])),
            q(&words(&ids[a + 1..t])),
            q(&token)
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::parse_record;

    #[test]
    fn split_and_join() {
        let w = split_words("stop, then wait.  ok");
        assert_eq!(w, ["stop", ",", "then", "wait", ".", "ok"]);
        assert_eq!(detokenize(&w), "stop, then wait. ok");
        assert!(split_words("   ").is_empty());
    }

    #[test]
    fn vocab_layout() {
        let v = Vocab::builtin();
        assert_eq!(v.token(Vocab::BOS), "[BOS]");
        assert!(v.is_beh(v.beh_id(0)) && v.is_beh(v.beh_id(BEH_SLOTS - 1)));
        assert!(!v.is_beh(v.text_len() - 1));
        assert_eq!(v.len(), v.text_len() + BEH_SLOTS);
        assert_eq!(v.id("no-such-word"), Vocab::UNK);
        assert!(v.len() < 400);
    }

    #[test]
    fn record_encoding_round_trips() {
        let v = Vocab::builtin();
        let r = AnnotationRecord {
            justification: "the road ahead is clear, so the ego vehicle can keep driving safely.".into(),
            action: "follow the current lane while reducing speed.".into(),
            lateral: Lateral::FollowLane,
            longitudinal: Longitudinal::SlowDown,
        };
        let ids = v.encode_record(&r);
        assert!(!ids.contains(&Vocab::UNK));
        let json = v.decode_record_json(&ids).unwrap();
        assert_eq!(parse_record(&json).unwrap(), r);
        assert!(v.decode_record_json(&[Vocab::A, Vocab::J, Vocab::T]).is_none());
    }
}
