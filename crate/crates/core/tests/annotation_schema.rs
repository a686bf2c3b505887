use bwm::annotation::*;
use bwm::sim::{generate_episode, ScenarioKind};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn all_tokens() -> Vec<String> {
    Lateral::ALL
        .iter()
        .flat_map(|&l| Longitudinal::ALL.iter().map(move |&g| action_token(l, g)))
        .collect()
}

#[test]
fn all_24_action_tokens_validate() {
    let tokens = all_tokens();
    assert_eq!(tokens.len(), 24);
    let unique: std::collections::BTreeSet<_> = tokens.iter().collect();
    assert_eq!(unique.len(), 24);
    for t in &tokens {
        let (l, g) = parse_action_token(t).unwrap();
        assert_eq!(&action_token(l, g), t);
    }
}

#[test]
fn near_miss_tokens_are_rejected() {
    for bad in [
        "Straight",
        "Straight|stop",
        "straight|Stop",
        "Straight |Stop",
        "Straight|Stop|Stop",
        "Stop|Straight",
        "Reverse|Stop",
        "Left Turn|Brake",
        "",
        "|",
    ] {
        let e = parse_action_token(bad).unwrap_err();
        assert_eq!(e.code(), "E_ENUM", "{bad}");
    }
}

proptest! {
    #[test]
    fn arbitrary_strings_outside_the_set_are_rejected(s in "[A-Za-z |]{0,24}") {
        let valid = all_tokens().contains(&s);
        prop_assert_eq!(parse_action_token(&s).is_ok(), valid);
    }
}

#[test]
fn error_codes_by_failure_kind() {
    let code = |t: &str| parse_record(t).unwrap_err().code();
    assert_eq!(code("{not json"), "E_PARSE");
    assert_eq!(code("[1, 2]"), "E_SCHEMA");
    assert_eq!(code(r#"{"justification":"a","action":"b"}"#), "E_SCHEMA");
    assert_eq!(code(r#"{"justification":"a","action":"b","action_token":"Straight|Stop","x":1}"#), "E_SCHEMA");
    assert_eq!(code(r#"{"justification":"","action":"b","action_token":"Straight|Stop"}"#), "E_SCHEMA");
    assert_eq!(code(r#"{"justification":"a","action":3,"action_token":"Straight|Stop"}"#), "E_SCHEMA");
    assert_eq!(code(r#"{"justification":"a","action":"b","action_token":"Straight|Halt"}"#), "E_ENUM");
}

fn random_text(rng: &mut ChaCha8Rng) -> String {
    const CHARS: &[char] = &['a', 'z', ' ', ',', '.', '"', '\\', 'é', '\n', '|', '{', '}'];
    let n = rng.random_range(1..30);
    let mut s: String = (0..n).map(|_| CHARS[rng.random_range(0..CHARS.len())]).collect();
    if s.trim().is_empty() {
        s.push('x');
    }
    s
}

#[test]
fn ten_thousand_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..10_000 {
        let r = AnnotationRecord {
            justification: random_text(&mut rng),
            action: random_text(&mut rng),
            lateral: Lateral::ALL[rng.random_range(0..6)],
            longitudinal: Longitudinal::ALL[rng.random_range(0..4)],
        };
        let text = serialize(&r);
        let back = parse_record(&text).unwrap();
        assert_eq!(back, r);
        assert_eq!(serialize(&back), text);
    }
}

#[test]
fn canonical_field_order() {
    let r = AnnotationRecord {
        justification: "j".into(),
        action: "a".into(),
        lateral: Lateral::FollowLane,
        longitudinal: Longitudinal::Maintain,
    };
    assert_eq!(serialize(&r), r#"{"justification":"j","action":"a","action_token":"Follow Lane|Maintain"}"#);
}

#[test]
fn generated_annotations_are_valid_and_tokenizable() {
    let v = Vocab::builtin();
    for seed in 0..50 {
        for kind in ScenarioKind::ALL {
            let ep = generate_episode(seed, kind);
            let text = serialize(&ep.annotation);
            assert_eq!(parse_record(&text).unwrap(), ep.annotation);
            let ids = v.encode_record(&ep.annotation);
            assert!(!ids.contains(&Vocab::UNK), "{text}");
            let json = v.decode_record_json(&ids).unwrap();
            assert_eq!(json, text);
            assert_eq!(parse_record(&json).unwrap(), ep.annotation);
        }
    }
}

#[test]
fn template_generation_is_seeded() {
    let ep = generate_episode(5, ScenarioKind::YieldVru);
    let a = template_generate(&ep, &mut ChaCha8Rng::seed_from_u64(1));
    let b = template_generate(&ep, &mut ChaCha8Rng::seed_from_u64(1));
    assert_eq!(a, b);
    assert_eq!(a.longitudinal, ep.annotation.longitudinal);
}
