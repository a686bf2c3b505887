//! Annotation records: generation, serialization, validation and tokenization.
//!
//! ```text
//! cargo run --example annotations
//! ```

use bwm::annotation::{assemble_prompt, parse_record, serialize, Vocab};
use bwm::sim::{generate_episode, ScenarioKind};

fn main() {
    let ep = generate_episode(5, ScenarioKind::YieldVru);
    let text = serialize(&ep.annotation);
    println!("{text}");
    assert_eq!(parse_record(&text).unwrap(), ep.annotation);

    for bad in [
        r#"{"justification":"ok","action":"ok","action_token":"Straight|Hover"}"#,
        r#"{"justification":"ok","action":"ok"}"#,
        r#"{"justification":"ok","#,
    ] {
        println!("{}", parse_record(bad).unwrap_err());
    }

    let vocab = Vocab::builtin();
    let prompt = assemble_prompt(&ep);
    let ids = vocab.encode_record(&ep.annotation);
    println!("\nvocabulary: {} tokens", vocab.len());
    println!("prompt ({} tokens): {}", prompt.len(), prompt.tokens.join(" "));
    println!(
        "target ({} tokens): {}",
        ids.len(),
        ids.iter().map(|&i| vocab.token(i)).collect::<Vec<_>>().join(" ")
    );
    let back = vocab.decode_record_json(&ids).expect("well formed");
    println!("decoded: {back}");
}
