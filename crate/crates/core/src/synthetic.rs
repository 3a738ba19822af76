//! Seeded generators for small separable corpora in the raw file formats.
//!
//! The trigger-annotated generator plants one cue word per relation; most
//! records annotate it as the trigger, the rest use labels whose cue phrase is
//! never annotated. The trigger-free generator does the same for a different
//! label set without any annotation.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

const NAMES: [&str; 6] = ["Ross", "Monica", "Joey", "Rachel", "Chandler", "Phoebe"];

const FILLER: [&str; 8] = [
    "Did you see the game last night?",
    "I need more coffee.",
    "The train was late again.",
    "Can you pass the salt?",
    "It is raining outside.",
    "Let me check my phone.",
    "That movie was long.",
    "We should order lunch.",
];

/// (label, trigger word, sentence containing the trigger).
const EXPLICIT: [(&str, &str, &str); 5] = [
    ("per:boss", "boss", "You are my boss, so I will finish it."),
    (
        "per:roommate",
        "roommate",
        "My roommate left the door open.",
    ),
    (
        "per:siblings",
        "sister",
        "You are my sister and I trust you.",
    ),
    ("per:girl/boyfriend", "engaged", "We are engaged now!"),
    ("per:neighbor", "neighbor", "Hi neighbor, your dog is loud."),
];

/// (label, unannotated cue sentence).
const IMPLICIT: [(&str, &str); 2] = [
    ("per:friends", "Want to grab pizza with the gang tonight?"),
    ("unanswerable", "Who left this umbrella here?"),
];

/// (1-based label id in the target ontology, cue sentence).
const TARGET: [(usize, &str); 4] = [
    (3, "Mom says you took my old bike again."),
    (5, "I love you and I missed you all week."),
    (7, "Thanks for helping me move, buddy."),
    (12, "I will beat you in court next month."),
];

fn dialogue(rng: &mut ChaCha8Rng, a: &str, b: &str, cue: &str) -> Vec<String> {
    let len = rng.random_range(3..=5);
    let cue_at = rng.random_range(0..len);
    (0..len)
        .map(|i| {
            let speaker = if i % 2 == 0 { a } else { b };
            let text = if i == cue_at {
                cue
            } else {
                FILLER.choose(rng).copied().unwrap_or(FILLER[0])
            };
            format!("{speaker}: {text}")
        })
        .collect()
}

fn pair(rng: &mut ChaCha8Rng) -> (&'static str, &'static str) {
    let picked: Vec<&str> = NAMES.choose_multiple(rng, 2).copied().collect();
    (picked[0], picked[1])
}

/// `n` records of `[turns, entries]`; roughly 70% carry an annotated trigger.
pub fn trigger_annotated(n: usize, seed: u64) -> Value {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let explicit = (n * 7).div_ceil(10);
    let records: Vec<Value> = (0..n)
        .map(|i| {
            let (a, b) = pair(&mut rng);
            if i < explicit {
                let (label, trigger, sentence) = EXPLICIT[i % EXPLICIT.len()];
                let turns = dialogue(&mut rng, a, b, sentence);
                json!([turns, [{"x": a, "y": b, "r": [label], "t": [trigger]}]])
            } else {
                let (label, sentence) = IMPLICIT[i % IMPLICIT.len()];
                let turns = dialogue(&mut rng, a, b, sentence);
                json!([turns, [{"x": a, "y": b, "r": [label], "t": [""]}]])
            }
        })
        .collect();
    Value::Array(records)
}

/// `n` JSON-lines records with numeric labels and speakers `A`/`B`; each
/// pair spans two consecutive sessions.
pub fn trigger_free(n: usize, seed: u64) -> Vec<Value> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let (label, sentence) = TARGET[(i / 2) % TARGET.len()];
            let turns = dialogue(&mut rng, "A", "B", sentence);
            json!({
                "pair-id": format!("p{}", i / 2),
                "session-id": i % 2 + 1,
                "context": turns,
                "label": label,
            })
        })
        .collect()
}

/// Renders trigger-free records as JSON lines.
pub fn to_json_lines(records: &[Value]) -> String {
    records.iter().map(|r| format!("{r}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(trigger_annotated(12, 3), trigger_annotated(12, 3));
        assert_ne!(trigger_annotated(12, 3), trigger_annotated(12, 4));
        assert_eq!(trigger_free(8, 1), trigger_free(8, 1));
    }

    #[test]
    fn explicit_share_is_about_seventy_percent() {
        let v = trigger_annotated(32, 0);
        let explicit = v
            .as_array()
            .unwrap()
            .iter()
            .filter(|r| r[1][0]["t"][0].as_str() != Some(""))
            .count();
        assert_eq!(explicit, 23);
    }
}
