//! Text normalization: contraction expansion and lemmatization.
//!
//! Lemmatization is lexicon-backed: a word is only rewritten when a suffix
//! rule or the irregular table lands on a known base form. Every output word
//! is therefore either a lexicon entry (which maps to itself) or an untouched
//! input, which makes [`normalize_text`] idempotent.

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

use super::edit::{EditBuilder, EditedText};

/// Normalizes `raw`, discarding the alignment.
pub fn normalize_text(raw: &str) -> String {
    normalize_with_alignment(raw).into_text()
}

/// Normalizes `raw` and records how source characters map onto the output.
pub fn normalize_with_alignment(raw: &str) -> EditedText {
    let mut builder = EditBuilder::default();
    let chars: Vec<char> = raw.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_alphabetic() {
            let start = i;
            while i < chars.len() {
                let inner_apostrophe = is_apostrophe(chars[i])
                    && i > start
                    && i + 1 < chars.len()
                    && chars[i + 1].is_alphabetic();
                if chars[i].is_alphabetic() || inner_apostrophe {
                    i += 1;
                } else {
                    break;
                }
            }
            let word: String = chars[start..i].iter().collect();
            let normalized = normalize_word(&word);
            builder.replace(&word, &normalized);
        } else {
            let start = i;
            while i < chars.len() && !chars[i].is_alphabetic() {
                i += 1;
            }
            let run: String = chars[start..i].iter().collect();
            builder.keep(&run);
        }
    }
    builder.finish()
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Expands and lemmatizes one word, keeping the original when nothing applies.
fn normalize_word(word: &str) -> String {
    let lower: String = word
        .chars()
        .map(|c| if is_apostrophe(c) { '\'' } else { c })
        .collect::<String>()
        .to_lowercase();

    let rewritten = if let Some(expansion) = expand_contraction(&lower) {
        expansion
            .split(' ')
            .map(lemmatize)
            .collect::<Vec<_>>()
            .join(" ")
    } else if let Some(stem) = lower.strip_suffix("'s") {
        format!("{}'s", lemmatize(stem))
    } else {
        lemmatize(&lower).to_string()
    };

    if rewritten == lower {
        return word.to_string();
    }
    apply_case(word, &rewritten)
}

fn apply_case(original: &str, rewritten: &str) -> String {
    let letters: Vec<char> = original.chars().filter(|c| c.is_alphabetic()).collect();
    let all_upper = letters.len() > 1 && letters.iter().all(|c| c.is_uppercase());
    if all_upper {
        return rewritten.to_uppercase();
    }
    if letters.first().is_some_and(|c| c.is_uppercase()) {
        let mut out = String::with_capacity(rewritten.len());
        let mut chars = rewritten.chars();
        if let Some(first) = chars.next() {
            out.extend(first.to_uppercase());
        }
        out.extend(chars);
        return out;
    }
    rewritten.to_string()
}

fn expand_contraction(lower: &str) -> Option<String> {
    if let Some(full) = contraction_table().get(lower) {
        return Some((*full).to_string());
    }
    const SUFFIXES: [(&str, &str); 6] = [
        ("n't", "not"),
        ("'re", "are"),
        ("'ve", "have"),
        ("'ll", "will"),
        ("'d", "would"),
        ("'m", "am"),
    ];
    SUFFIXES.iter().find_map(|(suffix, expansion)| {
        lower
            .strip_suffix(suffix)
            .filter(|stem| !stem.is_empty())
            .map(|stem| {
                // "shouldn't've": the stem may itself be a contraction
                let stem = expand_contraction(stem).unwrap_or_else(|| stem.to_string());
                format!("{stem} {expansion}")
            })
    })
}

fn contraction_table() -> &'static HashMap<&'static str, &'static str> {
    static TABLE: OnceLock<HashMap<&'static str, &'static str>> = OnceLock::new();
    TABLE.get_or_init(|| {
        [
            ("can't", "can not"),
            ("cannot", "can not"),
            ("won't", "will not"),
            ("shan't", "shall not"),
            ("ain't", "is not"),
            ("let's", "let us"),
            ("it's", "it is"),
            ("he's", "he is"),
            ("she's", "she is"),
            ("that's", "that is"),
            ("what's", "what is"),
            ("there's", "there is"),
            ("here's", "here is"),
            ("who's", "who is"),
            ("where's", "where is"),
            ("how's", "how is"),
            ("y'all", "you all"),
            ("gonna", "going to"),
            ("wanna", "want to"),
            ("gotta", "got to"),
        ]
        .into_iter()
        .collect()
    })
}

/// Maps an inflected lowercase word to its base form, or returns it unchanged.
pub fn lemmatize(lower: &str) -> &str {
    let lexicon = lexicon();
    if let Some(hit) = lexicon.get(lower) {
        return hit;
    }
    if let Some(base) = irregular_table().get(lower) {
        return base;
    }
    suffix_candidates(lower)
        .into_iter()
        .find_map(|c| lexicon.get(c.as_str()).copied())
        .unwrap_or(lower)
}

fn suffix_candidates(w: &str) -> Vec<String> {
    let mut out = Vec::new();
    let n = w.len();
    if !w.is_ascii() || n < 3 {
        return out;
    }
    let b = w.as_bytes();
    let doubled = |stem_len: usize| stem_len >= 2 && b[stem_len - 1] == b[stem_len - 2];
    if let Some(stem) = w.strip_suffix("ies") {
        out.push(format!("{stem}y"));
    }
    if let Some(stem) = w.strip_suffix("ied") {
        out.push(format!("{stem}y"));
    }
    if let Some(stem) = w.strip_suffix("es") {
        out.push(stem.to_string());
    }
    if w.ends_with('s') && !w.ends_with("ss") {
        out.push(w[..n - 1].to_string());
    }
    if let Some(stem) = w.strip_suffix("ed") {
        out.push(format!("{stem}e"));
        out.push(stem.to_string());
        if doubled(stem.len()) {
            out.push(stem[..stem.len() - 1].to_string());
        }
    }
    if let Some(stem) = w.strip_suffix("ing") {
        out.push(stem.to_string());
        out.push(format!("{stem}e"));
        if doubled(stem.len()) {
            out.push(stem[..stem.len() - 1].to_string());
        }
    }
    out
}

fn lexicon() -> &'static HashSet<&'static str> {
    static LEXICON: OnceLock<HashSet<&'static str>> = OnceLock::new();
    LEXICON.get_or_init(|| BASE_FORMS.iter().copied().collect())
}

fn irregular_table() -> &'static HashMap<&'static str, &'static str> {
    static TABLE: OnceLock<HashMap<&'static str, &'static str>> = OnceLock::new();
    TABLE.get_or_init(|| IRREGULAR.iter().copied().collect())
}

// Base forms the lemmatizer may produce. Auxiliaries and function words are
// deliberately absent so that "is", "was", "this" etc. pass through.
const BASE_FORMS: &[&str] = &[
    // verbs
    "accept",
    "act",
    "add",
    "admit",
    "agree",
    "allow",
    "annoy",
    "answer",
    "appear",
    "apply",
    "argue",
    "arrange",
    "arrive",
    "ask",
    "attack",
    "avoid",
    "bake",
    "ban",
    "beat",
    "become",
    "beg",
    "begin",
    "believe",
    "belong",
    "bet",
    "blame",
    "borrow",
    "bother",
    "break",
    "bring",
    "build",
    "burn",
    "buy",
    "call",
    "care",
    "carry",
    "catch",
    "cause",
    "celebrate",
    "change",
    "chase",
    "cheat",
    "check",
    "cheer",
    "choose",
    "clean",
    "close",
    "collect",
    "come",
    "complain",
    "cook",
    "cost",
    "cough",
    "count",
    "cover",
    "crash",
    "cry",
    "cut",
    "dance",
    "date",
    "decide",
    "deliver",
    "deserve",
    "destroy",
    "die",
    "divorce",
    "do",
    "drink",
    "drive",
    "drop",
    "dress",
    "earn",
    "eat",
    "embarrass",
    "employ",
    "end",
    "engage",
    "enjoy",
    "enter",
    "excite",
    "expect",
    "explain",
    "fail",
    "fall",
    "feel",
    "fight",
    "fill",
    "find",
    "finish",
    "fire",
    "fix",
    "fly",
    "follow",
    "forget",
    "forgive",
    "freak",
    "get",
    "give",
    "go",
    "graduate",
    "grow",
    "guess",
    "hand",
    "hang",
    "happen",
    "hate",
    "have",
    "hear",
    "help",
    "hide",
    "hire",
    "hit",
    "hold",
    "hope",
    "hug",
    "hurry",
    "hurt",
    "ignore",
    "imagine",
    "introduce",
    "invite",
    "join",
    "joke",
    "jump",
    "keep",
    "kick",
    "kid",
    "kill",
    "kiss",
    "know",
    "laugh",
    "lead",
    "learn",
    "leave",
    "lend",
    "lie",
    "like",
    "listen",
    "live",
    "look",
    "lose",
    "love",
    "make",
    "manage",
    "marry",
    "mean",
    "meet",
    "mention",
    "mind",
    "miss",
    "move",
    "need",
    "notice",
    "offer",
    "open",
    "order",
    "own",
    "pack",
    "paint",
    "pass",
    "pay",
    "pick",
    "plan",
    "play",
    "pray",
    "prefer",
    "prepare",
    "pretend",
    "promise",
    "propose",
    "protect",
    "prove",
    "pull",
    "push",
    "put",
    "quit",
    "reach",
    "read",
    "realize",
    "receive",
    "remember",
    "rent",
    "repeat",
    "represent",
    "rest",
    "return",
    "ride",
    "ring",
    "run",
    "save",
    "say",
    "scare",
    "scream",
    "see",
    "sell",
    "send",
    "serve",
    "share",
    "shop",
    "shout",
    "show",
    "sign",
    "sing",
    "sit",
    "sleep",
    "smell",
    "smile",
    "solve",
    "sound",
    "speak",
    "spend",
    "stand",
    "start",
    "stay",
    "steal",
    "stop",
    "study",
    "subpoena",
    "suck",
    "suggest",
    "support",
    "suppose",
    "surprise",
    "swear",
    "take",
    "talk",
    "taste",
    "teach",
    "tell",
    "testify",
    "thank",
    "think",
    "throw",
    "touch",
    "train",
    "travel",
    "treat",
    "trust",
    "try",
    "turn",
    "understand",
    "use",
    "visit",
    "wait",
    "wake",
    "walk",
    "want",
    "warn",
    "wash",
    "watch",
    "wear",
    "wed",
    "win",
    "wish",
    "wonder",
    "work",
    "worry",
    "write",
    "yell",
    // nouns
    "apartment",
    "aunt",
    "baby",
    "boss",
    "boyfriend",
    "brother",
    "cat",
    "child",
    "client",
    "colleague",
    "couple",
    "cousin",
    "customer",
    "dad",
    "daughter",
    "doctor",
    "dog",
    "enemy",
    "father",
    "fiance",
    "friend",
    "girlfriend",
    "grandma",
    "grandpa",
    "guy",
    "husband",
    "kiss",
    "lawyer",
    "lover",
    "man",
    "manager",
    "mom",
    "mother",
    "neighbor",
    "nephew",
    "niece",
    "nurse",
    "office",
    "parent",
    "partner",
    "patient",
    "roommate",
    "school",
    "sister",
    "son",
    "student",
    "teacher",
    "uncle",
    "wedding",
    "wife",
    "woman",
    "foot",
    "tooth",
    "mouse",
    "knife",
    "life",
];

const IRREGULAR: &[(&str, &str)] = &[
    ("ate", "eat"),
    ("eaten", "eat"),
    ("became", "become"),
    ("began", "begin"),
    ("begun", "begin"),
    ("bought", "buy"),
    ("broke", "break"),
    ("broken", "break"),
    ("brought", "bring"),
    ("built", "build"),
    ("came", "come"),
    ("caught", "catch"),
    ("chose", "choose"),
    ("chosen", "choose"),
    ("did", "do"),
    ("does", "do"),
    ("done", "do"),
    ("drank", "drink"),
    ("drove", "drive"),
    ("driven", "drive"),
    ("fell", "fall"),
    ("fallen", "fall"),
    ("felt", "feel"),
    ("fought", "fight"),
    ("found", "find"),
    ("flew", "fly"),
    ("flown", "fly"),
    ("forgot", "forget"),
    ("forgotten", "forget"),
    ("forgave", "forgive"),
    ("forgiven", "forgive"),
    ("gave", "give"),
    ("given", "give"),
    ("went", "go"),
    ("gone", "go"),
    ("got", "get"),
    ("gotten", "get"),
    ("grew", "grow"),
    ("grown", "grow"),
    ("had", "have"),
    ("has", "have"),
    ("heard", "hear"),
    ("held", "hold"),
    ("hid", "hide"),
    ("hidden", "hide"),
    ("hung", "hang"),
    ("kept", "keep"),
    ("knew", "know"),
    ("known", "know"),
    ("led", "lead"),
    ("left", "leave"),
    ("lent", "lend"),
    ("lost", "lose"),
    ("made", "make"),
    ("meant", "mean"),
    ("met", "meet"),
    ("paid", "pay"),
    ("ran", "run"),
    ("rang", "ring"),
    ("rung", "ring"),
    ("rode", "ride"),
    ("ridden", "ride"),
    ("said", "say"),
    ("saw", "see"),
    ("seen", "see"),
    ("sold", "sell"),
    ("sent", "send"),
    ("sang", "sing"),
    ("sung", "sing"),
    ("sat", "sit"),
    ("slept", "sleep"),
    ("spoke", "speak"),
    ("spoken", "speak"),
    ("spent", "spend"),
    ("stood", "stand"),
    ("stole", "steal"),
    ("stolen", "steal"),
    ("swore", "swear"),
    ("sworn", "swear"),
    ("took", "take"),
    ("taken", "take"),
    ("taught", "teach"),
    ("told", "tell"),
    ("thought", "think"),
    ("threw", "throw"),
    ("thrown", "throw"),
    ("understood", "understand"),
    ("woke", "wake"),
    ("woken", "wake"),
    ("wore", "wear"),
    ("worn", "wear"),
    ("won", "win"),
    ("wrote", "write"),
    ("written", "write"),
    ("children", "child"),
    ("men", "man"),
    ("women", "woman"),
    ("feet", "foot"),
    ("teeth", "tooth"),
    ("mice", "mouse"),
    ("wives", "wife"),
    ("knives", "knife"),
];

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Hand-built contraction lexicon, independent of the implementation table.
    const CONTRACTION_ORACLE: &[(&str, &str)] = &[
        ("don't", "do not"),
        ("doesn't", "do not"),
        ("didn't", "do not"),
        ("can't", "can not"),
        ("won't", "will not"),
        ("I'm", "I am"),
        ("you're", "you are"),
        ("we've", "we have"),
        ("they'll", "they will"),
        ("she'd", "she would"),
        ("it's", "it is"),
        ("Don't", "Do not"),
        ("isn't", "is not"),
        ("shouldn't've", "should not have"),
    ];

    #[test]
    fn contractions_match_oracle_lexicon() {
        for (raw, expected) in CONTRACTION_ORACLE {
            assert_eq!(normalize_text(raw), *expected, "contraction {raw}");
        }
    }

    #[test]
    fn empty_passes_through() {
        assert_eq!(normalize_text(""), "");
    }

    #[test]
    fn lemmatizes_single_words() {
        assert_eq!(normalize_text("engaged"), "engage");
        assert_eq!(normalize_text("dating"), "date");
        assert_eq!(normalize_text("sisters"), "sister");
        assert_eq!(normalize_text("married"), "marry");
        assert_eq!(normalize_text("stopped"), "stop");
        assert_eq!(normalize_text("went"), "go");
        assert_eq!(normalize_text("Engaged"), "Engage");
        // not in the lexicon: untouched
        assert_eq!(normalize_text("Monica"), "Monica");
        assert_eq!(normalize_text("this"), "this");
        assert_eq!(normalize_text("need"), "need");
        assert_eq!(normalize_text("thing"), "thing");
    }

    #[test]
    fn possessives_keep_suffix() {
        assert_eq!(normalize_text("Monica's sisters"), "Monica's sister");
    }

    #[test]
    fn irregular_targets_are_lexicon_entries() {
        for (_, base) in IRREGULAR {
            assert!(lexicon().contains(base), "{base} missing from lexicon");
        }
    }

    #[test]
    fn alignment_tracks_rewrites() {
        let raw = "Monica and I're engaged!";
        let edited = normalize_with_alignment(raw);
        assert_eq!(edited.text(), "Monica and I are engage!");
        // "engaged" at chars 16..23
        let mapped = edited.map_span(16..23).unwrap();
        assert_eq!(
            super::super::types::char_slice(edited.text(), mapped.start, mapped.end),
            "engage"
        );
        // "Monica" unaffected
        assert_eq!(edited.map_span(0..6), Some(0..6));
    }

    fn random_sentence(rng: &mut ChaCha8Rng) -> String {
        const POOL: &[&str] = &[
            "Monica",
            "and",
            "I",
            "are",
            "engaged",
            "don't",
            "I'm",
            "sisters",
            "dating",
            "went",
            "the",
            "boss",
            "Speaker",
            "2",
            "it's",
            "WON'T",
            "we've",
            "married",
            "Ross's",
            "studies",
            "running",
            "x",
            "ok",
            "hmm",
            "théâtre",
            "naïve",
            "'quoted'",
            "can't",
            "Does",
            "children",
            "loved",
            "hopping",
            "need",
            "thing",
            "bus",
            "news",
            "iPhone",
            "O'Brien",
            "rock'n'roll",
        ];
        const PUNCT: &[&str] = &[" ", " ", " ", ", ", ". ", "! ", "?", "...", " - ", "  "];
        let n = rng.random_range(0..14);
        let mut s = String::new();
        for _ in 0..n {
            s.push_str(POOL[rng.random_range(0..POOL.len())]);
            s.push_str(PUNCT[rng.random_range(0..PUNCT.len())]);
        }
        s
    }

    #[test]
    fn idempotent_on_fuzz_corpus() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let s = random_sentence(&mut rng);
            let once = normalize_text(&s);
            let twice = normalize_text(&once);
            assert_eq!(once, twice, "not idempotent on {s:?}");
        }
    }

    proptest::proptest! {
        #[test]
        fn idempotent_on_arbitrary_text(s in "\\PC{0,40}") {
            let once = normalize_text(&s);
            proptest::prop_assert_eq!(normalize_text(&once), once);
        }

        #[test]
        fn verbatim_characters_map_back(s in "[a-zA-Z' .,!?]{0,40}") {
            let edited = normalize_with_alignment(&s);
            let len = s.chars().count();
            for i in 0..len {
                if let Some(r) = edited.map_span(i..i + 1) {
                    proptest::prop_assert!(r.end <= edited.text().chars().count());
                }
            }
        }
    }
}
