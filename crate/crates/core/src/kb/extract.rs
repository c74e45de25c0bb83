//! Pattern-based triple extraction from captions.
//!
//! Captions are tokenized on whitespace, lowercased and stripped of
//! surrounding punctuation. Determiners, auxiliaries, numerals and common
//! adjectives are dropped. The remaining tokens are tagged as noun, verb,
//! preposition or clause boundary and scanned left to right for
//!
//! 1. `N V N`   ("person riding horse")
//! 2. `N V P N` ("horse standing on beach")
//! 3. `N P N`   ("cup on table")
//!
//! Matching resumes at the object noun, so chained clauses yield several
//! triples. The relation string is the verb, the verb plus preposition, or
//! the preposition alone.

use super::RelationTriple;

const STOP_WORDS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "some", "any", "his", "her", "their", "its", "my", "your",
    "our", "one", "two", "three", "four", "five", "six", "several", "many", "few", "another", "other", "each", "every",
    "is", "are", "was", "were", "be", "been", "being", "am", "it", "there", "very", "just", "also",
];

const ADJECTIVES: &[&str] = &[
    "big",
    "small",
    "large",
    "little",
    "tiny",
    "huge",
    "young",
    "old",
    "new",
    "white",
    "black",
    "red",
    "blue",
    "green",
    "yellow",
    "brown",
    "gray",
    "grey",
    "orange",
    "pink",
    "purple",
    "dark",
    "bright",
    "tall",
    "short",
    "long",
    "beautiful",
    "pretty",
    "happy",
    "wooden",
    "empty",
    "full",
    "open",
    "closed",
    "clean",
    "dirty",
    "wet",
    "dry",
    "hot",
    "cold",
    "cute",
    "busy",
    "sunny",
    "snowy",
    "green",
    "colorful",
    "striped",
    "metal",
    "plastic",
    "glass",
    "single",
];

const BOUNDARIES: &[&str] = &["and", "or", "but", "while", "as", "who", "which", "where", "when"];

const PREPOSITIONS: &[&str] = &[
    "on",
    "in",
    "at",
    "of",
    "with",
    "under",
    "over",
    "above",
    "below",
    "beneath",
    "behind",
    "beside",
    "near",
    "inside",
    "outside",
    "into",
    "onto",
    "by",
    "from",
    "along",
    "across",
    "against",
    "between",
    "among",
    "through",
    "around",
    "atop",
    "underneath",
    "toward",
    "towards",
    "within",
    "upon",
    "past",
];

/// Prepositions spanning several tokens, merged into one before tagging.
const MULTIWORD_PREPOSITIONS: &[&[&str]] = &[
    &["in", "front", "of"],
    &["on", "top", "of"],
    &["next", "to"],
    &["close", "to"],
    &["in", "middle", "of"],
];

const VERBS: &[&str] = &[
    "ride",
    "rides",
    "hold",
    "holds",
    "wear",
    "wears",
    "sit",
    "sits",
    "stand",
    "stands",
    "walk",
    "walks",
    "eat",
    "eats",
    "carry",
    "carries",
    "watch",
    "watches",
    "play",
    "plays",
    "look",
    "looks",
    "lie",
    "lies",
    "lays",
    "hang",
    "hangs",
    "use",
    "uses",
    "has",
    "have",
    "cover",
    "covers",
    "covered",
    "parked",
    "fly",
    "flies",
    "throw",
    "throws",
    "catch",
    "catches",
    "pull",
    "pulls",
    "push",
    "pushes",
    "lean",
    "leans",
    "drink",
    "drinks",
    "run",
    "runs",
    "jump",
    "jumps",
    "cross",
    "crosses",
    "graze",
    "grazes",
    "chase",
    "chases",
    "filled",
    "attached",
    "mounted",
    "painted",
    "made",
    "grow",
    "grows",
    "rest",
    "rests",
    "read",
    "reads",
    "wait",
    "waits",
    "drive",
    "drives",
    "surrounded",
    "contains",
    "feeds",
    "kicks",
    "hits",
    "swings",
    "touches",
    "follows",
    "faces",
    "sat",
    "stood",
    "rode",
    "held",
    "wore",
];

/// Nouns ending in "-ing" that must not be tagged as verbs.
const ING_NOUNS: &[&str] = &[
    "building",
    "ceiling",
    "clothing",
    "king",
    "ring",
    "thing",
    "something",
    "nothing",
    "anything",
    "everything",
    "evening",
    "morning",
    "painting",
    "wedding",
    "swing",
    "wing",
    "string",
    "spring",
    "railing",
    "awning",
    "icing",
    "frosting",
    "lightning",
    "sibling",
    "pudding",
    "dumpling",
    "stuffing",
    "topping",
    "ping",
    "bing",
    "ding",
    "sing",
    "sling",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tag {
    Noun,
    Verb,
    Prep,
    Boundary,
}

fn normalize_token(raw: &str) -> String {
    raw.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase()
}

fn is_verb(token: &str) -> bool {
    if VERBS.contains(&token) {
        return true;
    }
    token.len() >= 5 && token.ends_with("ing") && !ING_NOUNS.contains(&token)
}

fn tag(token: &str) -> Tag {
    if BOUNDARIES.contains(&token) {
        Tag::Boundary
    } else if PREPOSITIONS.contains(&token) || token.contains(' ') {
        Tag::Prep
    } else if is_verb(token) {
        Tag::Verb
    } else {
        Tag::Noun
    }
}

fn merge_multiword(tokens: Vec<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    'outer: while i < tokens.len() {
        for phrase in MULTIWORD_PREPOSITIONS {
            let end = i + phrase.len();
            if end <= tokens.len() && tokens[i..end].iter().zip(phrase.iter()).all(|(a, b)| a == b) {
                out.push(phrase.join(" "));
                i = end;
                continue 'outer;
            }
        }
        out.push(tokens[i].clone());
        i += 1;
    }
    out
}

/// Extracts relational triples from a single caption line.
///
/// Every returned triple has `count == 1`. Captions without a match yield
/// an empty vector.
pub fn extract_triples(caption: &str) -> Vec<RelationTriple> {
    let tokens: Vec<String> = caption
        .split_whitespace()
        .map(normalize_token)
        .filter(|t| !t.is_empty())
        .filter(|t| !STOP_WORDS.contains(&t.as_str()) && !ADJECTIVES.contains(&t.as_str()))
        .collect();
    let tokens = merge_multiword(tokens);
    let tags: Vec<Tag> = tokens.iter().map(|t| tag(t)).collect();

    let triple = |s: usize, rel: String, o: usize| RelationTriple {
        subject: tokens[s].clone(),
        relation: rel,
        object: tokens[o].clone(),
        count: 1,
    };
    let at = |i: usize| tags.get(i).copied();

    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if tags[i] != Tag::Noun {
            i += 1;
            continue;
        }
        match (at(i + 1), at(i + 2), at(i + 3)) {
            (Some(Tag::Verb), Some(Tag::Prep), Some(Tag::Noun)) => {
                let rel = format!("{} {}", tokens[i + 1], tokens[i + 2]);
                out.push(triple(i, rel, i + 3));
                i += 3;
            }
            (Some(Tag::Verb), Some(Tag::Noun), _) => {
                out.push(triple(i, tokens[i + 1].clone(), i + 2));
                i += 2;
            }
            (Some(Tag::Prep), Some(Tag::Noun), _) => {
                out.push(triple(i, tokens[i + 1].clone(), i + 2));
                i += 2;
            }
            _ => i += 1,
        }
    }
    out
}
