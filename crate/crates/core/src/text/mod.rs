//! Spelling rules, rare words, biasing lists and transcript perturbation.

mod biasing;
mod freq;
mod perturb;
mod rules;
mod vocab;

pub use biasing::{build_biasing_list, BiasingList};
pub use freq::{rare_words, FrequencyTable};
pub use perturb::{drop_no_rare_utterances, perturb_utterance, perturb_word};
pub use rules::{RuleReport, SpellingRuleSet, ENGLISH_RULES};
pub use vocab::CharVocab;

/// Lowercase, strip punctuation except apostrophes, collapse whitespace.
pub fn normalize(text: &str) -> alloc::string::String {
    let mut out = alloc::string::String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
            continue;
        }
        if !(c.is_alphanumeric() || c == '\'') {
            // Punctuation separates nothing: "o.k." -> "ok"; "a,b" -> "ab".
            continue;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        for l in c.to_lowercase() {
            out.push(l);
        }
    }
    out
}
